import math
from typing import Any, Dict, List

from pydantic import BaseModel, model_validator


def _non_finite(value: Any, path: str):
    if isinstance(value, float) and not math.isfinite(value):
        return path
    if isinstance(value, dict):
        items = value.items()
    elif isinstance(value, (list, tuple)):
        items = enumerate(value)
    else:
        return None
    for key, item in items:
        found = _non_finite(item, f"{path}.{key}")
        if found:
            return found
    return None


class OutputEnvelope(BaseModel):
    """Single output schema shared by every subcommand."""
    command: str
    inputs: Dict[str, Any] = {}
    results: Dict[str, Any] = {}
    warnings: List[str] = []

    @model_validator(mode="after")
    def check_finite(self) -> "OutputEnvelope":
        for name in ("inputs", "results"):
            found = _non_finite(getattr(self, name), name)
            if found:
                raise ValueError(f"non-finite number at {found}")
        return self
