from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Analysis settings loaded from environment variables."""

    POLICY_CAP: int = 1_000_000
    TOLERANCE: float = 1e-10
    PROBE_GAMMA: float = 1.0 - 1e-6
    REFINED_PROBE_GAMMA: float = 1.0 - 1e-9
    SCAN_STEP_EXPONENT: int = 12
    MAX_STEPS: int = 10_000_000
    WORKERS: int = 1
    LOG_LEVEL: str = "WARNING"
    LOG_FILE: Optional[str] = None

    model_config = SettingsConfigDict(
        env_prefix="BLACKWELL_MDP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True
    )


settings = Settings()
