from typing import Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from blackwell_mdp.schemas.mdp import Policy


class ValueVector(BaseModel):
    """Discounted values of a policy at evaluation discount `gamma`."""
    gamma: float = Field(..., ge=0, lt=1)
    states: List[str]
    values: List[float]

    model_config = ConfigDict(frozen=True)

    def at(self, state: str) -> float:
        return self.values[self.states.index(state)]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class QTable(BaseModel):
    """Q-values of a policy; only defined (state, action) pairs are present."""
    gamma: float = Field(..., ge=0, lt=1)
    values: Dict[str, Dict[str, float]]

    model_config = ConfigDict(frozen=True)

    def at(self, state: str, action: str) -> float:
        return self.values[state][action]


class OptimalSolution(BaseModel):
    """Optimal policy for a fixed discount together with its values."""
    policy: Policy
    values: ValueVector
    iterations: int


class GainBias(BaseModel):
    """Per-state gain and bias of a policy."""
    states: List[str]
    gain: List[float]
    bias: List[float]
    recurrent_classes: List[List[str]]
    multichain: bool

    model_config = ConfigDict(frozen=True)

    def gain_at(self, state: str) -> float:
        return self.gain[self.states.index(state)]

    def bias_at(self, state: str) -> float:
        return self.bias[self.states.index(state)]
