from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from blackwell_mdp.schemas.mdp import Mdp, Policy


class Family(str, Enum):
    CHAIN = "chain"
    TWO_STATE = "two_state"


class DistractingSpec(BaseModel):
    """Parameters of a distracting long-horizon MDP.

    `d` is the hitting distance of the high-reward state for the chain
    family; the two-state family is parameterised by `p_escape` instead
    and keeps `d` as the rounded expected hitting time.
    """
    family: Family
    d: int = Field(1, ge=1)
    r_d: float = Field(..., gt=0)
    r_max: float = Field(..., gt=0)
    p_escape: Optional[float] = Field(None, gt=0, le=1)

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def check_parameters(self) -> "DistractingSpec":
        if self.r_d >= self.r_max:
            raise ValueError(f"r_d {self.r_d} must be below r_max {self.r_max}")
        if self.family == Family.TWO_STATE and self.p_escape is None:
            raise ValueError("two_state family requires p_escape")
        return self


class Diameter(BaseModel):
    value: float = Field(..., ge=0)
    source: Optional[str] = None
    target: Optional[str] = None

    @property
    def pair(self) -> Tuple[Optional[str], Optional[str]]:
        return self.source, self.target


class HittingTimes(BaseModel):
    """Expected first hitting times of `target`, per starting state."""
    target: str
    states: List[str]
    times: List[float]
    policy: Optional[Policy] = None

    def at(self, state: str) -> float:
        return self.times[self.states.index(state)]


class AdversaryInstance(BaseModel):
    """Chain instance on which a fixed discount is myopic."""
    mdp: Mdp
    gamma: float
    known: Dict[str, float]
    solved: Dict[str, float]
    d: int
    r_d: float
    r_max: float
    gamma_star: float


class Corollary5Instance(BaseModel):
    """Chain instance where a non-gain-optimal policy is value-close to beta."""
    mdp: Mdp
    beta: Policy
    pi_tilde: Policy
    eps: float
    r_d: float
    gamma_star: float
    sup_value_gap: float = Field(..., ge=0)
    evaluation_gamma: float
    gap_at_evaluation_gamma: float = Field(..., ge=0)
    gain_gap: float


class TransientVerdict(BaseModel):
    verdict: bool
    policy: Optional[Policy] = None
    state: Optional[str] = None


class VmaxPoint(BaseModel):
    gamma: float
    vmax: float
    state: str


class VmaxTrend(BaseModel):
    """V_max along a discount grid with the transient-rewards diagnostic."""
    points: List[VmaxPoint]
    communicating: bool
    rewards_transient: bool
    bound: Optional[float] = None
    variation: float = 0.0
    warnings: List[str] = []
