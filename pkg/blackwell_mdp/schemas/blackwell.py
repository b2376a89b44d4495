from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field

from blackwell_mdp.schemas.mdp import Policy


class Verdict(str, Enum):
    MYOPIC = "myopic"
    BLACKWELL_REALIZABLE = "blackwell_realizable"


class Ordering(str, Enum):
    PI1_BETTER = "pi1_better"
    PI2_BETTER = "pi2_better"
    TIED = "tied_at_order_n"


class ComparisonMode(str, Enum):
    EXACT = "exact"
    NUMERIC = "numeric"


class Crossover(BaseModel):
    """Largest discount at which a competitor stops beating beta at a state.

    Tied competitors (value-identical to beta on the whole scan) are kept
    as zero-gap markers with `tied=True`, `state=None` and `gamma=0`.
    """
    competitor: Policy
    state: Optional[str] = None
    gamma: float = Field(..., ge=0, lt=1)
    gap: float = Field(..., ge=0)
    tied: bool = False


class BlackwellReport(BaseModel):
    beta: Policy
    gamma_star: float = Field(..., ge=0, lt=1)
    crossovers: List[Crossover] = []
    certified_grid: List[float] = []
    tolerance: float
    probe_gamma: float
    realizable_measure: float
    tied: List[Policy] = []
    warnings: List[str] = []

    def is_blackwell(self, policy: Policy) -> bool:
        """True when the policy is beta or tied with it."""
        return policy == self.beta or policy in self.tied


class DiscountClassification(BaseModel):
    gamma: float
    verdict: Verdict
    gamma_star: float


class MyopiaWitness(BaseModel):
    """A policy that strictly beats beta at some state for a myopic discount."""
    gamma: float
    policy: Policy
    state: str
    advantage: float


class NDiscountComparison(BaseModel):
    n: int
    ordering: Ordering
    mode: ComparisonMode
    warnings: List[str] = []
