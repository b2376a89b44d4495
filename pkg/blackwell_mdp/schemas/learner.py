from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from blackwell_mdp.config import settings
from blackwell_mdp.schemas.mdp import Policy


class LearnerConfig(BaseModel):
    """Delayed Q-learning parameters; `epsilon` is the update tolerance.

    When `m` is omitted the learner derives it from (epsilon, delta, gamma)
    and records the value it used in the trace.
    """
    gamma: float = Field(..., ge=0, lt=1)
    epsilon: float = Field(..., gt=0)
    delta: float = Field(0.1, gt=0, lt=1)
    m: Optional[int] = Field(None, ge=1)
    seed: int = 0
    max_steps: int = Field(default_factory=lambda: settings.MAX_STEPS, ge=1)
    gap_state: Optional[str] = None

    model_config = ConfigDict(extra="forbid", frozen=True)


class QUpdate(BaseModel):
    step: int
    state: str
    action: str
    before: float
    after: float


class LearnerTrace(BaseModel):
    steps_taken: int
    terminated_by: str
    terminal_state: Optional[str] = None
    greedy_policy: Policy
    m_used: int
    q_final: Dict[str, Dict[str, float]]
    visit_counts: Dict[str, Dict[str, int]]
    updates: List[QUpdate] = []
    empirical_policy_gap_at: Optional[Tuple[str, float]] = None

    @property
    def converged(self) -> bool:
        return self.terminated_by != "step_budget"


class RunRecord(BaseModel):
    run: int
    seed: int
    steps_taken: int
    terminated_by: str
    greedy_policy: Policy
    blackwell_optimal: bool
    gain_optimal: bool
    empirical_policy_gap: Optional[float] = None


class ExperimentRow(BaseModel):
    config: LearnerConfig
    runs: int
    m_used: int
    mean_steps: float
    std_steps: float
    blackwell_fraction: float
    gain_fraction: float
    gap_state: Optional[str] = None
    exact_policy_gap: Optional[float] = None
    records: List[RunRecord] = []


class ExperimentTable(BaseModel):
    rows: List[ExperimentRow] = []
