from typing import List, Optional

from pydantic import BaseModel, Field, computed_field

from blackwell_mdp.schemas.mdp import Policy


class RegretReport(BaseModel):
    """Blackwell regret of a policy learned at `gamma_learn`."""
    gamma_learn: float
    gamma_star: float
    gamma_prime: float
    blackwell_regret: float = Field(..., ge=0)
    standard_regret_at_gamma_prime: float = Field(..., ge=0)


class LemmaCheck(BaseModel):
    r_b: float
    r_at_gamma_star: float
    agree: bool


class GapReport(BaseModel):
    state: str
    gamma: float
    action_gap: Optional[float] = Field(None, ge=0)
    policy_gap: float = Field(..., ge=0)
    witness_policy: Policy
    mag: Optional[float] = Field(None, ge=0)


class PivotRow(BaseModel):
    gamma: float
    state: str
    policy_gap: float = Field(..., ge=0)
    witness: Policy


class ChainCheck(BaseModel):
    """Inequality chain at the pivot state for one myopic discount.

    `witness` must beat beta at the pivot. It equals the policy-gap witness of the
    matching PivotRow unless that policy lies below beta there, in which case it is
    the closest policy above beta.
    """
    gamma: float
    state: str
    witness: Policy
    beta_value: float
    witness_value: float
    witness_value_at_star: float
    beta_value_at_star: float
    beta_below_witness: bool
    witness_increases: bool
    witness_below_beta_at_star: bool
    policy_gap: float
    proof_bound: float
    within_proof_bound: bool

    @computed_field
    @property
    def holds(self) -> bool:
        return self.beta_below_witness and self.witness_increases and self.witness_below_beta_at_star


class PivotScan(BaseModel):
    gamma_star: float
    gammas: List[float] = []
    rows: List[PivotRow] = []
    pivot: Optional[str] = None
    ties: List[str] = []
    chain: List[ChainCheck] = []
    vacuous: bool = False
    warnings: List[str] = []

    def gaps_at(self, state: str) -> List[float]:
        """Policy gaps of beta at `state`, in scan order."""
        return [row.policy_gap for row in self.rows if row.state == state]
