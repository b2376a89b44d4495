from typing import List, Optional, Sequence, Tuple

import numpy as np

from blackwell_mdp.core.exceptions import (
    DiscountRangeError,
    HypothesisViolationError,
    NoAlternativeActionError,
)
from blackwell_mdp.core.logger import get_logger
from blackwell_mdp.schemas.mdp import Mdp, Policy
from blackwell_mdp.schemas.regret import (
    ChainCheck,
    GapReport,
    LemmaCheck,
    PivotRow,
    PivotScan,
    RegretReport,
)
from blackwell_mdp.services.blackwell_service import BlackwellService
from blackwell_mdp.services.solver_service import check_gamma

logger = get_logger(__name__)

LEMMA_TOLERANCE = 1e-9
# slack on the non-strict inequality at gamma*
CHAIN_TOLERANCE = 1e-7
PROOF_BOUND_SLACK = 10.0
DEFAULT_PIVOT_ORDERS = range(1, 9)


class RegretService:
    """Service for regrets, action and policy gaps, and pivot states."""

    def __init__(self, mdp: Mdp, blackwell: Optional[BlackwellService] = None):
        self.mdp = mdp
        self.blackwell = blackwell or BlackwellService(mdp)
        self.solver = self.blackwell.solver
        self.model = self.solver.model

    def _expected(self, difference: np.ndarray, label: str) -> float:
        value = float(self.model.initial @ difference)
        if value < 0:
            if value < -LEMMA_TOLERANCE * max(1.0, float(np.abs(difference).max())):
                logger.warning(f"{label} is negative ({value:.3e}); clamped to 0")
            value = 0.0
        return value

    def standard_regret(self, policy: Policy, gamma: float) -> float:
        """Expected shortfall of a policy against the gamma-optimal values."""
        gamma = check_gamma(gamma)
        _, optimal, _ = self.solver.optimal_indices(gamma)
        values = self.solver.values_for(self.model.policy_indices(policy), gamma)
        return self._expected(optimal - values, "standard regret")

    def blackwell_regret(self, policy: Policy, gamma_learn: float) -> RegretReport:
        """Regret against beta, both evaluated at max(gamma*, gamma_learn)."""
        gamma_learn = check_gamma(gamma_learn)
        report = self.blackwell.find_blackwell()
        gamma_prime = max(report.gamma_star, gamma_learn)

        beta = self.solver.values_for(self.model.policy_indices(report.beta), gamma_prime)
        values = self.solver.values_for(self.model.policy_indices(policy), gamma_prime)
        return RegretReport(
            gamma_learn=gamma_learn,
            gamma_star=report.gamma_star,
            gamma_prime=gamma_prime,
            blackwell_regret=self._expected(beta - values, "Blackwell regret"),
            standard_regret_at_gamma_prime=self.standard_regret(policy, gamma_prime)
        )

    def lemma1_check(self, policy: Policy, gamma_learn: float) -> LemmaCheck:
        """For myopic gamma_learn the Blackwell regret equals the regret at gamma*."""
        gamma_learn = check_gamma(gamma_learn)
        gamma_star = self.blackwell.find_blackwell().gamma_star
        if gamma_learn >= gamma_star:
            raise HypothesisViolationError(
                f"gamma_learn {gamma_learn} is not below gamma* {gamma_star}; the identity does not apply"
            )
        r_b = self.blackwell_regret(policy, gamma_learn).blackwell_regret
        r_star = self.standard_regret(policy, gamma_star)
        return LemmaCheck(r_b=r_b, r_at_gamma_star=r_star, agree=abs(r_b - r_star) <= LEMMA_TOLERANCE)

    # -- gaps ----------------------------------------------------------

    def _require_alternative(self, state: str) -> int:
        index = self.model.state_index[state]
        if len(self.model.available[index]) < 2:
            raise NoAlternativeActionError(f"no alternative policy exists at {state!r}: single action")
        return index

    def action_gap(self, gamma: float, state: str) -> float:
        """Optimal value minus the best Q-value of the other actions at `state`."""
        gamma = check_gamma(gamma)
        index = self._require_alternative(state)
        indices, values, _ = self.solver.optimal_indices(gamma)
        q = self.solver.q_array(values, gamma)[index]
        others = [a for a in self.model.available[index] if a != indices[index]]
        return max(0.0, float(values[index] - q[others].max()))

    def max_action_gap(self, policy: Policy, gamma: float) -> float:
        """Largest per-state spread of the policy's Q-values."""
        gamma = check_gamma(gamma)
        values = self.solver.values_for(self.model.policy_indices(policy), gamma)
        q = self.solver.q_array(values, gamma)
        spread = np.nanmax(q, axis=1) - np.nanmin(q, axis=1)
        return max(0.0, float(spread.max()))

    def _policy_gap(self, indices: np.ndarray, gamma: float, index: int) -> Tuple[float, np.ndarray]:
        table = self.blackwell.policy_table()
        candidates = table[table[:, index] != indices[index]]
        own = self.solver.values_for(indices, gamma)[index]
        gaps = np.abs(own - self.solver.table_values(candidates, gamma)[:, index])
        best = int(np.argmin(gaps))
        return float(gaps[best]), candidates[best]

    def policy_gap(self, policy: Policy, gamma: float, state: str) -> GapReport:
        """Smallest value difference at `state` to any policy acting differently there."""
        gamma = check_gamma(gamma)
        index = self._require_alternative(state)
        gap, witness = self._policy_gap(self.model.policy_indices(policy), gamma, index)
        return GapReport(
            state=state,
            gamma=gamma,
            policy_gap=gap,
            witness_policy=self.model.policy_from_indices(witness)
        )

    def gap_report(self, policy: Policy, gamma: float, state: str) -> GapReport:
        """Action gap, policy gap and MAG together."""
        report = self.policy_gap(policy, gamma, state)
        return report.model_copy(update={
            "action_gap": self.action_gap(gamma, state),
            "mag": self.max_action_gap(policy, gamma)
        })

    # -- pivot states --------------------------------------------------

    def _witness(self, beta: np.ndarray, gamma: float, index: int, closest: np.ndarray) -> np.ndarray:
        """Closest policy that acts differently at the pivot and beats beta there.

        This is the policy-gap minimizer `closest` whenever that policy beats beta;
        otherwise the minimizer sits below beta and the chain needs the nearest
        policy above it.
        """
        beta_value = self.solver.values_for(beta, gamma)[index]
        if self.solver.values_for(closest, gamma)[index] > beta_value:
            return closest
        table = self.blackwell.policy_table()
        candidates = table[table[:, index] != beta[index]]
        advantage = self.solver.table_values(candidates, gamma)[:, index] - beta_value
        winning = np.flatnonzero(advantage > 0)
        if winning.size == 0:
            return closest
        return candidates[winning[np.argmin(advantage[winning])]]

    def _chain_check(
        self,
        beta: np.ndarray,
        gamma: float,
        gamma_star: float,
        index: int,
        policy_gap: float,
        closest: np.ndarray
    ) -> ChainCheck:
        witness = self._witness(beta, gamma, index, closest)
        beta_value = self.solver.values_for(beta, gamma)[index]
        beta_star = self.solver.values_for(beta, gamma_star)[index]
        witness_value = self.solver.values_for(witness, gamma)[index]
        witness_star = self.solver.values_for(witness, gamma_star)[index]
        proof_bound = PROOF_BOUND_SLACK * (beta_star - beta_value)
        return ChainCheck(
            gamma=gamma,
            state=self.mdp.states[index],
            witness=self.model.policy_from_indices(witness),
            beta_value=beta_value,
            witness_value=witness_value,
            witness_value_at_star=witness_star,
            beta_value_at_star=beta_star,
            beta_below_witness=bool(beta_value < witness_value),
            witness_increases=bool(witness_value < witness_star),
            witness_below_beta_at_star=bool(witness_star <= beta_star + CHAIN_TOLERANCE * max(1.0, abs(beta_star))),
            policy_gap=policy_gap,
            proof_bound=proof_bound,
            within_proof_bound=bool(policy_gap < proof_bound)
        )

    def pivot_scan(self, gamma_sequence: Optional[Sequence[float]] = None) -> PivotScan:
        """Policy gaps of beta approaching gamma* from below, and the pivot state."""
        report = self.blackwell.find_blackwell()
        gamma_star = report.gamma_star
        if gamma_star == 0:
            message = "gamma* = 0: no myopic discount exists, the scan is vacuous"
            logger.info(message)
            return PivotScan(gamma_star=0.0, vacuous=True, warnings=[message])

        if gamma_sequence is None:
            gammas = [gamma_star - 10.0 ** -k for k in DEFAULT_PIVOT_ORDERS if gamma_star - 10.0 ** -k >= 0]
        else:
            gammas = [float(g) for g in gamma_sequence]
            for gamma in gammas:
                if not 0 <= gamma < gamma_star:
                    raise DiscountRangeError(f"scan discount {gamma} outside [0, gamma* = {gamma_star})")
        if not gammas:
            raise DiscountRangeError("empty discount sequence")

        beta = self.model.policy_indices(report.beta)
        states = [i for i in range(self.model.n_states) if len(self.model.available[i]) >= 2]
        if not states:
            return PivotScan(gamma_star=gamma_star, gammas=gammas, vacuous=True,
                             warnings=["every state has a single action"])

        rows: List[PivotRow] = []
        witnesses = {}
        for gamma in gammas:
            for index in states:
                gap, witness = self._policy_gap(beta, gamma, index)
                witnesses[(gamma, index)] = (gap, witness)
                rows.append(PivotRow(
                    gamma=gamma,
                    state=self.mdp.states[index],
                    policy_gap=gap,
                    witness=self.model.policy_from_indices(witness)
                ))
        closest = max(gammas)
        final = {index: witnesses[(closest, index)][0] for index in states}
        smallest = min(final.values())
        ties = [i for i in states if final[i] <= smallest + 1e-12 * max(1.0, smallest)]
        pivot = ties[0]

        chain = []
        for gamma in gammas:
            gap, witness = witnesses[(gamma, pivot)]
            chain.append(self._chain_check(beta, gamma, gamma_star, pivot, gap, witness))

        warnings = []
        if len(ties) > 1:
            warnings.append(f"{len(ties)} states tie for the smallest policy gap")
        failed = [c.gamma for c in chain if not c.holds]
        if failed:
            warnings.append(f"inequality chain fails at the pivot for gamma in {failed}")
        logger.info(f"Pivot state {self.mdp.states[pivot]!r} with policy gap {smallest:.3e} at gamma={closest}")
        return PivotScan(
            gamma_star=gamma_star,
            gammas=gammas,
            rows=rows,
            pivot=self.mdp.states[pivot],
            ties=[self.mdp.states[i] for i in ties],
            chain=chain,
            warnings=warnings
        )
