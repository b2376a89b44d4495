import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from blackwell_mdp.config import settings
from blackwell_mdp.core.exceptions import (
    HypothesisViolationError,
    InvalidParameterError,
    ProbeNonStationaryError,
)
from blackwell_mdp.core.logger import get_logger
from blackwell_mdp.schemas.blackwell import (
    BlackwellReport,
    ComparisonMode,
    Crossover,
    DiscountClassification,
    MyopiaWitness,
    NDiscountComparison,
    Ordering,
    Verdict,
)
from blackwell_mdp.schemas.distracting import Family
from blackwell_mdp.schemas.mdp import Mdp, Policy
from blackwell_mdp.services import generator_service
from blackwell_mdp.services.solver_service import SolverService, check_gamma

logger = get_logger(__name__)

# relative tolerance on value comparisons
VALUE_TOLERANCE = 1e-9
NUMERIC_ORDERS = range(3, 9)
REFERENCE_TWO_STATE_GAMMA = 0.84724541


def value_tolerance(values: np.ndarray) -> float:
    return VALUE_TOLERANCE * max(1.0, float(np.abs(values).max()))


class BlackwellService:
    """Service for Blackwell optimality: beta, gamma*, discount classification."""

    def __init__(self, mdp: Mdp, solver: Optional[SolverService] = None, cap: Optional[int] = None):
        self.mdp = mdp
        self.solver = solver or SolverService(mdp)
        self.model = self.solver.model
        self.cap = cap
        self._reports: Dict[float, BlackwellReport] = {}
        self._table: Optional[np.ndarray] = None

    def policy_table(self) -> np.ndarray:
        if self._table is None:
            self._table = self.model.policy_table(self.cap)
        return self._table

    # -- beta selection ------------------------------------------------

    def _bias_optimal_rows(self, table: np.ndarray) -> np.ndarray:
        """Rows that are lexicographically (gain, bias)-maximal at every state."""
        gains, biases = [], []
        for row in table:
            gain, bias, _ = self.solver.gain_bias_arrays(row)
            gains.append(gain)
            biases.append(bias)
        gains, biases = np.array(gains), np.array(biases)

        gain_ok = np.all(gains >= gains.max(axis=0) - value_tolerance(gains), axis=1)
        if not gain_ok.any():
            return np.arange(len(table))
        candidate_bias = biases[gain_ok]
        bias_ok = np.all(biases >= candidate_bias.max(axis=0) - value_tolerance(biases), axis=1)
        rows = np.flatnonzero(gain_ok & bias_ok)
        return rows if rows.size else np.arange(len(table))

    def _select_beta(self, table: np.ndarray, candidates: np.ndarray, probe: float) -> int:
        values = self.solver.table_values(table[candidates], probe)
        best = values.max(axis=0)
        optimal = np.all(values >= best - value_tolerance(values), axis=1)
        return int(candidates[np.argmax(optimal)])

    # -- crossover search ----------------------------------------------

    def _scan_grid(self, probe: float) -> np.ndarray:
        step = 2.0 ** -settings.SCAN_STEP_EXPONENT
        grid = np.arange(0.0, 1.0, step)
        tail = [1.0 - 10.0 ** -k for k in (4, 5, 6)] + [probe]
        return np.unique(np.concatenate([grid, [g for g in tail if grid[-1] < g < 1.0]]))

    def _difference(self, beta: np.ndarray, competitor: np.ndarray, state: int, gamma: float) -> float:
        return float(self.solver.values_for(beta, gamma)[state] - self.solver.values_for(competitor, gamma)[state])

    def _refine_root(
        self,
        beta: np.ndarray,
        competitor: np.ndarray,
        state: int,
        low: float,
        high: float,
        tolerance: float
    ) -> float:
        """Locate the sign change in [low, high]; returns the upper end of the final bracket.

        At the returned discount beta is not beaten by the competitor at `state`.
        """
        def difference(gamma: float) -> float:
            return self._difference(beta, competitor, state, gamma)

        # tied at the grid point itself
        if difference(high) <= 0:
            return high
        root = brentq(difference, low, high, xtol=tolerance)
        upper = min(high, root + 2.0 * tolerance)
        return upper if difference(upper) >= 0 else high

    def _crossovers(
        self,
        table: np.ndarray,
        beta_row: int,
        grid: np.ndarray,
        tolerance: float
    ) -> Tuple[List[Crossover], List[int], bool]:
        beta = table[beta_row]
        beta_curve = self.solver.value_curves(beta, grid)
        scale = VALUE_TOLERANCE * np.maximum(1.0, np.abs(beta_curve).max(axis=1))

        crossovers, tied = [], []
        beaten_at_top = False
        for row, competitor in enumerate(table):
            if row == beta_row:
                continue
            difference = beta_curve - self.solver.value_curves(competitor, grid)
            if np.all(np.abs(difference) <= scale[:, None]):
                tied.append(row)
                continue
            for state in range(self.model.n_states):
                negative = np.flatnonzero(difference[:, state] < -scale)
                if negative.size == 0:
                    continue
                last = negative[-1]
                if last == len(grid) - 1:
                    beaten_at_top = True
                    continue
                root = self._refine_root(beta, competitor, state, grid[last], grid[last + 1], tolerance)
                crossovers.append(Crossover(
                    competitor=self.model.policy_from_indices(competitor),
                    state=self.mdp.states[state],
                    gamma=root,
                    gap=abs(self._difference(beta, competitor, state, root))
                ))
        return crossovers, tied, beaten_at_top

    def _certify(self, table: np.ndarray, beta_row: int, gamma_star: float) -> Tuple[List[float], bool]:
        grid = [1.0 - 10.0 ** -k for k in range(1, 7) if 1.0 - 10.0 ** -k >= gamma_star]
        for gamma in grid:
            values = self.solver.table_values(table, gamma)
            if np.any(values[beta_row] < values.max(axis=0) - value_tolerance(values)):
                return grid, False
        return grid, True

    def find_blackwell(self, tolerance: Optional[float] = None) -> BlackwellReport:
        """Locate beta and the Blackwell threshold gamma*."""
        tolerance = settings.TOLERANCE if tolerance is None else tolerance
        if tolerance <= 0:
            raise InvalidParameterError(f"tolerance must be positive, got {tolerance}")
        if tolerance in self._reports:
            return self._reports[tolerance]

        table = self.policy_table()
        candidates = self._bias_optimal_rows(table)
        warnings: List[str] = []

        for probe in (settings.PROBE_GAMMA, settings.REFINED_PROBE_GAMMA):
            beta_row = self._select_beta(table, candidates, probe)
            crossovers, tied, beaten_at_top = self._crossovers(table, beta_row, self._scan_grid(probe), tolerance)
            gamma_star = max((c.gamma for c in crossovers), default=0.0)
            certified, ok = self._certify(table, beta_row, gamma_star)
            if ok and not beaten_at_top:
                break
            message = f"beta selected at probe {probe} lost optimality on the certification grid"
            logger.warning(message)
            warnings.append(message)
        else:
            raise ProbeNonStationaryError(
                f"no policy stays optimal on the certification grid up to probe {settings.REFINED_PROBE_GAMMA}"
            )

        beta = self.model.policy_from_indices(table[beta_row])
        tied_policies = [self.model.policy_from_indices(table[row]) for row in tied]
        markers = [Crossover(competitor=p, gamma=0.0, gap=0.0, tied=True) for p in tied_policies]
        warnings.extend(self._family_warnings(gamma_star))

        report = BlackwellReport(
            beta=beta,
            gamma_star=gamma_star,
            crossovers=crossovers + markers,
            certified_grid=certified,
            tolerance=tolerance,
            probe_gamma=probe,
            realizable_measure=1.0 - gamma_star,
            tied=tied_policies,
            warnings=warnings
        )
        logger.info(f"Blackwell policy {beta.label()} with gamma*={gamma_star:.12f}")
        self._reports[tolerance] = report
        return report

    def _family_warnings(self, gamma_star: float) -> List[str]:
        spec = generator_service.recognize_family(self.mdp)
        if spec is None or spec.family != Family.TWO_STATE:
            return []
        reference = generator_service.REFERENCE_TWO_STATE
        if not all(math.isclose(getattr(spec, k), v, rel_tol=1e-12) for k, v in reference.items()):
            return []
        alternative = generator_service.gamma_star_closed_form(spec.model_copy(update={"p_escape": 0.02}))
        return [
            f"gamma* = {gamma_star:.10f} for this two-state instance disagrees with the reference "
            f"discount {REFERENCE_TWO_STATE_GAMMA}, quoted as lying just above gamma*; "
            f"with escape probability 0.02 instead of 0.002 the threshold would be {alternative:.8f}"
        ]

    # -- classification ------------------------------------------------

    def classify_discount(self, gamma: float, tolerance: Optional[float] = None) -> DiscountClassification:
        """Myopic iff gamma lies below gamma* by more than the tolerance."""
        gamma = check_gamma(gamma)
        report = self.find_blackwell(tolerance)
        myopic = gamma < report.gamma_star - report.tolerance
        return DiscountClassification(
            gamma=gamma,
            verdict=Verdict.MYOPIC if myopic else Verdict.BLACKWELL_REALIZABLE,
            gamma_star=report.gamma_star
        )

    def myopia_witness(self, gamma: float) -> MyopiaWitness:
        """Policy and state where beta is strictly beaten at a myopic discount."""
        gamma = check_gamma(gamma)
        report = self.find_blackwell()
        if gamma >= report.gamma_star - report.tolerance:
            raise HypothesisViolationError(f"gamma {gamma} is not myopic (gamma* = {report.gamma_star})")
        table = self.policy_table()
        values = self.solver.table_values(table, gamma)
        beta_values = self.solver.values_for(self.model.policy_indices(report.beta), gamma)
        advantage = values - beta_values
        row, state = np.unravel_index(np.argmax(advantage), advantage.shape)
        return MyopiaWitness(
            gamma=gamma,
            policy=self.model.policy_from_indices(table[row]),
            state=self.mdp.states[state],
            advantage=float(advantage[row, state])
        )

    # -- n-discount hierarchy ------------------------------------------

    def _exact_signs(self, first: np.ndarray, second: np.ndarray, n: int) -> np.ndarray:
        g1, b1, _ = self.solver.gain_bias_arrays(first)
        g2, b2, _ = self.solver.gain_bias_arrays(second)
        gain_signs = self._signs(g1 - g2, value_tolerance(np.concatenate([g1, g2])))
        if n == -1:
            return gain_signs
        bias_signs = self._signs(b1 - b2, value_tolerance(np.concatenate([b1, b2])))
        return np.where(gain_signs != 0, gain_signs, bias_signs)

    def _numeric_signs(self, first: np.ndarray, second: np.ndarray, n: int) -> Tuple[np.ndarray, bool]:
        gammas = np.array([1.0 - 10.0 ** -k for k in NUMERIC_ORDERS])
        v1 = self.solver.value_curves(first, gammas)
        v2 = self.solver.value_curves(second, gammas)
        signs = []
        for i, gamma in enumerate(gammas):
            # round-off of an |S|-dimensional solve grows like 1/(1-gamma)
            noise = 64 * np.finfo(float).eps * max(1.0, np.abs(v1[i]).max(), np.abs(v2[i]).max()) / (1.0 - gamma)
            scaled = (1.0 - gamma) ** (-n) * (v1[i] - v2[i])
            signs.append(np.where(np.abs(v1[i] - v2[i]) <= noise, 0, np.sign(scaled)).astype(int))
        last = np.array(signs[-3:])
        stable = bool(np.all(last == last[0]))
        return last[-1], stable

    @staticmethod
    def _signs(difference: np.ndarray, tolerance: float) -> np.ndarray:
        return np.where(np.abs(difference) <= tolerance, 0, np.sign(difference)).astype(int)

    def compare_n_discount(self, pi1: Policy, pi2: Policy, n: int) -> NDiscountComparison:
        """Order two policies at order n of the n-discount hierarchy."""
        if n < -1:
            raise InvalidParameterError(f"order n must be >= -1, got {n}")
        first, second = self.model.policy_indices(pi1), self.model.policy_indices(pi2)
        mode = ComparisonMode.EXACT if n <= 0 else ComparisonMode.NUMERIC
        warnings: List[str] = []
        if mode == ComparisonMode.NUMERIC:
            warnings.append(f"order {n} compared numerically on gamma = 1 - 10^-k, k = 3..8 (heuristic)")
            logger.warning(warnings[-1])

        if np.array_equal(first, second):
            return NDiscountComparison(n=n, ordering=Ordering.TIED, mode=mode, warnings=warnings)

        if mode == ComparisonMode.EXACT:
            signs = self._exact_signs(first, second, n)
        else:
            signs, stable = self._numeric_signs(first, second, n)
            if not stable:
                warnings.append(f"sign of the order-{n} difference is not stable on the last three grid points")
                return NDiscountComparison(n=n, ordering=Ordering.TIED, mode=mode, warnings=warnings)

        if np.all(signs >= 0) and np.any(signs > 0):
            ordering = Ordering.PI1_BETTER
        elif np.all(signs <= 0) and np.any(signs < 0):
            ordering = Ordering.PI2_BETTER
        else:
            ordering = Ordering.TIED
            if np.any(signs != 0):
                warnings.append(f"policies are incomparable at order {n}: each is better at some state")
        return NDiscountComparison(n=n, ordering=ordering, mode=mode, warnings=warnings)
