from typing import List, Optional, Sequence

import networkx as nx
import numpy as np

from blackwell_mdp.core.exceptions import UnreachablePairError
from blackwell_mdp.core.logger import get_logger
from blackwell_mdp.core.markov import decompose, expected_absorption_times, transition_graph
from blackwell_mdp.schemas.distracting import Diameter, HittingTimes, TransientVerdict, VmaxPoint, VmaxTrend
from blackwell_mdp.schemas.mdp import Mdp, Policy
from blackwell_mdp.services.solver_service import SolverService, check_gamma

logger = get_logger(__name__)

HITTING_TOLERANCE = 1e-10
MAX_SWEEPS = 10_000_000


class StructureService:
    """Service for hitting times, diameter and reward-transience diagnostics."""

    def __init__(self, mdp: Mdp, solver: Optional[SolverService] = None, cap: Optional[int] = None):
        self.mdp = mdp
        self.solver = solver or SolverService(mdp)
        self.model = self.solver.model
        self.cap = cap

    def union_graph(self) -> nx.DiGraph:
        """Edges s -> s' that some action takes with positive probability."""
        return transition_graph(self.model.transitions.max(axis=1))

    def is_communicating(self) -> bool:
        return nx.is_strongly_connected(self.union_graph())

    # -- hitting times -------------------------------------------------

    def _check_reachable(self, target: int) -> None:
        graph = self.union_graph()
        reaching = nx.ancestors(graph, target)
        for source in range(self.model.n_states):
            if source != target and source not in reaching:
                raise UnreachablePairError(self.mdp.states[source], self.mdp.states[target])

    def _min_hitting_times(self, target: int) -> np.ndarray:
        """Shortest-expected-path values h(s) with h(target) = 0."""
        self._check_reachable(target)
        transitions = self.model.transitions.copy()
        transitions[:, :, target] = 0.0
        times = np.zeros(self.model.n_states)
        for _ in range(MAX_SWEEPS):
            costs = np.where(self.model.defined, 1.0 + transitions @ times, np.inf)
            updated = costs.min(axis=1)
            updated[target] = 0.0
            converged = np.abs(updated - times).max() < HITTING_TOLERANCE
            times = updated
            if converged:
                break
        else:
            logger.warning(f"Hitting-time iteration for {self.mdp.states[target]!r} did not converge")

        # exact values of the greedy stationary policy
        greedy = np.argmin(costs, axis=1)
        others = [i for i in range(self.model.n_states) if i != target]
        rows = transitions[others, greedy[others]][:, others]
        try:
            exact = np.linalg.solve(np.eye(len(others)) - rows, np.ones(len(others)))
        except np.linalg.LinAlgError:
            return times
        times[others] = exact
        return times

    def hitting_times(self, target: str) -> HittingTimes:
        """Minimum over policies of the expected first hitting time of `target`."""
        index = self.model.state_index[target]
        times = self._min_hitting_times(index)
        return HittingTimes(target=target, states=list(self.mdp.states), times=times.tolist())

    def policy_hitting_times(self, policy: Policy, target: str) -> HittingTimes:
        """Expected first hitting time (t >= 1) of `target` under a policy.

        At the target itself this is the expected return time; states that
        miss the target with positive probability get infinity.
        """
        index = self.model.state_index[target]
        matrix, _ = self.model.chain_arrays(self.model.policy_indices(policy))
        graph = transition_graph(matrix)
        graph.remove_edges_from(list(graph.out_edges(index)))
        missing = set(graph.nodes) - nx.ancestors(graph, index) - {index}
        for state in list(missing):
            missing |= nx.ancestors(graph, state)
        sure = [s for s in range(self.model.n_states) if s != index and s not in missing]

        times = np.full(self.model.n_states, np.inf)
        if sure:
            inner = matrix[np.ix_(sure, sure)]
            times[sure] = np.linalg.solve(np.eye(len(sure)) - inner, np.ones(len(sure)))
        successors = np.flatnonzero(matrix[index] > 0)
        if all(j == index or j in sure for j in successors):
            times[index] = 1.0 + sum(matrix[index, j] * times[j] for j in successors if j != index)
        return HittingTimes(target=target, states=list(self.mdp.states), times=times.tolist(), policy=policy)

    def diameter(self) -> Diameter:
        """Largest minimum expected hitting time over ordered state pairs."""
        best = Diameter(value=0.0)
        for target in range(self.model.n_states):
            times = self._min_hitting_times(target)
            for source in range(self.model.n_states):
                if source != target and times[source] > best.value:
                    best = Diameter(
                        value=float(times[source]),
                        source=self.mdp.states[source],
                        target=self.mdp.states[target]
                    )
        logger.info(f"Diameter {best.value} between {best.source!r} and {best.target!r}")
        return best

    # -- reward transience ---------------------------------------------

    def rewards_all_transient(self) -> TransientVerdict:
        """True iff no policy collects a nonzero reward from a recurrent state."""
        for row in self.model.policy_table(self.cap):
            matrix, _ = self.model.chain_arrays(row)
            structure = decompose(matrix)
            for members in structure.recurrent_classes:
                for i in members:
                    if any(p > 0 and r != 0 for _, p, r in self.model.outcomes[(i, int(row[i]))]):
                        return TransientVerdict(
                            verdict=False,
                            policy=self.model.policy_from_indices(row),
                            state=self.mdp.states[i]
                        )
        return TransientVerdict(verdict=True)

    def max_transient_time(self) -> float:
        """Largest expected number of transient steps over policies and start states."""
        longest = 0.0
        for row in self.model.policy_table(self.cap):
            matrix, _ = self.model.chain_arrays(row)
            longest = max(longest, float(expected_absorption_times(matrix, decompose(matrix)).max()))
        return longest

    def vmax_trend(self, gamma_grid: Sequence[float]) -> VmaxTrend:
        """Optimal V_max along a discount grid, with the boundedness diagnostic."""
        gammas: List[float] = [check_gamma(g) for g in gamma_grid]
        communicating = self.is_communicating()
        warnings = []
        if not communicating:
            warnings.append("MDP is not communicating; V_max is taken over all states")

        points = []
        for gamma in gammas:
            _, values, _ = self.solver.optimal_indices(gamma)
            i = int(np.argmax(values))
            points.append(VmaxPoint(gamma=gamma, vmax=float(values[i]), state=self.mdp.states[i]))

        transient = self.rewards_all_transient().verdict
        bound = self.max_transient_time() * self.mdp.r_max if transient else None
        vmax = [p.vmax for p in points]
        return VmaxTrend(
            points=points,
            communicating=communicating,
            rewards_transient=transient,
            bound=bound,
            variation=(max(vmax) - min(vmax)) if vmax else 0.0,
            warnings=warnings
        )
