from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from blackwell_mdp.core.exceptions import DiscountRangeError, SolverError
from blackwell_mdp.core.logger import get_logger
from blackwell_mdp.core.markov import ChainStructure, decompose, limiting_matrix
from blackwell_mdp.schemas.mdp import Mdp, Policy
from blackwell_mdp.schemas.solver import GainBias, OptimalSolution, QTable, ValueVector
from blackwell_mdp.services.mdp_service import MdpService

logger = get_logger(__name__)

# relative tolerance for treating two Q-values as tied
TIE_TOLERANCE = 1e-12
MAX_CONDITION = 1e12


def check_gamma(gamma: float) -> float:
    if not 0.0 <= gamma < 1.0:
        raise DiscountRangeError(f"discount {gamma} outside [0, 1)")
    return float(gamma)


def solve_stack(matrices: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Solve a stack of square systems A x = b."""
    return np.linalg.solve(matrices, vectors[..., None])[..., 0]


class SolverService:
    """Service for exact evaluation of policies."""

    def __init__(self, mdp: Mdp, model: Optional[MdpService] = None):
        self.mdp = mdp
        self.model = model or MdpService(mdp)
        self._gain_bias: Dict[Tuple[int, ...], Tuple[np.ndarray, np.ndarray, ChainStructure]] = {}

    # -- array level ---------------------------------------------------

    def values_for(self, indices: np.ndarray, gamma: float) -> np.ndarray:
        matrix, rewards = self.model.chain_arrays(indices)
        return np.linalg.solve(np.eye(self.model.n_states) - gamma * matrix, rewards)

    def value_curves(self, indices: np.ndarray, gammas: Sequence[float]) -> np.ndarray:
        """Values of one policy at many discounts, shape (len(gammas), |S|)."""
        gammas = np.asarray(gammas, dtype=float)
        matrix, rewards = self.model.chain_arrays(indices)
        systems = np.eye(self.model.n_states)[None] - gammas[:, None, None] * matrix[None]
        return solve_stack(systems, np.broadcast_to(rewards, (len(gammas), rewards.size)))

    def q_array(self, values: np.ndarray, gamma: float) -> np.ndarray:
        """Q(s,a) for all pairs given successor values; undefined pairs are NaN."""
        q = self.model.expected_rewards + gamma * (self.model.transitions @ values)
        return np.where(self.model.defined, q, np.nan)

    def table_values(self, table: np.ndarray, gamma: float) -> np.ndarray:
        """Values of every policy row in `table` at one discount, shape (N, |S|)."""
        rows = np.arange(self.model.n_states)
        matrices = self.model.transitions[rows[None, :], table]
        rewards = self.model.expected_rewards[rows[None, :], table]
        systems = np.eye(self.model.n_states)[None] - gamma * matrices
        return solve_stack(systems, rewards)

    def gain_bias_arrays(self, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray, ChainStructure]:
        key = tuple(int(a) for a in indices)
        if key in self._gain_bias:
            return self._gain_bias[key]

        matrix, rewards = self.model.chain_arrays(indices)
        structure = decompose(matrix)
        limit = limiting_matrix(matrix, structure)
        identity = np.eye(self.model.n_states)
        fundamental = identity - matrix + limit
        condition = np.linalg.cond(fundamental)
        if not np.isfinite(condition) or condition > MAX_CONDITION:
            raise SolverError("deviation matrix system is numerically singular", condition)
        deviation = np.linalg.solve(fundamental, identity - limit)

        result = (limit @ rewards, deviation @ rewards, structure)
        self._gain_bias[key] = result
        return result

    # -- public operations ---------------------------------------------

    def evaluate(self, policy: Policy, gamma: float) -> ValueVector:
        """Discounted values of a policy by a dense linear solve."""
        gamma = check_gamma(gamma)
        values = self.values_for(self.model.policy_indices(policy), gamma)
        return ValueVector(gamma=gamma, states=list(self.mdp.states), values=values.tolist())

    def q_values(self, policy: Policy, gamma: float) -> QTable:
        """Q-values of every defined (state, action) under a policy."""
        gamma = check_gamma(gamma)
        values = self.values_for(self.model.policy_indices(policy), gamma)
        q = self.q_array(values, gamma)
        table = {
            s: {self.mdp.actions[a]: float(q[i, a]) for a in self.model.available[i]}
            for i, s in enumerate(self.mdp.states)
        }
        return QTable(gamma=gamma, values=table)

    def optimal_indices(self, gamma: float) -> Tuple[np.ndarray, np.ndarray, int]:
        rows = np.arange(self.model.n_states)
        indices = np.array([actions[0] for actions in self.model.available])
        max_iterations = self.model.policy_count() + 1
        for iteration in range(1, max_iterations + 1):
            values = self.values_for(indices, gamma)
            q = np.where(self.model.defined, self.q_array(values, gamma), -np.inf)
            tolerance = TIE_TOLERANCE * max(1.0, float(np.abs(values).max()))
            best = q.max(axis=1)
            improve = best > q[rows, indices] + tolerance
            if not improve.any():
                break
            indices = np.where(improve, np.argmax(q, axis=1), indices)

        final = self.model.greedy_indices(q, tolerance)
        if not np.array_equal(final, indices):
            values = self.values_for(final, gamma)
        return final, values, iteration

    def optimal_policy(self, gamma: float) -> OptimalSolution:
        """Optimal policy by policy iteration; ties go to the lowest action index."""
        gamma = check_gamma(gamma)
        indices, values, iterations = self.optimal_indices(gamma)
        logger.debug(f"Policy iteration converged in {iterations} iterations at gamma={gamma}")
        return OptimalSolution(
            policy=self.model.policy_from_indices(indices),
            values=ValueVector(gamma=gamma, states=list(self.mdp.states), values=values.tolist()),
            iterations=iterations
        )

    def value_iteration(self, gamma: float, tol: float = 1e-12, max_iterations: int = 10_000_000) -> ValueVector:
        """Optimal values by value iteration; used as a cross-check oracle."""
        gamma = check_gamma(gamma)
        values = np.zeros(self.model.n_states)
        for _ in range(max_iterations):
            q = np.where(self.model.defined, self.q_array(values, gamma), -np.inf)
            updated = q.max(axis=1)
            if np.abs(updated - values).max() < tol:
                values = updated
                break
            values = updated
        else:
            logger.warning(f"Value iteration hit {max_iterations} iterations at gamma={gamma}")
        return ValueVector(gamma=gamma, states=list(self.mdp.states), values=values.tolist())

    def gain_bias(self, policy: Policy) -> GainBias:
        """Gain and bias from the Cesaro limiting matrix and the deviation matrix."""
        gain, bias, structure = self.gain_bias_arrays(self.model.policy_indices(policy))
        if structure.multichain:
            logger.info(f"Policy {policy.label()} induces {len(structure.recurrent_classes)} recurrent classes")
        return GainBias(
            states=list(self.mdp.states),
            gain=gain.tolist(),
            bias=bias.tolist(),
            recurrent_classes=[[self.mdp.states[i] for i in members] for members in structure.recurrent_classes],
            multichain=structure.multichain
        )
