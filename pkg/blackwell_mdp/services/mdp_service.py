import itertools
import math
from typing import BinaryIO, Iterator, Optional, Sequence, Union

import numpy as np
import yaml
from pydantic import ValidationError

from blackwell_mdp.config import settings
from blackwell_mdp.core.exceptions import (
    InvalidPolicyError,
    MdpParseError,
    MdpValidationError,
    PolicyCapExceededError,
)
from blackwell_mdp.core.logger import get_logger
from blackwell_mdp.schemas.mdp import InducedChain, Mdp, Policy

logger = get_logger(__name__)


def load_mdp(source: Union[BinaryIO, bytes, str]) -> Mdp:
    """Parse and validate an MDP document (YAML or JSON)."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MdpParseError(f"document is not UTF-8: {e}")
    try:
        data = yaml.safe_load(source)
    except yaml.YAMLError as e:
        raise MdpParseError(f"malformed document: {e}")
    if not isinstance(data, dict):
        raise MdpParseError("document root must be a mapping")

    try:
        mdp = Mdp.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        path = ".".join(str(part) for part in error["loc"])
        message = error["msg"].removeprefix("Value error, ")
        raise MdpValidationError(message, field_path=path)

    logger.info(f"Loaded MDP with {len(mdp.states)} states and {len(mdp.actions)} actions")
    return mdp


def dump_mdp(mdp: Mdp) -> str:
    """Serialize an MDP to the YAML file format; output is deterministic."""
    return yaml.safe_dump(mdp.model_dump(), sort_keys=False, default_flow_style=None)


class MdpService:
    """Numeric view of an MDP: index tables, induced chains, policy enumeration."""

    def __init__(self, mdp: Mdp):
        self.mdp = mdp
        self.state_index = {s: i for i, s in enumerate(mdp.states)}
        self.action_index = {a: i for i, a in enumerate(mdp.actions)}
        n, k = len(mdp.states), len(mdp.actions)

        self.transitions = np.zeros((n, k, n))
        reward_mass = np.zeros((n, k, n))
        self.defined = np.zeros((n, k), dtype=bool)
        self.outcomes = {}
        for record in mdp.transitions:
            i, a = self.state_index[record.s], self.action_index[record.a]
            self.defined[i, a] = True
            successors = []
            for outcome in record.to:
                j = self.state_index[outcome.sp]
                self.transitions[i, a, j] += outcome.p
                reward_mass[i, a, j] += outcome.p * outcome.r
                successors.append((j, outcome.p, outcome.r))
            self.outcomes[(i, a)] = successors

        # expected one-step reward of each (s, a)
        self.expected_rewards = reward_mass.sum(axis=2)
        self.available = [np.flatnonzero(self.defined[i]).tolist() for i in range(n)]
        self.initial = np.array([mdp.initial.get(s, 0.0) for s in mdp.states])

        for array in (self.transitions, self.expected_rewards, self.defined, self.initial):
            array.flags.writeable = False

    @property
    def n_states(self) -> int:
        return len(self.mdp.states)

    def policy_count(self) -> int:
        """Number of deterministic stationary policies."""
        return math.prod(len(actions) for actions in self.available)

    def policy_indices(self, policy: Policy) -> np.ndarray:
        """Action index chosen in each state, validated against the MDP."""
        indices = np.empty(self.n_states, dtype=int)
        for state, i in self.state_index.items():
            if state not in policy.assignment:
                raise InvalidPolicyError(f"policy does not assign an action to state {state!r}")
            action = policy.assignment[state]
            a = self.action_index.get(action)
            if a is None or not self.defined[i, a]:
                raise InvalidPolicyError(f"action {action!r} is not defined at state {state!r}")
            indices[i] = a
        extra = set(policy.assignment) - set(self.state_index)
        if extra:
            raise InvalidPolicyError(f"policy assigns unknown states {sorted(extra)}")
        return indices

    def policy_from_indices(self, indices: Sequence[int]) -> Policy:
        return Policy(assignment={
            s: self.mdp.actions[int(a)] for s, a in zip(self.mdp.states, indices)
        })

    def chain_arrays(self, indices: np.ndarray):
        """(P_pi, r_pi) for a policy given as action indices."""
        rows = np.arange(self.n_states)
        return self.transitions[rows, indices], self.expected_rewards[rows, indices]

    def induce_chain(self, policy: Policy) -> InducedChain:
        """Markov reward process induced by a policy."""
        matrix, rewards = self.chain_arrays(self.policy_indices(policy))
        return InducedChain(
            states=list(self.mdp.states),
            transition_matrix=matrix.copy(),
            reward_vector=rewards.copy()
        )

    def policy_table(self, cap: Optional[int] = None) -> np.ndarray:
        """All policies as rows of action indices, in lexicographic order."""
        cap = settings.POLICY_CAP if cap is None else cap
        count = self.policy_count()
        if count > cap:
            raise PolicyCapExceededError(count, cap)
        return np.array(list(itertools.product(*self.available)), dtype=int).reshape(count, self.n_states)

    def enumerate_policies(self, cap: Optional[int] = None) -> Iterator[Policy]:
        """Yield every deterministic stationary policy once, lexicographically."""
        for row in self.policy_table(cap):
            yield self.policy_from_indices(row)

    def greedy_indices(self, q: np.ndarray, tolerance: float = 0.0) -> np.ndarray:
        """Lowest-index action within `tolerance` of the best defined action per state."""
        masked = np.where(self.defined, q, -np.inf)
        best = masked.max(axis=1, keepdims=True)
        return np.argmax(masked >= best - tolerance, axis=1)
