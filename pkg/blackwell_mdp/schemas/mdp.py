from typing import Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


PROBABILITY_TOLERANCE = 1e-9


class Outcome(BaseModel):
    """One successor of a (state, action) pair."""
    sp: str
    p: float = Field(..., ge=0, le=1)
    r: float = Field(..., ge=0)

    model_config = ConfigDict(extra="forbid", frozen=True)


class TransitionRecord(BaseModel):
    """Successor distribution of a defined (state, action) pair."""
    s: str
    a: str
    to: List[Outcome] = Field(..., min_length=1)

    model_config = ConfigDict(extra="forbid", frozen=True)


class Mdp(BaseModel):
    """Finite tabular MDP with rewards attached to transitions (s, a, s').

    The discount factor is not part of the model; every evaluation takes it
    as an argument.
    """
    states: List[str] = Field(..., min_length=1)
    actions: List[str] = Field(..., min_length=1)
    r_max: float = Field(..., ge=0)
    initial: Dict[str, float]
    transitions: List[TransitionRecord]

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def check_invariants(self) -> "Mdp":
        if len(set(self.states)) != len(self.states):
            raise ValueError("states: duplicate state identifier")
        if len(set(self.actions)) != len(self.actions):
            raise ValueError("actions: duplicate action identifier")
        states, actions = set(self.states), set(self.actions)

        seen = set()
        for i, record in enumerate(self.transitions):
            where = f"transitions[{i}] ({record.s},{record.a})"
            if record.s not in states:
                raise ValueError(f"{where}: unknown state {record.s!r}")
            if record.a not in actions:
                raise ValueError(f"{where}: unknown action {record.a!r}")
            if (record.s, record.a) in seen:
                raise ValueError(f"{where}: duplicate definition")
            seen.add((record.s, record.a))
            total = 0.0
            for j, outcome in enumerate(record.to):
                if outcome.sp not in states:
                    raise ValueError(f"{where}.to[{j}]: unknown successor {outcome.sp!r}")
                if outcome.r > self.r_max:
                    raise ValueError(f"{where}.to[{j}]: reward {outcome.r} exceeds r_max {self.r_max}")
                total += outcome.p
            if abs(total - 1.0) > PROBABILITY_TOLERANCE:
                raise ValueError(f"{where}: successor probabilities sum to {total}, expected 1")

        defined_states = {s for s, _ in seen}
        for state in self.states:
            if state not in defined_states:
                raise ValueError(f"states: state {state!r} has no defined action")

        for state, mass in self.initial.items():
            if state not in states:
                raise ValueError(f"initial: unknown state {state!r}")
            if mass < 0:
                raise ValueError(f"initial: negative probability for {state!r}")
        total = sum(self.initial.values())
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f"initial: probabilities sum to {total}, expected 1")
        return self

    def with_initial(self, initial: Dict[str, float]) -> "Mdp":
        """Copy of this MDP with another initial distribution, revalidated."""
        data = self.model_dump()
        data["initial"] = initial
        return Mdp.model_validate(data)


class Policy(BaseModel):
    """Deterministic stationary policy: state -> action."""
    assignment: Dict[str, str]

    model_config = ConfigDict(extra="forbid", frozen=True)

    def action(self, state: str) -> str:
        return self.assignment[state]

    def replace(self, state: str, action: str) -> "Policy":
        """Policy equal to this one except at `state`."""
        assignment = dict(self.assignment)
        assignment[state] = action
        return Policy(assignment=assignment)

    def label(self) -> str:
        return ",".join(f"{s}={a}" for s, a in self.assignment.items())


class InducedChain(BaseModel):
    """Markov reward process obtained by fixing a policy."""
    states: List[str]
    transition_matrix: np.ndarray
    reward_vector: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
