import math
from typing import Dict, List, Optional

import numpy as np
from pydantic import ValidationError
from scipy.optimize import brentq

from blackwell_mdp.core.exceptions import BlackwellMdpError, DiscountRangeError, InvalidParameterError
from blackwell_mdp.core.logger import get_logger
from blackwell_mdp.schemas.distracting import (
    AdversaryInstance,
    Corollary5Instance,
    DistractingSpec,
    Family,
)
from blackwell_mdp.schemas.mdp import Mdp, Policy
from blackwell_mdp.services.solver_service import SolverService

logger = get_logger(__name__)

# Two-state instance that comes with a quoted reference threshold
REFERENCE_TWO_STATE = {"p_escape": 1 / 500, "r_d": 0.1, "r_max": 1.0}

EVALUATION_GAMMA = 0.5
COROLLARY5_DIAMETER = 2
COROLLARY5_DEFAULT_R_D = 0.125
ADVERSARY_KEYS = ("d", "r_d", "r_max")


def make_spec(**fields) -> DistractingSpec:
    try:
        return DistractingSpec(**fields)
    except ValidationError as e:
        raise InvalidParameterError(e.errors()[0]["msg"].removeprefix("Value error, "))


def _outcome(sp: str, p: float, r: float) -> dict:
    return {"sp": sp, "p": p, "r": r}


def generate_chain(h: int, eps: float, r_max: float = 1.0) -> Mdp:
    """Chain s0..sH: a small absorbing reward at s0, r_max absorbing at sH."""
    if h < 1:
        raise InvalidParameterError(f"chain length h must be >= 1, got {h}")
    if not 0 < eps < r_max:
        raise InvalidParameterError(f"need 0 < eps < r_max, got eps={eps}, r_max={r_max}")

    states = [f"s{i}" for i in range(h + 1)]
    transitions = []
    for i, state in enumerate(states):
        left = _outcome(states[0], 1.0, eps) if i == 0 else _outcome(states[i - 1], 1.0, 0.0)
        right = _outcome(states[h], 1.0, r_max) if i == h else _outcome(states[i + 1], 1.0, 0.0)
        transitions.append({"s": state, "a": "left", "to": [left]})
        transitions.append({"s": state, "a": "right", "to": [right]})

    return Mdp(
        states=states,
        actions=["left", "right"],
        r_max=r_max,
        initial={states[0]: 1.0},
        transitions=transitions
    )


def generate_two_state(p_escape: float, r_d: float, r_max: float = 1.0) -> Mdp:
    """Distractor s_d with a stochastic escape towards the high-reward state s_H."""
    if not 0 < p_escape <= 1:
        raise InvalidParameterError(f"p_escape must lie in (0, 1], got {p_escape}")
    if not 0 < r_d < r_max:
        raise InvalidParameterError(f"need 0 < r_d < r_max, got r_d={r_d}, r_max={r_max}")

    escape = [_outcome("s_H", p_escape, 0.0)]
    if p_escape < 1:
        escape.append(_outcome("s_d", 1.0 - p_escape, 0.0))
    transitions = [
        {"s": "s_d", "a": "a1", "to": [_outcome("s_d", 1.0, r_d)]},
        {"s": "s_d", "a": "a2", "to": escape},
        {"s": "s_H", "a": "a1", "to": [_outcome("s_d", 1.0, 0.0)]},
        {"s": "s_H", "a": "a2", "to": [_outcome("s_H", 1.0, r_max)]},
    ]
    return Mdp(
        states=["s_d", "s_H"],
        actions=["a1", "a2"],
        r_max=r_max,
        initial={"s_d": 1.0},
        transitions=transitions
    )


def generate(spec: DistractingSpec) -> Mdp:
    if spec.family == Family.CHAIN:
        return generate_chain(spec.d, spec.r_d, spec.r_max)
    return generate_two_state(spec.p_escape, spec.r_d, spec.r_max)


def generate_random(
    n_states: int,
    n_actions: int,
    seed: int,
    r_max: float = 1.0,
    branching: int = 2
) -> Mdp:
    """Random tabular MDP: Dirichlet rows over a random successor subset."""
    if n_states < 1 or n_actions < 1 or branching < 1:
        raise InvalidParameterError("n_states, n_actions and branching must be positive")
    if r_max <= 0:
        raise InvalidParameterError(f"r_max must be positive, got {r_max}")

    rng = np.random.default_rng(seed)
    states = [f"s{i}" for i in range(n_states)]
    actions = [f"a{j}" for j in range(n_actions)]
    width = min(branching, n_states)
    transitions = []
    for state in states:
        for action in actions:
            successors = np.sort(rng.choice(n_states, size=width, replace=False))
            probabilities = rng.dirichlet(np.ones(width))
            rewards = rng.uniform(0.0, r_max, size=width)
            transitions.append({
                "s": state,
                "a": action,
                "to": [_outcome(states[j], float(p), float(r)) for j, p, r in zip(successors, probabilities, rewards)]
            })

    return Mdp(
        states=states,
        actions=actions,
        r_max=r_max,
        initial={s: 1.0 / n_states for s in states},
        transitions=transitions
    )


def gamma_star_closed_form(spec: DistractingSpec) -> float:
    """Blackwell threshold of a generated instance, from its indifference equation."""
    if spec.family == Family.CHAIN:
        return (spec.r_d / spec.r_max) ** (1.0 / spec.d)
    # r_d (1 - gamma (1 - p)) = gamma p r_max is linear in gamma
    p = spec.p_escape
    return spec.r_d / (p * spec.r_max + spec.r_d * (1.0 - p))


def recognize_family(mdp: Mdp) -> Optional[DistractingSpec]:
    """Recover the generator parameters of an MDP, if it is a generated instance."""
    outcomes = {(t.s, t.a): t.to for t in mdp.transitions}
    try:
        if mdp.actions == ["left", "right"] and mdp.states == [f"s{i}" for i in range(len(mdp.states))]:
            h = len(mdp.states) - 1
            spec = make_spec(family=Family.CHAIN, d=h, r_d=outcomes[("s0", "left")][0].r, r_max=mdp.r_max)
        elif mdp.actions == ["a1", "a2"] and mdp.states == ["s_d", "s_H"]:
            p_escape = outcomes[("s_d", "a2")][0].p
            spec = make_spec(
                family=Family.TWO_STATE,
                d=max(1, round(1.0 / p_escape)),
                r_d=outcomes[("s_d", "a1")][0].r,
                r_max=mdp.r_max,
                p_escape=p_escape
            )
        else:
            return None
        return spec if generate(spec) == mdp else None
    except (KeyError, IndexError, BlackwellMdpError):
        return None


def corollary3_select(d: float, r_d: float, r_max: float, margin: float = 0.0) -> float:
    """Discount chosen from oracle knowledge of (d, r_d, r_max); Blackwell realizable."""
    if d <= 0 or not 0 < r_d < r_max:
        raise InvalidParameterError(f"need d > 0 and 0 < r_d < r_max, got d={d}, r_d={r_d}, r_max={r_max}")
    if margin < 0:
        raise InvalidParameterError(f"margin must be >= 0, got {margin}")
    gamma_star = (r_d / r_max) ** (1.0 / d)
    return min(gamma_star + margin, (1.0 + gamma_star) / 2.0)


def _target_ratio(gamma: float, d: int) -> float:
    floor = gamma ** d
    return floor + min(0.01, (1.0 - floor) / 2.0)


def corollary4_adversary(known: Dict[str, float], gamma: float) -> AdversaryInstance:
    """Chain consistent with two known parameters on which `gamma` is myopic."""
    if not 0 <= gamma < 1:
        raise DiscountRangeError(f"discount {gamma} outside [0, 1)")
    keys = set(known)
    if len(keys) != 2 or not keys <= set(ADVERSARY_KEYS):
        raise InvalidParameterError(f"exactly two of {ADVERSARY_KEYS} must be known, got {sorted(keys)}")
    if any(value <= 0 for value in known.values()):
        raise InvalidParameterError("known parameters must be positive")

    if keys == {"r_d", "r_max"}:
        r_d, r_max = known["r_d"], known["r_max"]
        ratio = r_d / r_max
        if ratio >= 1:
            raise InvalidParameterError(f"r_d/r_max = {ratio} >= 1 admits no distracting instance")
        # smallest d with gamma^d < r_d/r_max
        d = 1 if gamma == 0 else max(1, math.floor(math.log(ratio) / math.log(gamma)) + 1)
        solved = {"d": float(d)}
    else:
        d = known["d"]
        if d != int(d):
            raise InvalidParameterError(f"d must be an integer, got {d}")
        d = int(d)
        ratio = _target_ratio(gamma, d)
        if "r_max" in keys:
            r_max = known["r_max"]
            r_d = ratio * r_max
            solved = {"r_d": r_d}
        else:
            r_d = known["r_d"]
            r_max = r_d / ratio
            solved = {"r_max": r_max}

    mdp = generate_chain(d, r_d, r_max)
    gamma_star = gamma_star_closed_form(make_spec(family=Family.CHAIN, d=d, r_d=r_d, r_max=r_max))
    logger.info(f"Adversarial chain d={d}, r_d={r_d}, r_max={r_max} has gamma*={gamma_star:.6f} > {gamma}")
    return AdversaryInstance(
        mdp=mdp,
        gamma=gamma,
        known=dict(known),
        solved=solved,
        d=d,
        r_d=r_d,
        r_max=r_max,
        gamma_star=gamma_star
    )


def _corollary5_gaps(mdp: Mdp, beta: Policy, pi_tilde: Policy, gammas: List[float]) -> List[float]:
    solver = SolverService(mdp)
    gaps = []
    for gamma in gammas:
        difference = solver.evaluate(beta, gamma).as_array() - solver.evaluate(pi_tilde, gamma).as_array()
        gaps.append(float(np.abs(difference).max()))
    return gaps


def corollary5_construct(eps: float) -> Corollary5Instance:
    """Chain where a policy with a worse gain stays within eps of beta in value.

    r_max = 1 and d = 2 are fixed; r_d is searched so that the gap at the
    Blackwell-realizable evaluation discount 0.5 equals eps/2.
    """
    if eps <= 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    r_max, d = 1.0, COROLLARY5_DIAMETER
    beta_assignment = {f"s{i}": "right" for i in range(d + 1)}

    def gap_excess(r_d: float) -> float:
        mdp = generate_chain(d, r_d, r_max)
        beta, pi_tilde = _corollary5_policies(beta_assignment)
        return _corollary5_gaps(mdp, beta, pi_tilde, [EVALUATION_GAMMA])[0] - eps / 2.0

    ceiling = EVALUATION_GAMMA ** d * r_max
    if eps / 2.0 < EVALUATION_GAMMA ** d * r_max / (1.0 - EVALUATION_GAMMA):
        r_d = brentq(gap_excess, 1e-12 * r_max, ceiling)
    else:
        r_d = COROLLARY5_DEFAULT_R_D

    mdp = generate_chain(d, r_d, r_max)
    beta, pi_tilde = _corollary5_policies(beta_assignment)
    gamma_star = gamma_star_closed_form(make_spec(family=Family.CHAIN, d=d, r_d=r_d, r_max=r_max))
    sup_gap, evaluation_gap = _corollary5_gaps(mdp, beta, pi_tilde, [gamma_star, EVALUATION_GAMMA])

    solver = SolverService(mdp)
    gain_gap = solver.gain_bias(beta).gain_at("s0") - solver.gain_bias(pi_tilde).gain_at("s0")
    logger.info(f"Value-close instance r_d={r_d:.12f}: gap {evaluation_gap:.3e} at gamma={EVALUATION_GAMMA}")
    return Corollary5Instance(
        mdp=mdp,
        beta=beta,
        pi_tilde=pi_tilde,
        eps=eps,
        r_d=r_d,
        gamma_star=gamma_star,
        sup_value_gap=sup_gap,
        evaluation_gamma=EVALUATION_GAMMA,
        gap_at_evaluation_gamma=evaluation_gap,
        gain_gap=gain_gap
    )


def _corollary5_policies(beta_assignment: Dict[str, str]):
    beta = Policy(assignment=beta_assignment)
    return beta, beta.replace("s0", "left")
