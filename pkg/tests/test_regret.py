import math

import numpy as np
import pytest

from blackwell_mdp.core.exceptions import HypothesisViolationError, NoAlternativeActionError
from blackwell_mdp.schemas.blackwell import BlackwellReport
from blackwell_mdp.schemas.mdp import Mdp, Policy
from blackwell_mdp.services.generator_service import generate_two_state
from blackwell_mdp.services.regret_service import RegretService

PIVOT_TAIL = 1e-5
PIVOT_CROSSOVER_SEPARATION = 1e-9

ALL_LEFT = Policy(assignment={"s0": "left", "s1": "left", "s2": "left"})
ALL_RIGHT = Policy(assignment={"s0": "right", "s1": "right", "s2": "right"})
ESCAPE = Policy(assignment={"s_d": "a2", "s_H": "a2"})


@pytest.fixture
def duplicate_actions():
    """Two actions with identical outcomes at s0, plus a distinct third."""
    return Mdp(
        states=["s0", "s1"],
        actions=["a", "b", "c"],
        r_max=1.0,
        initial={"s0": 1.0},
        transitions=[
            {"s": "s0", "a": "a", "to": [{"sp": "s1", "p": 1.0, "r": 0.5}]},
            {"s": "s0", "a": "b", "to": [{"sp": "s1", "p": 1.0, "r": 0.5}]},
            {"s": "s0", "a": "c", "to": [{"sp": "s0", "p": 1.0, "r": 0.1}]},
            {"s": "s1", "a": "a", "to": [{"sp": "s1", "p": 1.0, "r": 1.0}]},
        ]
    )


def test_blackwell_regret_of_staying(chain_h2_eps02):
    """Test the Blackwell regret of staying left, evaluated at gamma*."""
    report = RegretService(chain_h2_eps02).blackwell_regret(ALL_LEFT, 0.3)
    gamma_star = math.sqrt(0.2)
    assert report.gamma_prime == pytest.approx(gamma_star, abs=1e-8)
    assert report.gamma_prime == report.gamma_star
    expected = gamma_star / (1 - gamma_star) - gamma_star * 0.2 / (1 - gamma_star)
    assert report.blackwell_regret == pytest.approx(expected, abs=1e-7)
    assert report.blackwell_regret == pytest.approx(0.64721, abs=1e-5)


def test_blackwell_regret_of_beta_is_zero(chain_h2_eps02):
    """Test that beta has no Blackwell regret."""
    service = RegretService(chain_h2_eps02)
    for gamma_learn in (0.0, 0.3, 0.9):
        assert service.blackwell_regret(ALL_RIGHT, gamma_learn).blackwell_regret == pytest.approx(0.0, abs=1e-12)


def test_blackwell_regret_at_pivot_initial_state(chain_h2):
    """Test zero regret when the initial state is indifferent at gamma*."""
    report = RegretService(chain_h2).blackwell_regret(ALL_LEFT, 0.2)
    assert report.blackwell_regret == pytest.approx(0.0, abs=1e-9)


def test_blackwell_regret_above_threshold(chain_h2):
    """Test that gamma' follows gamma_learn once it exceeds gamma*."""
    report = RegretService(chain_h2).blackwell_regret(ALL_LEFT, 0.6)
    assert report.gamma_prime == 0.6
    assert report.blackwell_regret == pytest.approx(0.275)


def test_standard_regret(chain_h2):
    """Test regret against the gamma-optimal values."""
    service = RegretService(chain_h2)
    optimal = service.solver.optimal_policy(0.7).policy
    assert service.standard_regret(optimal, 0.7) == pytest.approx(0.0, abs=1e-12)
    assert service.standard_regret(ALL_LEFT, 0.5) == pytest.approx(0.0, abs=1e-12)
    assert service.standard_regret(ALL_LEFT, 0.6) == pytest.approx(0.36 / 0.4 - 0.25 / 0.4)


def test_lemma1_examples(chain_h2_eps02):
    """Test the regret identity on the chain and for beta."""
    service = RegretService(chain_h2_eps02)
    assert service.lemma1_check(ALL_LEFT, 0.1).agree
    check = service.lemma1_check(ALL_RIGHT, 0.1)
    assert check.agree
    assert check.r_b == pytest.approx(0.0, abs=1e-12)


def test_lemma1_rejects_realizable_discount(chain_h2_eps02):
    """Test that gamma_learn = gamma* violates the hypothesis."""
    service = RegretService(chain_h2_eps02)
    gamma_star = service.blackwell.find_blackwell().gamma_star
    with pytest.raises(HypothesisViolationError):
        service.lemma1_check(ALL_LEFT, gamma_star)


def test_lemma1_random_family(random_family):
    """Test the regret identity on random MDPs for policies learned at myopic discounts."""
    rng = np.random.default_rng(7)
    for service in random_family:
        regret = RegretService(service.mdp, service)
        gamma_star = service.find_blackwell().gamma_star
        for gamma_learn in rng.uniform(0.0, gamma_star, size=5):
            policy = service.solver.optimal_policy(gamma_learn).policy
            check = regret.lemma1_check(policy, gamma_learn)
            assert abs(check.r_b - check.r_at_gamma_star) <= 1e-9


def test_myopic_policy_has_positive_regret(random_family):
    """Test that a myopic optimal policy valued differently from beta has positive regret."""
    for service in random_family[:20]:
        regret = RegretService(service.mdp, service)
        report = service.find_blackwell()
        gamma = report.gamma_star / 2
        policy = service.solver.optimal_policy(gamma).policy
        own = service.solver.values_for(service.model.policy_indices(policy), report.gamma_star)
        beta = service.solver.values_for(service.model.policy_indices(report.beta), report.gamma_star)
        weighted = service.model.initial > 0
        if np.any(np.abs(beta - own)[weighted] > 1e-9):
            assert regret.blackwell_regret(policy, gamma).blackwell_regret > 0


def test_action_gap_two_state(two_state):
    """Test the action gap above gamma* from the optimal Q-values."""
    service = RegretService(two_state)
    q = service.solver.q_values(ESCAPE, 0.99)
    assert service.action_gap(0.99, "s_d") == pytest.approx(q.at("s_d", "a2") - q.at("s_d", "a1"))


def test_action_gap_duplicate_actions(duplicate_actions):
    """Test that identical actions have a zero action gap."""
    assert RegretService(duplicate_actions).action_gap(0.9, "s0") == pytest.approx(0.0, abs=1e-12)


def test_action_gap_at_threshold(chain_h2):
    """Test that s0 is indifferent at gamma*."""
    assert RegretService(chain_h2).action_gap(0.5, "s0") == pytest.approx(0.0, abs=1e-12)


def test_action_gap_single_action(one_state):
    """Test that a single-action state has no action gap."""
    with pytest.raises(NoAlternativeActionError):
        RegretService(one_state).action_gap(0.5, "s0")


def test_max_action_gap(two_state, one_state):
    """Test MAG on the two-state MDP and on a single-action MDP."""
    v_d = 0.9 * 0.002 * 10.0 / (1 - 0.9 * 0.998)
    assert RegretService(two_state).max_action_gap(ESCAPE, 0.9) == pytest.approx(10.0 - 0.9 * v_d)
    assert RegretService(one_state).max_action_gap(Policy(assignment={"s0": "a0"}), 0.9) == 0.0


def test_max_action_gap_scales_with_rewards(two_state):
    """Test that scaling every reward scales MAG."""
    scaled = generate_two_state(1 / 500, 0.05, 0.5)
    base = RegretService(two_state).max_action_gap(ESCAPE, 0.9)
    assert RegretService(scaled).max_action_gap(ESCAPE, 0.9) == pytest.approx(0.5 * base)


def test_policy_gap_two_state(two_state):
    """Test PG of beta at s_d below gamma*, with a witness staying at s_d."""
    service = RegretService(two_state)
    report = service.policy_gap(ESCAPE, 0.95, "s_d")
    stay = service.solver.evaluate(Policy(assignment={"s_d": "a1", "s_H": "a2"}), 0.95).at("s_d")
    beta = service.solver.evaluate(ESCAPE, 0.95).at("s_d")
    assert report.policy_gap == pytest.approx(abs(beta - stay))
    assert report.witness_policy.action("s_d") == "a1"


def test_policy_gap_duplicate_actions(duplicate_actions):
    """Test that a duplicate action gives a zero policy gap."""
    policy = Policy(assignment={"s0": "a", "s1": "a"})
    report = RegretService(duplicate_actions).policy_gap(policy, 0.9, "s0")
    assert report.policy_gap == pytest.approx(0.0, abs=1e-12)
    assert report.witness_policy.action("s0") == "b"


def test_policy_gap_at_threshold(chain_h2):
    """Test that the pivot gap vanishes at gamma*."""
    assert RegretService(chain_h2).policy_gap(ALL_RIGHT, 0.5, "s0").policy_gap == pytest.approx(0.0, abs=1e-12)


def test_policy_gap_single_action(one_state):
    """Test that PG needs an alternative action."""
    with pytest.raises(NoAlternativeActionError, match="no alternative policy"):
        RegretService(one_state).policy_gap(Policy(assignment={"s0": "a0"}), 0.5, "s0")


def test_policy_gap_bounded_by_single_swap(random_family):
    """Test that PG never exceeds the gap to a one-state swap."""
    for service in random_family[:10]:
        regret = RegretService(service.mdp, service)
        policy = service.find_blackwell().beta
        for state in service.mdp.states:
            report = regret.policy_gap(policy, 0.8, state)
            own = service.solver.evaluate(policy, 0.8).at(state)
            index = service.model.state_index[state]
            for a in service.model.available[index]:
                action = service.mdp.actions[a]
                if action == policy.action(state):
                    continue
                swapped = service.solver.evaluate(policy.replace(state, action), 0.8).at(state)
                assert report.policy_gap <= abs(own - swapped) + 1e-12


def test_gap_report_combines_gaps(two_state):
    """Test that the combined report carries AG, PG and MAG."""
    report = RegretService(two_state).gap_report(ESCAPE, 0.99, "s_d")
    assert report.action_gap is not None and report.action_gap > 0
    assert report.mag is not None and report.mag >= report.action_gap


def test_pivot_scan_two_state(two_state):
    """Test that s_d is the pivot and its PG shrinks towards gamma* after an initial rise."""
    scan = RegretService(two_state).pivot_scan()
    assert scan.pivot == "s_d"
    gaps = scan.gaps_at("s_d")
    assert len(gaps) == 8
    # staying gains on beta faster than beta does between gamma* - 0.1 and gamma* - 0.01
    assert gaps[0] < gaps[1]
    assert all(later < earlier for earlier, later in zip(gaps[1:], gaps[2:]))
    assert gaps[-1] < 1e-4
    assert all(check.holds for check in scan.chain)
    assert all(check.within_proof_bound for check in scan.chain)


def test_pivot_scan_chain(chain_h2):
    """Test that s0 is the pivot of the H=2 chain."""
    scan = RegretService(chain_h2).pivot_scan()
    assert scan.pivot == "s0"
    assert scan.gaps_at("s0")[-1] < 1e-4
    assert all(check.holds for check in scan.chain)


def test_pivot_scan_vacuous(one_state):
    """Test that gamma* = 0 makes the scan vacuous."""
    scan = RegretService(one_state).pivot_scan()
    assert scan.vacuous
    assert scan.pivot is None
    assert scan.rows == []


def _competing_crossover(report: BlackwellReport, state: str) -> float:
    """Largest crossover at `state` that lies strictly below gamma*."""
    below = [
        c.gamma for c in report.crossovers
        if c.state == state and c.gamma < report.gamma_star - PIVOT_CROSSOVER_SEPARATION
    ]
    return max(below, default=0.0)


def test_pivot_scan_random_family(random_family):
    """Test the pivot inequality chain at every order and PG convergence near gamma*."""
    monotone_checked = 0
    for service in random_family:
        report = service.find_blackwell()
        gamma_star = report.gamma_star
        gammas = [gamma_star - 10.0 ** -k for k in range(3, 9) if gamma_star - 10.0 ** -k >= 0]
        if len(gammas) < 2:
            continue
        scan = RegretService(service.mdp, service).pivot_scan(gammas)
        gaps = scan.gaps_at(scan.pivot)
        assert gaps[-1] < 1e-4
        for check in scan.chain:
            assert check.beta_below_witness
            assert check.witness_increases
            assert check.witness_below_beta_at_star
            assert check.within_proof_bound

        # other policies cross beta below gamma*, so the gap is monotone only on the tail above them
        window = min(PIVOT_TAIL, (gamma_star - _competing_crossover(report, scan.pivot)) / 100)
        tail = [gap for gamma, gap in zip(gammas, gaps) if gamma_star - gamma <= window]
        if len(tail) >= 2:
            monotone_checked += 1
            assert all(later < earlier for earlier, later in zip(tail, tail[1:]))
    assert monotone_checked >= len(random_family) // 2


def test_pivot_chain_witness_matches_policy_gap_witness(random_family):
    """Test that the chain reuses the policy-gap witness whenever it beats beta."""
    for service in random_family[:20]:
        gamma_star = service.find_blackwell().gamma_star
        gammas = [gamma_star - 10.0 ** -k for k in range(3, 7) if gamma_star - 10.0 ** -k >= 0]
        if not gammas:
            continue
        scan = RegretService(service.mdp, service).pivot_scan(gammas)
        rows = {row.gamma: row for row in scan.rows if row.state == scan.pivot}
        for check in scan.chain:
            row = rows[check.gamma]
            value = service.solver.evaluate(row.witness, check.gamma).at(scan.pivot)
            if value > check.beta_value:
                assert check.witness == row.witness
