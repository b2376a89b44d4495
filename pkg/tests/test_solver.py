import itertools

import numpy as np
import pytest

from blackwell_mdp.core.exceptions import DiscountRangeError
from blackwell_mdp.core.markov import decompose, limiting_matrix
from blackwell_mdp.schemas.mdp import Mdp, Policy
from blackwell_mdp.services.solver_service import SolverService

ALL_RIGHT = Policy(assignment={"s0": "right", "s1": "right", "s2": "right"})


@pytest.fixture
def swap_chain():
    """Periodic two-state chain collecting reward 1 every other step."""
    return Mdp(
        states=["u", "v"],
        actions=["go"],
        r_max=1.0,
        initial={"u": 1.0},
        transitions=[
            {"s": "u", "a": "go", "to": [{"sp": "v", "p": 1.0, "r": 1.0}]},
            {"s": "v", "a": "go", "to": [{"sp": "u", "p": 1.0, "r": 0.0}]},
        ]
    )


def test_evaluate_chain_closed_form(chain_h2):
    """Test discounted values of moving right on the H=2 chain."""
    values = SolverService(chain_h2).evaluate(ALL_RIGHT, 0.6)
    assert values.values == pytest.approx([0.36 / 0.4, 0.6 / 0.4, 1 / 0.4])


def test_evaluate_rejects_discount_one(chain_h2):
    """Test that gamma = 1 is outside the admissible range."""
    with pytest.raises(DiscountRangeError):
        SolverService(chain_h2).evaluate(ALL_RIGHT, 1.0)
    with pytest.raises(DiscountRangeError):
        SolverService(chain_h2).optimal_policy(-0.1)


def test_q_values_two_state(two_state):
    """Test Q-values under the all-a2 policy at gamma = 0.9."""
    q = SolverService(two_state).q_values(Policy(assignment={"s_d": "a2", "s_H": "a2"}), 0.9)
    assert q.at("s_H", "a2") == pytest.approx(10.0)
    v_d = 0.9 * 0.002 * 10.0 / (1 - 0.9 * 0.998)
    assert q.at("s_H", "a1") == pytest.approx(0.9 * v_d)
    assert q.at("s_d", "a1") == pytest.approx(0.1 + 0.9 * v_d)


def test_optimal_policy_below_and_above_threshold(chain_h2):
    """Test that the optimal action at s0 switches at gamma = 0.5."""
    solver = SolverService(chain_h2)
    assert solver.optimal_policy(0.4).policy.action("s0") == "left"
    assert solver.optimal_policy(0.6).policy.action("s0") == "right"


def test_optimal_policy_ties_lowest_index(chain_h2):
    """Test that exact ties at gamma* resolve to the lowest action index."""
    solution = SolverService(chain_h2).optimal_policy(0.5)
    assert solution.policy.action("s0") == "left"
    assert solution.values.at("s0") == pytest.approx(0.5)


def test_optimal_policy_matches_enumeration(random_family):
    """Test policy iteration against exhaustive enumeration on small MDPs."""
    for service in random_family:
        if service.model.policy_count() > 64:
            continue
        table = service.policy_table()
        for gamma in (0.0, 0.5, 0.9, 0.99):
            best = service.solver.table_values(table, gamma).max(axis=0)
            values = service.solver.optimal_policy(gamma).values.as_array()
            assert np.allclose(values, best, rtol=1e-9, atol=1e-9)


def test_value_iteration_agrees(two_state):
    """Test the value-iteration oracle against policy iteration."""
    solver = SolverService(two_state)
    for gamma in (0.5, 0.95):
        exact = solver.optimal_policy(gamma).values.as_array()
        iterated = solver.value_iteration(gamma).as_array()
        assert np.allclose(exact, iterated, atol=1e-8)


def test_gain_bias_unichain(two_state):
    """Test gain and bias of the escaping policy."""
    result = SolverService(two_state).gain_bias(Policy(assignment={"s_d": "a2", "s_H": "a2"}))
    assert result.gain == pytest.approx([1.0, 1.0])
    assert result.bias_at("s_H") == pytest.approx(0.0, abs=1e-9)
    assert result.bias_at("s_d") == pytest.approx(-500.0)
    assert not result.multichain


def test_gain_bias_multichain(two_state):
    """Test that staying at both states gives two recurrent classes."""
    result = SolverService(two_state).gain_bias(Policy(assignment={"s_d": "a1", "s_H": "a2"}))
    assert result.gain == pytest.approx([0.1, 1.0])
    assert result.bias == pytest.approx([0.0, 0.0], abs=1e-12)
    assert result.multichain
    assert result.recurrent_classes == [["s_d"], ["s_H"]]


def test_gain_bias_periodic_chain(swap_chain):
    """Test the Cesaro gain of a periodic chain."""
    result = SolverService(swap_chain).gain_bias(Policy(assignment={"u": "go", "v": "go"}))
    assert result.gain == pytest.approx([0.5, 0.5])
    assert result.bias == pytest.approx([0.25, -0.25])


def test_gain_bias_transient_states(chain_h2):
    """Test gains of a policy whose transient state feeds a recurrent loop."""
    policy = Policy(assignment={"s0": "left", "s1": "right", "s2": "right"})
    result = SolverService(chain_h2).gain_bias(policy)
    assert result.gain == pytest.approx([0.25, 1.0, 1.0])
    assert result.bias_at("s1") == pytest.approx(-1.0)


def test_decompose_absorption_split():
    """Test the limiting matrix of a transient state splitting between two sinks."""
    matrix = np.array([
        [0.0, 0.3, 0.7],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ])
    structure = decompose(matrix)
    assert structure.recurrent_classes == [[1], [2]]
    assert structure.transient == [0]
    assert limiting_matrix(matrix, structure)[0].tolist() == pytest.approx([0.0, 0.3, 0.7])


ESCAPE = Policy(assignment={"s_d": "a2", "s_H": "a2"})
GAMMAS_NEAR_ONE = (0.9, 0.99, 0.999, 0.9999)


@pytest.fixture
def rotated_cycle():
    """Deterministic three-cycle; action b collects the rewards of action a one step later."""
    def step(s: str, a: str, sp: str, r: float) -> dict:
        return {"s": s, "a": a, "to": [{"sp": sp, "p": 1.0, "r": r}]}

    return Mdp(
        states=["u", "v", "w"],
        actions=["a", "b"],
        r_max=1.0,
        initial={"u": 1.0},
        transitions=[
            step("u", "a", "v", 1.0), step("v", "a", "w", 0.5), step("w", "a", "u", 0.0),
            step("u", "b", "v", 0.0), step("v", "b", "w", 1.0), step("w", "b", "u", 0.5),
        ]
    )


def test_evaluate_two_state_escape(two_state):
    """Test V(s_d) of the escaping policy against the hand-solved 2x2 system."""
    values = SolverService(two_state).evaluate(ESCAPE, 0.9)
    assert values.at("s_d") == pytest.approx(0.9 / (0.1 * 50.9))
    assert values.at("s_d") == pytest.approx(0.176817, abs=1e-6)
    assert values.at("s_H") == pytest.approx(10.0)


def test_evaluate_zero_discount_is_reward(random_family):
    """Test that gamma = 0 returns the one-step expected rewards."""
    for service in random_family[:10]:
        for policy in itertools.islice(service.model.enumerate_policies(), 8):
            _, rewards = service.model.chain_arrays(service.model.policy_indices(policy))
            assert service.solver.evaluate(policy, 0.0).as_array() == pytest.approx(rewards)


def test_values_nondecreasing_and_bounded(random_family):
    """Test that values grow with gamma under nonnegative rewards and stay below r_max/(1-gamma)."""
    for service in random_family[:20]:
        table = service.policy_table()
        previous = None
        for gamma in (0.0, 0.3, 0.6, 0.9, 0.99):
            values = service.solver.table_values(table, gamma)
            assert np.all(values <= service.mdp.r_max / (1 - gamma) + 1e-9)
            if previous is not None:
                assert np.all(values >= previous - 1e-9)
            previous = values


def test_abel_discrepancy_shrinks(two_state, swap_chain):
    """Test that (1-gamma)V approaches the Cesaro gain as gamma -> 1."""
    for mdp in (two_state, swap_chain):
        solver = SolverService(mdp)
        for policy in solver.model.enumerate_policies():
            gain = np.array(solver.gain_bias(policy).gain)
            discrepancies = [
                np.abs((1 - gamma) * solver.evaluate(policy, gamma).as_array() - gain).max()
                for gamma in GAMMAS_NEAR_ONE
            ]
            assert all(later <= earlier + 1e-9 for earlier, later in zip(discrepancies, discrepancies[1:]))

    solver = SolverService(two_state)
    gain = np.array(solver.gain_bias(ESCAPE).gain)
    discrepancies = [
        np.abs((1 - gamma) * solver.evaluate(ESCAPE, gamma).as_array() - gain).max()
        for gamma in GAMMAS_NEAR_ONE
    ]
    assert all(later < earlier for earlier, later in zip(discrepancies, discrepancies[1:]))
    assert discrepancies[-1] == pytest.approx(1e-4 / (1e-4 + 0.9999 * 0.002))


def test_laurent_expansion_near_one(two_state, swap_chain):
    """Test that V - gain/(1-gamma) - bias shrinks as gamma -> 1."""
    for mdp in (two_state, swap_chain):
        solver = SolverService(mdp)
        for policy in solver.model.enumerate_policies():
            result = solver.gain_bias(policy)
            gain, bias = np.array(result.gain), np.array(result.bias)
            errors = [
                np.abs(solver.evaluate(policy, gamma).as_array() - gain / (1 - gamma) - bias).max()
                for gamma in GAMMAS_NEAR_ONE
            ]
            assert all(later <= earlier + 1e-6 for earlier, later in zip(errors, errors[1:]))

    solver = SolverService(swap_chain)
    policy = Policy(assignment={"u": "go", "v": "go"})
    result = solver.gain_bias(policy)
    gamma = GAMMAS_NEAR_ONE[-1]
    expected = result.gain_at("u") / (1 - gamma) + result.bias_at("u")
    error = solver.evaluate(policy, gamma).at("u") - expected
    assert error == pytest.approx(0.25 * (1 - gamma) / (1 + gamma), rel=1e-2)


def test_gain_ignores_reward_order(rotated_cycle):
    """Test that rotating the reward sequence along a cycle leaves the gain unchanged."""
    solver = SolverService(rotated_cycle)
    first = Policy(assignment={"u": "a", "v": "a", "w": "a"})
    rotated = Policy(assignment={"u": "b", "v": "b", "w": "b"})
    assert solver.gain_bias(first).gain == pytest.approx([0.5, 0.5, 0.5])
    assert solver.gain_bias(rotated).gain == pytest.approx(solver.gain_bias(first).gain)
    assert solver.evaluate(first, 0.5).values != pytest.approx(solver.evaluate(rotated, 0.5).values)
