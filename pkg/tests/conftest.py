import pytest

from blackwell_mdp.schemas.mdp import Mdp
from blackwell_mdp.services.blackwell_service import BlackwellService
from blackwell_mdp.services.generator_service import generate_chain, generate_random, generate_two_state
from blackwell_mdp.services.mdp_service import dump_mdp

RANDOM_FAMILY_SIZE = 50
RANDOM_FAMILY_SEEDS = 400


@pytest.fixture
def chain_h2():
    """Distracting chain with H=2, eps=0.25: gamma* = 0.5."""
    return generate_chain(2, 0.25, 1.0)


@pytest.fixture
def chain_h2_eps02():
    """Distracting chain with H=2, eps=0.2, started at s1."""
    return generate_chain(2, 0.2, 1.0).with_initial({"s1": 1.0})


@pytest.fixture
def two_state():
    """Two-state distractor with escape probability 1/500."""
    return generate_two_state(1 / 500, 0.1, 1.0)


@pytest.fixture
def one_state():
    return Mdp(
        states=["s0"],
        actions=["a0"],
        r_max=0.0,
        initial={"s0": 1.0},
        transitions=[{"s": "s0", "a": "a0", "to": [{"sp": "s0", "p": 1.0, "r": 0.0}]}]
    )


@pytest.fixture
def bias_example():
    """Two routes to a zero-reward sink that differ only in transient reward."""
    return Mdp(
        states=["a", "b", "goal"],
        actions=["x", "y"],
        r_max=1.0,
        initial={"a": 1.0},
        transitions=[
            {"s": "a", "a": "x", "to": [{"sp": "goal", "p": 1.0, "r": 1.0}]},
            {"s": "a", "a": "y", "to": [{"sp": "b", "p": 1.0, "r": 0.0}]},
            {"s": "b", "a": "x", "to": [{"sp": "goal", "p": 1.0, "r": 0.5}]},
            {"s": "goal", "a": "x", "to": [{"sp": "goal", "p": 1.0, "r": 0.0}]},
        ]
    )


@pytest.fixture
def transient_chain():
    """Four states whose rewards all lie on the way into a zero-reward sink."""
    return Mdp(
        states=["t0", "t1", "t2", "sink"],
        actions=["go", "skip"],
        r_max=1.0,
        initial={"t0": 1.0},
        transitions=[
            {"s": "t0", "a": "go", "to": [{"sp": "t1", "p": 1.0, "r": 1.0}]},
            {"s": "t0", "a": "skip", "to": [{"sp": "t2", "p": 1.0, "r": 0.5}]},
            {"s": "t1", "a": "go", "to": [{"sp": "t2", "p": 1.0, "r": 1.0}]},
            {"s": "t2", "a": "go", "to": [{"sp": "sink", "p": 1.0, "r": 1.0}]},
            {"s": "sink", "a": "go", "to": [{"sp": "sink", "p": 1.0, "r": 0.0}]},
        ]
    )


@pytest.fixture(scope="session")
def random_family():
    """Seeded small random MDPs (2-4 states, 2-3 actions) with gamma* > 0."""
    family = []
    for seed in range(RANDOM_FAMILY_SEEDS):
        mdp = generate_random(2 + seed % 3, 2 + seed % 2, seed)
        service = BlackwellService(mdp)
        if service.find_blackwell().gamma_star > 0:
            family.append(service)
        if len(family) == RANDOM_FAMILY_SIZE:
            break
    assert len(family) == RANDOM_FAMILY_SIZE
    return family


@pytest.fixture
def mdp_file(tmp_path):
    """Write an MDP to a temporary file and return its path."""
    def write(mdp: Mdp, name: str = "model.mdp") -> str:
        path = tmp_path / name
        path.write_text(dump_mdp(mdp), encoding="utf-8")
        return str(path)
    return write
