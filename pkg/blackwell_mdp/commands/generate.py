from typing import Optional

import click

from blackwell_mdp.core.logger import get_logger
from blackwell_mdp.dependencies import emit, format_option
from blackwell_mdp.schemas.mdp import Mdp
from blackwell_mdp.services.generator_service import generate_chain, generate_random, generate_two_state
from blackwell_mdp.services.mdp_service import dump_mdp

logger = get_logger(__name__)


def _write(ctx: click.Context, kind: str, inputs: dict, mdp: Mdp, out: Optional[str]) -> None:
    """Write the MDP document to `out`, or to stdout when no path is given."""
    document = dump_mdp(mdp)
    if out is None:
        click.echo(document, nl=False)
        return
    with open(out, "w", encoding="utf-8") as f:
        f.write(document)
    logger.info(f"Wrote {kind} MDP to {out}")
    emit(ctx, f"generate {kind}", inputs, {
        "path": out,
        "states": list(mdp.states),
        "actions": list(mdp.actions),
    })


@click.group("generate")
def generate():
    """Write a generated MDP file."""


@generate.command("chain")
@click.option("--h", required=True, type=int, help="distance from s0 to the high-reward state")
@click.option("--eps", required=True, type=float, help="distractor reward at s0")
@click.option("--r-max", default=1.0, show_default=True, type=float)
@click.option("--out", default=None, type=click.Path(dir_okay=False, writable=True))
@format_option
@click.pass_context
def chain(ctx: click.Context, h: int, eps: float, r_max: float, out: Optional[str]):
    """Distracting chain s0..sH."""
    _write(ctx, "chain", {"h": h, "eps": eps, "r_max": r_max}, generate_chain(h, eps, r_max), out)


@generate.command("two-state")
@click.option("--p", "p_escape", required=True, type=float, help="escape probability from s_d")
@click.option("--r-d", required=True, type=float)
@click.option("--r-max", default=1.0, show_default=True, type=float)
@click.option("--out", default=None, type=click.Path(dir_okay=False, writable=True))
@format_option
@click.pass_context
def two_state(ctx: click.Context, p_escape: float, r_d: float, r_max: float, out: Optional[str]):
    """Two-state distractor with a stochastic escape."""
    inputs = {"p": p_escape, "r_d": r_d, "r_max": r_max}
    _write(ctx, "two-state", inputs, generate_two_state(p_escape, r_d, r_max), out)


@generate.command("random")
@click.option("--states", "n_states", required=True, type=int)
@click.option("--actions", "n_actions", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--r-max", default=1.0, show_default=True, type=float)
@click.option("--branching", default=2, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(dir_okay=False, writable=True))
@format_option
@click.pass_context
def random_mdp(ctx, n_states: int, n_actions: int, seed: int, r_max: float, branching: int, out: Optional[str]):
    """Seeded random MDP."""
    inputs = {"states": n_states, "actions": n_actions, "seed": seed, "r_max": r_max, "branching": branching}
    _write(ctx, "random", inputs, generate_random(n_states, n_actions, seed, r_max, branching), out)
