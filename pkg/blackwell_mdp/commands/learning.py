from typing import Optional, Tuple

import click
from pydantic import ValidationError

from blackwell_mdp.core.exceptions import EXIT_BUDGET, InvalidParameterError
from blackwell_mdp.dependencies import emit, format_option, get_mdp, get_settings
from blackwell_mdp.schemas.learner import LearnerConfig
from blackwell_mdp.services.blackwell_service import BlackwellService
from blackwell_mdp.services.learner_service import STEP_BUDGET, LearnerService, run_delayed_q
from blackwell_mdp.services.regret_service import RegretService


def learner_options(command):
    """Options shared by `learn` and `sweep`."""
    for option in reversed([
        click.option("--mdp", "mdp_path", required=True, type=click.Path(exists=True, dir_okay=False)),
        click.option("--epsilon", default=0.05, show_default=True, type=float),
        click.option("--delta", default=0.1, show_default=True, type=float),
        click.option("--m", default=None, type=int, help="samples per attempted update (default: heuristic)"),
        click.option("--seed", required=True, type=int),
        click.option("--max-steps", default=None, type=int),
        click.option("--gap-state", default=None),
    ]):
        command = option(command)
    return command


def _config(ctx: click.Context, gamma: float, **fields) -> LearnerConfig:
    if fields.get("max_steps") is None:
        fields["max_steps"] = get_settings(ctx).MAX_STEPS
    try:
        return LearnerConfig(gamma=gamma, **fields)
    except ValidationError as e:
        error = e.errors()[0]
        raise InvalidParameterError(f"{error['loc'][0]}: {error['msg']}")


@click.command("learn")
@learner_options
@click.option("--gamma", required=True, type=float)
@format_option
@click.pass_context
def learn(ctx: click.Context, mdp_path: str, gamma: float, epsilon: float, delta: float,
          m: Optional[int], seed: int, max_steps: Optional[int], gap_state: Optional[str]):
    """One delayed Q-learning run; exits 2 when the step budget runs out."""
    mdp = get_mdp(mdp_path)
    config = _config(ctx, gamma, epsilon=epsilon, delta=delta, m=m, seed=seed,
                     max_steps=max_steps, gap_state=gap_state)
    trace = run_delayed_q(mdp, config)

    warnings = []
    if trace.terminated_by == STEP_BUDGET:
        warnings.append(f"step budget of {config.max_steps} exhausted before the termination rule fired")
    results = trace.model_dump(exclude={"updates"})
    results["successful_updates"] = len(trace.updates)
    emit(ctx, "learn", {"mdp": mdp_path, **config.model_dump()}, results, warnings)
    return EXIT_BUDGET if trace.terminated_by == STEP_BUDGET else 0


@click.command("sweep")
@learner_options
@click.option("--gamma", "gammas", required=True, multiple=True, type=float, help="repeat for several configs")
@click.option("--runs", default=5, show_default=True, type=int)
@format_option
@click.pass_context
def sweep(ctx: click.Context, mdp_path: str, gammas: Tuple[float, ...], epsilon: float, delta: float,
          m: Optional[int], seed: int, max_steps: Optional[int], gap_state: Optional[str], runs: int):
    """Repeated runs per discount, classified by the exact oracles."""
    mdp = get_mdp(mdp_path)
    settings = get_settings(ctx)
    configs = [
        _config(ctx, gamma, epsilon=epsilon, delta=delta, m=m, seed=seed, max_steps=max_steps, gap_state=gap_state)
        for gamma in gammas
    ]
    regret = RegretService(mdp, BlackwellService(mdp, cap=settings.POLICY_CAP))
    table = LearnerService(mdp, regret, workers=settings.WORKERS).experiment(configs, runs)

    rows = []
    for row in table.rows:
        rows.append({
            "gamma": row.config.gamma,
            **row.model_dump(exclude={"config", "records"}),
            "records": [r.model_dump() for r in row.records],
        })
    emit(ctx, "sweep", {"mdp": mdp_path, "gammas": list(gammas), "runs": runs, "seed": seed}, {"rows": rows})
