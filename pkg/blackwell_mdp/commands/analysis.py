from typing import Optional

import click

from blackwell_mdp.dependencies import emit, format_option, get_mdp, get_settings, parse_policy
from blackwell_mdp.services.blackwell_service import BlackwellService
from blackwell_mdp.services.generator_service import gamma_star_closed_form, recognize_family
from blackwell_mdp.services.solver_service import SolverService


@click.command("analyze")
@click.option("--mdp", "mdp_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gamma", required=True, type=float)
@click.option("--policy", "policy_text", default=None, help="state=action,... (default: the gamma-optimal policy)")
@format_option
@click.pass_context
def analyze(ctx: click.Context, mdp_path: str, gamma: float, policy_text: Optional[str]):
    """Evaluate a policy, the optimal policy, and gain/bias."""
    mdp = get_mdp(mdp_path)
    solver = SolverService(mdp)
    optimal = solver.optimal_policy(gamma)
    policy = parse_policy(policy_text, mdp) if policy_text else optimal.policy

    emit(ctx, "analyze", {"mdp": mdp_path, "gamma": gamma, "policy": policy_text}, {
        "optimal_policy": optimal.policy.assignment,
        "optimal_values": dict(zip(optimal.values.states, optimal.values.values)),
        "policy": policy.assignment,
        "values": dict(zip(mdp.states, solver.evaluate(policy, gamma).values)),
        "q_values": solver.q_values(policy, gamma).values,
        "gain_bias": solver.gain_bias(policy).model_dump(),
    })


@click.command("gamma-star")
@click.option("--mdp", "mdp_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--tolerance", default=None, type=float)
@format_option
@click.pass_context
def gamma_star(ctx: click.Context, mdp_path: str, tolerance: Optional[float]):
    """Blackwell optimal policy and threshold, with the closed form for generated families."""
    mdp = get_mdp(mdp_path)
    service = BlackwellService(mdp, cap=get_settings(ctx).POLICY_CAP)
    report = service.find_blackwell(tolerance)

    results = {
        "beta": report.beta.assignment,
        "gamma_star": report.gamma_star,
        "realizable_measure": report.realizable_measure,
        "certified_grid": report.certified_grid,
        "tied": [p.assignment for p in report.tied],
        "crossovers": [c.model_dump() for c in report.crossovers],
        "closed_form": None,
        "family": None,
    }
    spec = recognize_family(mdp)
    if spec is not None:
        closed = gamma_star_closed_form(spec)
        results.update(family=spec.model_dump(mode="json"), closed_form=closed,
                       closed_form_difference=abs(closed - report.gamma_star))
    emit(ctx, "gamma-star", {"mdp": mdp_path, "tolerance": report.tolerance}, results, report.warnings)
