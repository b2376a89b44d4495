from typing import Optional

import click

from blackwell_mdp.dependencies import emit, format_option, get_mdp, get_settings, parse_gammas, parse_policy
from blackwell_mdp.services.blackwell_service import BlackwellService
from blackwell_mdp.services.regret_service import RegretService


def _service(ctx: click.Context, mdp) -> RegretService:
    return RegretService(mdp, BlackwellService(mdp, cap=get_settings(ctx).POLICY_CAP))


@click.command("regret")
@click.option("--mdp", "mdp_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--policy", "policy_text", required=True)
@click.option("--gamma-learn", required=True, type=float)
@format_option
@click.pass_context
def regret(ctx: click.Context, mdp_path: str, policy_text: str, gamma_learn: float):
    """Blackwell regret, with the myopic-discount identity check when it applies."""
    mdp = get_mdp(mdp_path)
    policy = parse_policy(policy_text, mdp)
    service = _service(ctx, mdp)
    report = service.blackwell_regret(policy, gamma_learn)

    results = report.model_dump()
    warnings = []
    if gamma_learn < report.gamma_star:
        results["lemma"] = service.lemma1_check(policy, gamma_learn).model_dump()
    else:
        results["lemma"] = None
        warnings.append(f"gamma_learn {gamma_learn} is not myopic; the regret identity check was skipped")
    emit(ctx, "regret", {"mdp": mdp_path, "policy": policy.assignment, "gamma_learn": gamma_learn},
         results, warnings)


@click.command("gaps")
@click.option("--mdp", "mdp_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gamma", required=True, type=float)
@click.option("--state", required=True)
@click.option("--policy", "policy_text", default=None, help="default: the gamma-optimal policy")
@format_option
@click.pass_context
def gaps(ctx: click.Context, mdp_path: str, gamma: float, state: str, policy_text: Optional[str]):
    """Action gap, policy gap and maximal action gap at a state."""
    mdp = get_mdp(mdp_path)
    service = _service(ctx, mdp)
    if policy_text:
        policy = parse_policy(policy_text, mdp)
    else:
        policy = service.solver.optimal_policy(gamma).policy
    report = service.gap_report(policy, gamma, state)
    emit(ctx, "gaps", {"mdp": mdp_path, "gamma": gamma, "state": state, "policy": policy.assignment},
         report.model_dump())


@click.command("pivot-scan")
@click.option("--mdp", "mdp_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gammas", default=None, help="comma-separated discounts below gamma* (default gamma* - 10^-k)")
@format_option
@click.pass_context
def pivot_scan(ctx: click.Context, mdp_path: str, gammas: Optional[str]):
    """Policy gaps of beta approaching gamma*, and the pivot state."""
    mdp = get_mdp(mdp_path)
    scan = _service(ctx, mdp).pivot_scan(parse_gammas(gammas))
    results = scan.model_dump()
    results["rows"] = [
        {"gamma": row.gamma, "state": row.state, "policy_gap": row.policy_gap, "witness": row.witness.assignment}
        for row in scan.rows
    ]
    emit(ctx, "pivot-scan", {"mdp": mdp_path, "gammas": gammas}, results, scan.warnings)
