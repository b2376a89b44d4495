import click

from blackwell_mdp.dependencies import emit, format_option, get_mdp, get_settings, parse_gammas
from blackwell_mdp.services.structure_service import StructureService

DEFAULT_VMAX_GRID = "0.9,0.99,0.999"


@click.command("diameter")
@click.option("--mdp", "mdp_path", required=True, type=click.Path(exists=True, dir_okay=False))
@format_option
@click.pass_context
def diameter(ctx: click.Context, mdp_path: str):
    """Diameter and the state pair attaining it."""
    mdp = get_mdp(mdp_path)
    result = StructureService(mdp, cap=get_settings(ctx).POLICY_CAP).diameter()
    emit(ctx, "diameter", {"mdp": mdp_path}, result.model_dump())


@click.command("transient-check")
@click.option("--mdp", "mdp_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gammas", default=DEFAULT_VMAX_GRID, show_default=True)
@format_option
@click.pass_context
def transient_check(ctx: click.Context, mdp_path: str, gammas: str):
    """Whether every reward is transient, with the V_max trend."""
    mdp = get_mdp(mdp_path)
    service = StructureService(mdp, cap=get_settings(ctx).POLICY_CAP)
    verdict = service.rewards_all_transient()
    trend = service.vmax_trend(parse_gammas(gammas))

    results = {
        "verdict": verdict.verdict,
        "witness_policy": verdict.policy.assignment if verdict.policy else None,
        "witness_state": verdict.state,
        "communicating": trend.communicating,
        "bound": trend.bound,
        "variation": trend.variation,
        "rows": [p.model_dump() for p in trend.points],
    }
    emit(ctx, "transient-check", {"mdp": mdp_path, "gammas": gammas}, results, trend.warnings)
