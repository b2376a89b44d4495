import csv
import io
import json
from typing import Any, Dict, List, Optional

import click
import yaml
from pydantic import ValidationError

from blackwell_mdp.config import Settings
from blackwell_mdp.core.exceptions import BlackwellMdpError, DiscountRangeError, InvalidPolicyError
from blackwell_mdp.core.logger import get_logger
from blackwell_mdp.schemas.envelope import OutputEnvelope
from blackwell_mdp.schemas.mdp import Mdp, Policy
from blackwell_mdp.services.mdp_service import MdpService, load_mdp

logger = get_logger(__name__)

FORMATS = ("json", "yaml", "csv")


def _set_format(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> Optional[str]:
    if value is not None:
        ctx.find_root().obj["format"] = value
    return value


def format_option(command):
    """`--format` on a subcommand; overrides the one given before the subcommand."""
    return click.option(
        "--format",
        type=click.Choice(FORMATS),
        default=None,
        expose_value=False,
        callback=_set_format,
        help="output format (default: the global --format, else json)"
    )(command)


def get_settings(ctx: click.Context) -> Settings:
    """Settings built for the current invocation."""
    return ctx.find_root().obj["settings"]


def get_mdp(path: str) -> Mdp:
    """Load and validate the MDP file named on the command line."""
    with open(path, "rb") as f:
        return load_mdp(f)


def parse_policy(text: str, mdp: Mdp) -> Policy:
    """Parse `state=action,state=action` into a policy valid for `mdp`."""
    assignment = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        state, sep, action = item.partition("=")
        if not sep:
            raise InvalidPolicyError(f"malformed policy entry {item!r}, expected state=action")
        assignment[state.strip()] = action.strip()
    policy = Policy(assignment=assignment)
    MdpService(mdp).policy_indices(policy)
    return policy


def parse_gammas(text: Optional[str]) -> Optional[List[float]]:
    """Comma-separated discount list; None passes through."""
    if text is None:
        return None
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise DiscountRangeError(f"malformed discount list {text!r}")


def _flatten(record: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat = {}
    for key, value in record.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict) and value:
            flat.update(_flatten(value, f"{name}."))
        elif isinstance(value, (list, dict)):
            flat[name] = json.dumps(value)
        else:
            flat[name] = value
    return flat


def to_csv(results: Dict[str, Any]) -> str:
    """Tabular payload as CSV: `results["rows"]` if present, else one flattened row."""
    rows = results.get("rows")
    records = rows if isinstance(rows, list) else [results]
    flat = [_flatten(r) for r in records]
    columns: List[str] = []
    for record in flat:
        columns.extend(c for c in record if c not in columns)

    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(flat)
    return buffer.getvalue()


def emit(
    ctx: click.Context,
    command: str,
    inputs: Dict[str, Any],
    results: Dict[str, Any],
    warnings: Optional[List[str]] = None
) -> None:
    """Write the output envelope in the requested format."""
    try:
        envelope = OutputEnvelope(command=command, inputs=inputs, results=results, warnings=warnings or [])
    except ValidationError as e:
        raise BlackwellMdpError(e.errors()[0]["msg"].removeprefix("Value error, "))

    output_format = ctx.find_root().obj["format"]
    data = envelope.model_dump(mode="json")
    if output_format == "json":
        click.echo(json.dumps(data, indent=2))
    elif output_format == "yaml":
        click.echo(yaml.safe_dump(data, sort_keys=False), nl=False)
    else:
        click.echo(to_csv(data["results"]), nl=False)
        for warning in envelope.warnings:
            click.echo(f"warning: {warning}", err=True)
