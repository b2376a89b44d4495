import sys
from typing import List, Optional

import click

from blackwell_mdp.commands import COMMANDS
from blackwell_mdp.config import Settings
from blackwell_mdp.core.exceptions import EXIT_VALIDATION, BlackwellMdpError
from blackwell_mdp.core.logger import get_logger, setup_logging
from blackwell_mdp.dependencies import FORMATS

logger = get_logger(__name__)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--format", "output_format", type=click.Choice(FORMATS), default="json", show_default=True)
@click.pass_context
def cli(ctx: click.Context, output_format: str):
    """Exact Blackwell-optimality analysis of finite tabular MDPs."""
    settings = Settings()
    setup_logging(
        log_level=settings.LOG_LEVEL,
        log_file=settings.LOG_FILE,
        enable_console=True,
        enable_file=settings.LOG_FILE is not None
    )
    ctx.obj = {"settings": settings, "format": output_format}


for command in COMMANDS:
    cli.add_command(command)


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return its exit code."""
    try:
        result = cli.main(args=argv, prog_name="blackwell-mdp", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return EXIT_VALIDATION
    except click.Abort:
        return EXIT_VALIDATION
    except BlackwellMdpError as e:
        logger.error(e.detail)
        click.echo(f"Error: {e.detail}", err=True)
        return e.exit_code
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
