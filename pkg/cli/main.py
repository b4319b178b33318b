"""
Coordination simulator CLI entry point
"""

import logging

import click

from cli.commands.scenario import run_command, validate_command
from cli.commands.score import score_command
from db.config import LOG_LEVEL

# Initialisation Sentry
from utils.sentry_config import get_app_version, init_sentry

init_sentry()


def configure_logging(debug: bool):
    level = logging.DEBUG if debug else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger().setLevel(level)


@click.group()
@click.version_option(version=get_app_version())
@click.option("--debug", is_flag=True, help="Enable debug mode with detailed messages")
@click.pass_context
def cli(ctx, debug):
    """
    Multi-robot exploration simulator

    Runs decentralized teams of ground robots and drones through a gridded
    underground world and writes mission metrics.
    """
    ctx.ensure_object(dict)
    ctx.obj["debug"] = debug
    configure_logging(debug)

    if debug:
        click.echo(click.style("Debug mode enabled", fg="yellow"))


cli.add_command(run_command)
cli.add_command(validate_command)
cli.add_command(score_command)


if __name__ == "__main__":
    cli()
