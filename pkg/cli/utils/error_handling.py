"""
Centralized error handling for the simulator CLI
"""

import click
import logging
from typing import Callable, Optional
from functools import wraps
from sqlalchemy.exc import SQLAlchemyError
from services.codecs import CodecError
from services.executive import CommandListParseError
from services.netsim import DropNodeUnavailable
from services.scenario import ScenarioError
from utils.capabilities import CapabilityError
from utils.validators import ValidationError
from utils.sentry_config import log_unexpected_error

logger = logging.getLogger(__name__)

# Exit status for a scenario that fails validation
INVALID_SCENARIO_EXIT = 2


class CLIError(Exception):
    """Base exception for CLI errors"""

    def __init__(self, message: str, error_code: str = None):
        self.message = message
        self.error_code = error_code
        super().__init__(message)


class OutputNotFoundError(CLIError):
    """Run output directory or file missing"""


def report_scenario_errors(errors):
    click.echo(
        click.style(f"Scenario is invalid ({len(errors)} error(s)):", fg="red", bold=True),
        err=True,
    )
    for error in errors:
        click.echo(f"  - {error}", err=True)


def handle_cli_errors(func: Callable) -> Callable:
    """
    Decorator to handle CLI errors with user-friendly messages
    """

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)

        except (click.exceptions.Exit, click.ClickException, click.Abort):
            raise

        except ScenarioError as e:
            report_scenario_errors(e.errors)
            logger.warning(f"Invalid scenario in {func.__name__}: {e}")
            raise click.exceptions.Exit(INVALID_SCENARIO_EXIT)

        except ValidationError as e:
            click.echo(click.style(f"Invalid value: {e}", fg="red", bold=True), err=True)
            logger.warning(f"Validation error in {func.__name__}: {e}")
            raise click.exceptions.Exit(INVALID_SCENARIO_EXIT)

        except CommandListParseError as e:
            click.echo(click.style(f"Bad command list: {e}", fg="red", bold=True), err=True)
            logger.warning(f"Command list error in {func.__name__}: {e}")
            raise click.Abort()

        except (CapabilityError, DropNodeUnavailable) as e:
            click.echo(click.style(f"Not allowed for this platform: {e}", fg="red", bold=True), err=True)
            logger.warning(f"Capability error in {func.__name__}: {e}")
            raise click.Abort()

        except CodecError as e:
            click.echo(click.style(f"Malformed payload: {e}", fg="red", bold=True), err=True)
            logger.error(f"Codec error in {func.__name__}: {e}")
            raise click.Abort()

        except OutputNotFoundError as e:
            click.echo(click.style(f"Not found: {e.message}", fg="red", bold=True), err=True)
            click.echo(
                click.style("Point 'score' at the directory a 'run' wrote.", fg="yellow"),
                err=True,
            )
            logger.warning(f"Output not found in {func.__name__}: {e}")
            raise click.Abort()

        except SQLAlchemyError as e:
            click.echo(
                click.style(
                    "Journal error: the Mule journal could not be written.",
                    fg="red",
                    bold=True,
                ),
                err=True,
            )
            click.echo(click.style("Check MULE_JOURNAL_URL in your .env", fg="yellow"), err=True)
            logger.error(f"SQLAlchemy error in {func.__name__}: {e}")
            raise click.Abort()

        except KeyboardInterrupt:
            click.echo(click.style("Run cancelled by user.", fg="yellow", bold=True), err=True)
            raise click.Abort()

        except Exception as e:
            context = {
                "command": func.__name__,
                "args_preview": str(args)[:200] if args else "None",
                "kwargs_preview": str(kwargs)[:200] if kwargs else "None",
            }
            log_unexpected_error(e, context)

            click.echo(click.style(f"Unexpected error: {str(e)}", fg="red", bold=True), err=True)
            click.echo(
                click.style("This error has been logged for investigation.", fg="yellow"),
                err=True,
            )
            logger.error(f"Unexpected error in {func.__name__}: {e}", exc_info=True)
            raise click.Abort()

    return wrapper


def display_success_message(message: str, details: Optional[dict] = None):
    """Display a formatted success message"""
    click.echo(click.style(f"{message}", fg="green", bold=True))
    if details:
        for key, value in details.items():
            click.echo(f"   {key}: {value}")


def display_info_message(message: str):
    click.echo(click.style(f"{message}", fg="blue"))
