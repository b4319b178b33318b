"""
Sentry configuration for the coordination simulator
Centralized management of error monitoring and logs
"""

import logging
import os
import re
from functools import wraps
from typing import Optional

import sentry_sdk
from sentry_sdk.integrations.logging import LoggingIntegration
from sentry_sdk.integrations.sqlalchemy import SqlalchemyIntegration

logger = logging.getLogger(__name__)

# Local variables that hold raw wire payloads; never shipped to Sentry
BULKY_VARIABLES = ("payload", "data", "buffer", "features", "points")


def init_sentry() -> None:
    """
    Initialize Sentry for error monitoring.

    Configuration:
    - DSN read from environment variables
    - No personal data (PII) sent
    - Integrations for logging and SQLAlchemy (Mule journal)
    """
    sentry_dsn = os.getenv("SENTRY_DSN")

    if not sentry_dsn:
        logger.warning(
            "SENTRY_DSN not found in environment variables. Sentry monitoring disabled."
        )
        return

    environment = os.getenv("ENVIRONMENT", "development")

    sentry_logging = LoggingIntegration(level=logging.INFO, event_level=logging.ERROR)

    try:
        sentry_sdk.init(
            dsn=sentry_dsn,
            environment=environment,
            integrations=[
                sentry_logging,
                SqlalchemyIntegration(),
            ],
            traces_sample_rate=0.0,
            send_default_pii=False,
            release=get_app_version(),
            before_send=filter_bulky_data,
        )

        logger.info(f"Sentry initialized successfully for environment: {environment}")

    except Exception as e:
        logger.error(f"Failed to initialize Sentry: {e}")


def get_app_version() -> str:
    """
    Retrieve the application version.

    Returns:
        Application version or '1.0.0'
    """
    return os.getenv("APP_VERSION", "1.0.0")


def filter_bulky_data(event, hint):
    """
    Strip binary payloads from events before sending to Sentry.

    Args:
        event: Sentry event
        hint: Additional context

    Returns:
        Filtered event
    """
    message = event.get("message")
    if isinstance(message, str):
        event["message"] = re.sub(r"b'[^']{64,}'", "b'***TRUNCATED***'", message)

    if "exception" in event and "values" in event["exception"]:
        for exception in event["exception"]["values"]:
            frames = exception.get("stacktrace", {}).get("frames", [])
            for frame in frames:
                for var_name in list(frame.get("vars", {})):
                    if var_name.lower() in BULKY_VARIABLES:
                        frame["vars"][var_name] = "***TRUNCATED***"

    return event


# Helper functions for run-level logging


def log_run_start(scenario_name: str, seed: int, duration: float) -> None:
    """
    Log the start of a simulation run

    Args:
        scenario_name: Name of the scenario
        seed: Root seed of the run
        duration: Simulated mission length in seconds
    """
    sentry_sdk.add_breadcrumb(
        message=f"Run started: {scenario_name}",
        category="run.start",
        data={"scenario": scenario_name, "seed": seed, "duration": duration},
        level="info",
    )

    logger.info(
        f"Run started - Scenario: {scenario_name}, Seed: {seed}, Duration: {duration}s"
    )


def log_run_summary(scenario_name: str, summary: dict) -> None:
    """
    Log the final figures of a simulation run

    Args:
        scenario_name: Name of the scenario
        summary: Summary dictionary written to summary.json
    """
    sentry_sdk.add_breadcrumb(
        message=f"Run finished: {scenario_name}",
        category="run.finish",
        data={
            "correct": summary.get("artefacts_correct"),
            "reports": summary.get("reports_scored"),
        },
        level="info",
    )

    logger.info(
        f"RUN FINISHED - Scenario: {scenario_name}, "
        f"Artefacts: {summary.get('artefacts_correct')}/{summary.get('artefacts_total')}, "
        f"Coverage: {summary.get('coverage', 0.0):.3f}"
    )


def log_unexpected_error(error: Exception, context: Optional[dict] = None) -> None:
    """
    Log an unexpected error with context

    Args:
        error: Captured Exception
        context: Additional context (optional)
    """
    if context:
        sentry_sdk.set_context("error_context", context)

    sentry_sdk.capture_exception(error)

    logger.error(f"Unexpected error occurred: {str(error)}", exc_info=True)


def capture_exceptions(func):
    """
    Decorator to automatically capture unexpected exceptions

    Usage:
        @capture_exceptions
        def my_function():
            ...
    """

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except Exception as e:
            log_unexpected_error(
                e,
                {
                    "function": func.__name__,
                    "args": str(args)[:100],
                    "kwargs": str(kwargs)[:100],
                },
            )
            raise

    return wrapper
