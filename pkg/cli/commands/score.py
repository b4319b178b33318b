"""
Re-score a finished run from the reports it wrote
"""

from pathlib import Path

import click

from services.metrics import REPORTS_FILE, rescore
from cli.utils.error_handling import OutputNotFoundError, display_success_message, handle_cli_errors


@click.command(name="score")
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--verbose", "-v", is_flag=True, help="List every scored report")
@handle_cli_errors
def score_command(out_dir, verbose):
    """Score reports.json of a run against the ground truth stored with it"""
    path = Path(out_dir) / REPORTS_FILE
    if not path.is_file():
        raise OutputNotFoundError(f"{path} does not exist")
    try:
        summary = rescore(out_dir)
    except ValueError as e:
        raise OutputNotFoundError(str(e))

    if verbose:
        click.echo(click.style("=== Scored reports ===", fg="blue", bold=True))
        for scored in summary.scored:
            report = scored.report
            mark = click.style("OK", fg="green") if scored.correct else click.style("--", fg="red")
            error = "" if scored.error is None else f" error {scored.error:.2f} m"
            click.echo(f"{mark} {report.track_id} {report.label}{error}")

    rms = "n/a" if summary.rms_error is None else f"{summary.rms_error:.3f} m"
    display_success_message(
        f"{summary.correct}/{summary.artefacts} artefacts scored",
        {
            "Reports": summary.reports,
            "RMS error": rms,
        },
    )
