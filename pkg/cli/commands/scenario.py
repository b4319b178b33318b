"""
Scenario commands: run a mission and validate a scenario file
"""

from pathlib import Path

import click

from db.config import SIM_OUTPUT_DIR
from models import Session, init_db
from repositories.message import MessageRepository
from services.message_store import JournaledMessageStore
from services.metrics import write_log
from services.scenario import load_scenario, parse_scenario, read_scenario_file
from services.simulation import Simulation
from cli.utils.error_handling import (
    INVALID_SCENARIO_EXIT,
    display_info_message,
    display_success_message,
    handle_cli_errors,
    report_scenario_errors,
)


def journal_store_factory():
    """Mule stores that write through to the journal database"""
    init_db()
    session = Session()
    repository = MessageRepository(session)

    def factory(agent_id: int) -> JournaledMessageStore:
        repository.purge_owner(agent_id)
        return JournaledMessageStore(agent_id, repository)

    return factory, session


@click.command(name="run")
@click.argument("scenario_path", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, help="Override the scenario seed")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Output directory")
@click.option("--until", type=click.FloatRange(min=0, min_open=True), help="Stop after this many simulated seconds")
@click.option("--journal", is_flag=True, help="Journal every Mule store to MULE_JOURNAL_URL")
@handle_cli_errors
def run_command(scenario_path, seed, out_dir, until, journal):
    """Run a scenario and write its metrics"""
    scenario = load_scenario(scenario_path)
    out = Path(out_dir) if out_dir else Path(SIM_OUTPUT_DIR) / scenario.name
    display_info_message(
        f"Running '{scenario.name}' ({len(scenario.agents)} agents, "
        f"{until or scenario.duration:g} s, seed {scenario.seed if seed is None else seed})"
    )

    session = None
    store_factory = None
    if journal:
        store_factory, session = journal_store_factory()
    try:
        log = Simulation(scenario, seed=seed, until=until, store_factory=store_factory).run()
        if session is not None:
            session.commit()
    finally:
        if session is not None:
            session.close()

    write_log(log, out)
    summary = log.summary
    display_success_message(
        f"Run complete, output in {out}",
        {
            "Coverage": f"{summary['coverage']:.3f}",
            "Artefacts": f"{summary['artefacts_correct']}/{summary['artefacts_total']}",
            "Reports scored": summary["reports_scored"],
            "Relays": summary["relays"],
        },
    )


@click.command(name="validate")
@click.argument("scenario_path", type=click.Path(dir_okay=False))
@handle_cli_errors
def validate_command(scenario_path):
    """Check a scenario file and list every problem"""
    data = read_scenario_file(scenario_path)
    scenario, errors = parse_scenario(data, name=Path(scenario_path).stem)
    if errors:
        report_scenario_errors(errors)
        raise click.exceptions.Exit(INVALID_SCENARIO_EXIT)
    display_success_message(
        f"Scenario '{scenario.name}' is valid",
        {
            "World": f"{scenario.world.cols}x{scenario.world.rows} cells of {scenario.world.cell_size:g} m",
            "Agents": len(scenario.agents),
            "Events": len(scenario.events),
            "Duration": f"{scenario.duration:g} s",
        },
    )
