"""
Integration tests for the simulator CLI
"""

import json

import pytest

from cli.main import cli
from services.metrics import AGENTS_FILE, NETWORK_FILE, REPORTS_FILE, SUMMARY_FILE


class TestValidateCommand:
    def test_bundled_scenario_is_valid(self, runner, scenario_path):
        result = runner.invoke(cli, ["validate", str(scenario_path("corridor"))])

        assert result.exit_code == 0
        assert "Scenario 'corridor' is valid" in result.output
        assert "Agents: 1" in result.output

    def test_invalid_scenario_lists_errors(self, runner, scenario_data, tmp_path):
        data = scenario_data("corridor")
        data["seed"] = -3
        data["agents"][0]["kind"] = "Boat"
        path = tmp_path / "broken.json"
        path.write_text(json.dumps(data))

        result = runner.invoke(cli, ["validate", str(path)])

        assert result.exit_code == 2
        assert "3 error(s)" in result.output
        assert "event for unknown agent" in result.output
        assert "Unknown agent kind 'Boat'" in result.output

    def test_missing_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["validate", str(tmp_path / "nope.json")])

        assert result.exit_code == 2


class TestRunAndScore:
    """A short run followed by re-scoring its output"""

    @pytest.fixture
    def finished_run(self, runner, scenario_path, out_dir):
        result = runner.invoke(
            cli, ["run", str(scenario_path("corridor")), "--until", "5", "--out", str(out_dir)]
        )
        assert result.exit_code == 0, result.output
        return out_dir

    def test_run_writes_outputs(self, finished_run):
        for name in (AGENTS_FILE, NETWORK_FILE, SUMMARY_FILE, REPORTS_FILE):
            assert (finished_run / name).is_file()

        summary = json.loads((finished_run / SUMMARY_FILE).read_text())
        assert summary["scenario"] == "corridor"
        assert summary["duration"] == 5.0
        assert summary["artefacts_total"] == 1

    def test_seed_override(self, runner, scenario_path, out_dir):
        result = runner.invoke(
            cli, ["run", str(scenario_path("empty")), "--until", "2", "--seed", "11", "--out", str(out_dir)]
        )

        assert result.exit_code == 0
        assert json.loads((out_dir / SUMMARY_FILE).read_text())["seed"] == 11

    def test_score_finished_run(self, runner, finished_run):
        result = runner.invoke(cli, ["score", str(finished_run), "--verbose"])

        assert result.exit_code == 0
        assert "artefacts scored" in result.output
        assert "Scored reports" in result.output

    def test_score_without_reports(self, runner, tmp_path):
        result = runner.invoke(cli, ["score", str(tmp_path)])

        assert result.exit_code == 1
        assert "Not found" in result.output

    def test_run_invalid_scenario(self, runner, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("[]")

        result = runner.invoke(cli, ["run", str(path)])

        assert result.exit_code == 2
        assert "scenario must be a JSON object" in result.output

    def test_until_must_be_positive(self, runner, scenario_path):
        result = runner.invoke(cli, ["run", str(scenario_path("corridor")), "--until", "0"])

        assert result.exit_code == 2
