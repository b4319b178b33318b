"""
Tests for metrics sampling, output files and rescoring
"""

import json
from types import SimpleNamespace
from unittest.mock import MagicMock

import numpy as np
import pytest

from models.artefact import Report, TrackId
from models.frame import FrameId
from models.geometry import Pose2
from models.metrics import AgentSample, MetricsLog, TopicSample
from models.world import Artefact
from services.artefacts import ArtefactConfig, score
from services.metrics import (
    AGENTS_FILE,
    NETWORK_FILE,
    REPORTS_FILE,
    SUMMARY_FILE,
    MetricsRecorder,
    fixed,
    load_reports,
    reports_document,
    rescore,
    sync_fraction,
    write_json,
    write_log,
)


def fake_agent(agent_id, seen_rows, world):
    """Agent stub that has observed whole rows of the room"""
    free = np.zeros((world.rows, world.cols), dtype=bool)
    free[seen_rows, 1:-1] = True
    return SimpleNamespace(
        agent_id=agent_id,
        spec=SimpleNamespace(passage_width=0.75),
        state=SimpleNamespace(pose=Pose2(0.375, 0.375)),
        known=SimpleNamespace(free_mask=lambda: free),
    )


class TestFixed:
    def test_rounding(self):
        assert fixed(1.23456789) == 1.234568
        assert fixed(None) is None

    def test_negative_zero(self):
        assert str(fixed(-1e-9)) == "0.0"


class TestSyncFraction:
    def test_empty_store_counts_as_synced(self):
        agent = MagicMock()
        agent.mule.store.total_bytes = 0
        assert sync_fraction(agent) == 1.0

    def test_unsynced_share(self):
        agent = MagicMock()
        agent.mule.store.total_bytes = 400
        agent.mule.unsynced_to_base_bytes.return_value = 100
        assert sync_fraction(agent) == pytest.approx(0.75)


class TestCoverage:
    """Coverage is measured against cells reachable from the entry point"""

    def test_single_agent(self, open_world):
        recorder = MetricsRecorder(open_world)
        agent = fake_agent(1, slice(1, 5), open_world)
        recorder.register(agent)

        assert recorder.coverage(agent) == pytest.approx(0.5)

    def test_team_union(self, open_world):
        recorder = MetricsRecorder(open_world)
        agents = [fake_agent(1, slice(1, 5), open_world), fake_agent(2, slice(3, 7), open_world)]
        for agent in agents:
            recorder.register(agent)

        assert recorder.team_coverage(agents) == pytest.approx(0.75)
        assert recorder.team_coverage([]) == 0.0


class TestOutputFiles:
    def test_write_log(self, tmp_path):
        log = MetricsLog(
            agent_samples=[AgentSample(1.0, 1, 1.5, 2.0, 0.5, 3, 1.0, 2, 1, 0)],
            topic_samples=[TopicSample(1.0, "frames", 1234.4)],
            summary={"seed": 7, "coverage": 0.5},
            reports={"reports": []},
        )

        out = write_log(log, tmp_path / "run")

        agents = (out / AGENTS_FILE).read_text().splitlines()
        assert agents[0].startswith("time,agent,x,y,coverage")
        assert agents[1] == "1.0,1,1.5000,2.0000,0.500000,3,1.000000,2,1,0"
        assert (out / NETWORK_FILE).read_text() == "time,topic,bytes\n1.0,frames,1234\n"
        assert (out / SUMMARY_FILE).read_text() == '{\n  "coverage": 0.5,\n  "seed": 7\n}\n'
        assert json.loads((out / REPORTS_FILE).read_text()) == {"reports": []}


class TestRescore:
    """Scoring a finished run again from its reports file"""

    @pytest.fixture
    def run_dir(self, tmp_path):
        artefacts = [Artefact(1, "survivor", (11.0, 1.0)), Artefact(2, "gas", (21.0, 1.0))]
        pairs = [
            (Report(TrackId(1, 1), "survivor", FrameId(1, 4), (10.0, 0.5), 0.5, 3, 40.0), (10.0, 0.5)),
            (Report(TrackId(2, 1), "gas", FrameId(2, 2), (30.0, 0.0), 0.5, 1, 80.0), (30.0, 0.0)),
        ]
        base_pose = Pose2(1.0, 1.0)
        summary = score(pairs, artefacts, base_pose)
        write_json(tmp_path / REPORTS_FILE, reports_document(summary, artefacts, base_pose, ArtefactConfig()))
        return tmp_path

    def test_document_contents(self, run_dir):
        document = json.loads((run_dir / REPORTS_FILE).read_text())

        assert document["score_radius"] == 5.0
        assert [r["correct"] for r in document["reports"]] == [True, False]
        assert document["reports"][0]["truth_id"] == 1

    def test_rescore_matches_original(self, run_dir):
        summary = rescore(run_dir)

        assert summary.correct == 1
        assert summary.reports == 2
        assert summary.artefacts == 2
        assert summary.rms_error == pytest.approx(0.5)

    def test_load_reports_round_trip(self, run_dir):
        pairs, artefacts, base_pose, config = load_reports(run_dir / REPORTS_FILE)

        assert pairs[0][0].track_id == TrackId(1, 1)
        assert pairs[0][0].frame_ref == FrameId(1, 4)
        assert base_pose == Pose2(1.0, 1.0)
        assert [a.label for a in artefacts] == ["survivor", "gas"]

    def test_not_a_reports_file(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"seed": 1}')

        with pytest.raises(ValueError, match="not a reports file"):
            load_reports(path)
