"""
Metrics sampling and the run output files

Every value is written with fixed formatting so two runs of the same
scenario and seed produce identical bytes.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.artefact import Report, ScoreSummary, TrackId
from models.frame import FrameId
from models.geometry import Pose2
from models.metrics import AgentSample, MetricsLog, TopicSample
from models.world import Artefact
from services.artefacts import ArtefactConfig, score
from services.netsim import LATENCY_BINS
from services.world import reachable_free_cells

logger = logging.getLogger(__name__)

AGENT_COLUMNS = (
    "time", "agent", "x", "y", "coverage", "active_frontiers", "sync_fraction",
    "tasks_total", "tasks_owned", "reports_sent",
)
NETWORK_COLUMNS = ("time", "topic", "bytes")

AGENTS_FILE = "agents.csv"
NETWORK_FILE = "network.csv"
SUMMARY_FILE = "summary.json"
REPORTS_FILE = "reports.json"

DIGITS = 6


def fixed(value: Optional[float], digits: int = DIGITS) -> Optional[float]:
    """Round for output; -0.0 becomes 0.0."""
    if value is None:
        return None
    rounded = round(float(value), digits)
    return 0.0 if rounded == 0 else rounded


def sync_fraction(agent) -> float:
    """Share of the agent's persistent bytes the base is known to hold."""
    total = agent.mule.store.total_bytes
    if total == 0:
        return 1.0
    return 1.0 - agent.mule.unsynced_to_base_bytes() / total


class MetricsRecorder:
    """Collects the 1 Hz time series of a run."""

    def __init__(self, world):
        self.world = world
        self.log = MetricsLog()
        self.reachable: Dict[int, np.ndarray] = {}

    def register(self, agent):
        """Reachable free cells of a new agent, from where it enters the world."""
        spec = agent.spec
        self.reachable[agent.agent_id] = reachable_free_cells(
            self.world, [agent.state.pose.position], spec.passage_width
        )

    def coverage(self, agent) -> float:
        reachable = self.reachable[agent.agent_id]
        count = int(np.count_nonzero(reachable))
        if count == 0:
            return 0.0
        return int(np.count_nonzero(agent.known.free_mask() & reachable)) / count

    def team_coverage(self, agents: Iterable) -> float:
        agents = list(agents)
        if not agents:
            return 0.0
        reachable = np.zeros((self.world.rows, self.world.cols), dtype=bool)
        seen = np.zeros_like(reachable)
        for agent in agents:
            mask = self.reachable[agent.agent_id]
            reachable |= mask
            seen |= agent.known.free_mask() & mask
        count = int(np.count_nonzero(reachable))
        return int(np.count_nonzero(seen)) / count if count else 0.0

    def sample(self, time: float, agents: Sequence, network):
        for agent in agents:
            x, y = agent.state.pose.position
            self.log.agent_samples.append(
                AgentSample(
                    time=time,
                    agent=agent.agent_id,
                    x=x,
                    y=y,
                    coverage=self.coverage(agent),
                    active_frontiers=len(agent.frontiers.active()),
                    sync_fraction=sync_fraction(agent),
                    tasks_total=len(agent.table),
                    tasks_owned=len(agent.table.owned_by(agent.agent_id)),
                    reports_sent=agent.tracker.reports_sent,
                )
            )
        for topic in sorted(network.stats.topic_bytes):
            self.log.topic_samples.append(TopicSample(time, topic, network.stats.topic_bytes[topic]))


def report_entries(summary: ScoreSummary) -> List[Dict[str, Any]]:
    entries = []
    for scored in summary.scored:
        report = scored.report
        entries.append(
            {
                "track": [report.track_id.agent, report.track_id.seq],
                "label": report.label,
                "frame": [report.frame_ref.agent, report.frame_ref.seq],
                "point": [fixed(report.point[0]), fixed(report.point[1])],
                "position": [fixed(scored.position[0]), fixed(scored.position[1])],
                "sigma": fixed(report.sigma),
                "count": report.count,
                "time": fixed(report.time),
                "correct": scored.correct,
                "error": fixed(scored.error),
                "truth_id": scored.truth_id,
            }
        )
    return entries


def reports_document(
    summary: ScoreSummary, artefacts: Sequence[Artefact], base_pose: Pose2, config: ArtefactConfig
) -> Dict[str, Any]:
    """Scored reports plus the ground truth needed to score them again."""
    return {
        "base_pose": [fixed(base_pose.x), fixed(base_pose.y), fixed(base_pose.theta)],
        "score_radius": fixed(config.score_radius),
        "truth": [
            {"id": a.id, "label": a.label, "position": [fixed(a.position[0]), fixed(a.position[1])]}
            for a in artefacts
        ],
        "reports": report_entries(summary),
    }


def build_summary(
    scenario,
    seed: int,
    duration: float,
    agents: Sequence,
    base,
    network,
    recorder: MetricsRecorder,
    result: ScoreSummary,
    relay_mules: Sequence = (),
) -> Dict[str, Any]:
    mules = [base.mule] + [a.mule for a in agents] + list(relay_mules)
    per_agent = {}
    for agent in agents:
        per_agent[str(agent.agent_id)] = {
            "kind": agent.kind.value,
            "distance": fixed(agent.state.distance),
            "coverage": fixed(recorder.coverage(agent)),
            "raw_detections": agent.tracker.raw_detections,
            "reports_sent": agent.tracker.reports_sent,
            "drop_nodes_left": agent.state.drop_nodes_left,
        }
    tasks = base.table.rows.values()
    return {
        "scenario": scenario.name,
        "seed": seed,
        "duration": fixed(duration),
        "agents": per_agent,
        "coverage": fixed(recorder.team_coverage(agents)),
        "artefacts_correct": result.correct,
        "artefacts_total": result.artefacts,
        "reports_scored": result.reports,
        "rms_error": fixed(result.rms_error),
        "latency_histogram": {
            "bins": [fixed(b) if np.isfinite(b) else "inf" for b in LATENCY_BINS],
            "counts": network.stats.latency_histogram(),
        },
        "topic_bytes": {t: fixed(b) for t, b in sorted(network.stats.topic_bytes.items())},
        "delivered": network.stats.delivered,
        "dropped_broadcast": network.stats.dropped_broadcast,
        "dropped_overflow": network.stats.dropped_overflow,
        "redundant_requests": sum(m.redundant_requests for m in mules),
        "malformed": sum(m.malformed for m in mules)
        + sum(a.table.malformed for a in agents)
        + base.table.malformed
        + base.malformed_reports,
        "relays": len(network.relays),
        "tasks": {
            "total": len(base.table),
            "complete": sum(1 for t in tasks if t.is_complete),
        },
        "base_synced": {
            str(a.agent_id): fixed(sync_fraction(a)) for a in agents
        },
    }


def write_agents_csv(path: Path, samples: Iterable[AgentSample]):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(AGENT_COLUMNS)
        for s in samples:
            writer.writerow(
                [
                    f"{s.time:.1f}", s.agent, f"{s.x:.4f}", f"{s.y:.4f}", f"{s.coverage:.6f}",
                    s.active_frontiers, f"{s.sync_fraction:.6f}", s.tasks_total, s.tasks_owned,
                    s.reports_sent,
                ]
            )


def write_network_csv(path: Path, samples: Iterable[TopicSample]):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(NETWORK_COLUMNS)
        for s in samples:
            writer.writerow([f"{s.time:.1f}", s.topic, f"{s.bytes:.0f}"])


def write_json(path: Path, document: Dict[str, Any]):
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


def write_log(log: MetricsLog, out_dir) -> Path:
    """Write the four output files; returns the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_agents_csv(out / AGENTS_FILE, log.agent_samples)
    write_network_csv(out / NETWORK_FILE, log.topic_samples)
    write_json(out / SUMMARY_FILE, log.summary)
    write_json(out / REPORTS_FILE, log.reports)
    logger.info(f"Metrics written to {out}")
    return out


def load_reports(path) -> Tuple[List[Tuple[Report, Tuple[float, float]]], List[Artefact], Pose2, ArtefactConfig]:
    """
    Read a reports.json back into scoring inputs

    Raises:
        ValueError: If the document is not a reports file
    """
    document = json.loads(Path(path).read_text())
    try:
        base_pose = Pose2(*document["base_pose"])
        config = ArtefactConfig(score_radius=float(document["score_radius"]))
        artefacts = [Artefact(t["id"], t["label"], tuple(t["position"])) for t in document["truth"]]
        pairs = []
        for entry in document["reports"]:
            report = Report(
                track_id=TrackId(*entry["track"]),
                label=entry["label"],
                frame_ref=FrameId(*entry["frame"]),
                point=tuple(entry["point"]),
                sigma=entry["sigma"],
                count=entry["count"],
                time=entry["time"],
            )
            pairs.append((report, tuple(entry["position"])))
    except (KeyError, TypeError) as e:
        raise ValueError(f"{path} is not a reports file: missing {e}")
    return pairs, artefacts, base_pose, config


def rescore(out_dir) -> ScoreSummary:
    """Score the reports of a finished run again from its reports.json."""
    pairs, artefacts, base_pose, config = load_reports(Path(out_dir) / REPORTS_FILE)
    return score(pairs, artefacts, base_pose, config)
