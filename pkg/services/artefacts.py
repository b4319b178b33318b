"""
Artefact detection, tracking, reporting and scoring
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import multivariate_normal

from models.artefact import ArtefactTrack, Detection, Report, ScoredReport, ScoreSummary, TrackId
from models.frame import FrameId
from models.geometry import Pose2
from models.world import AgentState, Artefact, GridWorld
from services.world import line_of_sight
from utils.mission_logger import mission_logger

logger = logging.getLogger(__name__)

Point = Tuple[float, float]
# Odometry point -> (frame, frame-local point), None while no frame exists
FrameReference = Callable[[Point], Optional[Tuple[FrameId, Point]]]


@dataclass
class ArtefactConfig:
    detection_range: float = 20.0
    p0: float = 0.15
    sigma_base: float = 0.05
    sigma_per_meter: float = 0.02
    posterior_low: float = 0.3
    posterior_high: float = 1.0
    threshold: float = 0.5
    detection_period: float = 1.0
    track_sigma: float = 0.5
    new_track_distance: float = 1.0
    expiry: float = 30.0
    maturity: int = 3
    resend_distance: float = 0.5
    reports_per_minute: float = 6.0
    bucket_capacity: float = 1.0
    proximity_radius: float = 10.0
    score_radius: float = 5.0


def detection_probability(distance: float, config: Optional[ArtefactConfig] = None) -> float:
    """Per-tick chance of detecting an artefact in line of sight."""
    config = config or ArtefactConfig()
    if distance > config.detection_range:
        return 0.0
    return config.p0 * max(0.0, 1.0 - distance / config.detection_range)


def simulate_detection(
    agent_state: AgentState,
    artefact: Artefact,
    world: GridWorld,
    rng: np.random.Generator,
    time: float,
    config: Optional[ArtefactConfig] = None,
) -> Optional[Detection]:
    """
    One detection attempt for a visual artefact

    The measured position is expressed in the agent's odometry frame.
    Detections whose sampled posterior is below the class threshold are
    not reported.
    """
    config = config or ArtefactConfig()
    pose = agent_state.pose
    distance = math.hypot(artefact.position[0] - pose.x, artefact.position[1] - pose.y)
    if distance > config.detection_range:
        return None
    if not line_of_sight(world, pose.position, artefact.position):
        return None
    if rng.random() >= detection_probability(distance, config):
        return None
    sigma = config.sigma_base + config.sigma_per_meter * distance
    noise = rng.normal(0.0, sigma, size=2)
    posterior = float(rng.uniform(config.posterior_low, config.posterior_high))
    if posterior < config.threshold:
        return None
    measured = (artefact.position[0] + noise[0], artefact.position[1] + noise[1])
    to_odom = agent_state.odom.compose(pose.inverse())
    return Detection(
        label=artefact.label,
        position=to_odom.transform_point(measured),
        posterior=posterior,
        time=time,
        agent=agent_state.spec.id,
    )


def track_density(point: Point, mean: Point, sigma: float) -> float:
    return float(multivariate_normal.pdf(point, mean=mean, cov=sigma * sigma))


def new_track_density(config: Optional[ArtefactConfig] = None) -> float:
    """Uniform density equal to the track density at ``new_track_distance``."""
    config = config or ArtefactConfig()
    return track_density((config.new_track_distance, 0.0), (0.0, 0.0), config.track_sigma)


class TokenBucket:
    def __init__(self, rate: float, capacity: float, start: float = 0.0):
        self.rate = rate
        self.capacity = capacity
        self.tokens = capacity
        self.last = start

    def take(self, now: float) -> bool:
        self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
        self.last = now
        if self.tokens + 1e-9 >= 1.0:
            self.tokens -= 1.0
            return True
        return False


class ArtefactTracker:
    """
    One agent's artefact tracks (odometry frame) and report throttle

    Tracks mature after ``maturity`` associated detections and are re-sent
    only after their mean moved more than ``resend_distance``.
    """

    def __init__(self, agent_id: int, config: Optional[ArtefactConfig] = None):
        self.agent_id = agent_id
        self.config = config or ArtefactConfig()
        self.tracks: Dict[TrackId, ArtefactTrack] = {}
        self.raw_detections = 0
        self.reports_sent = 0
        self.bucket = TokenBucket(self.config.reports_per_minute / 60.0, self.config.bucket_capacity)
        self._seq = 0
        self._uniform = new_track_density(self.config)

    def next_id(self) -> TrackId:
        self._seq += 1
        return TrackId(self.agent_id, self._seq)

    def update(self, detection: Detection) -> ArtefactTrack:
        """Associate a detection with the best same-class track or open a new one."""
        self.raw_detections += 1
        best, best_score = None, self._uniform
        for track_id in sorted(self.tracks):
            track = self.tracks[track_id]
            if track.label != detection.label:
                continue
            score = track_density(detection.position, track.mean, track.sigma)
            if score >= best_score:
                best, best_score = track, score
        if best is None:
            track = ArtefactTrack(
                id=self.next_id(),
                label=detection.label,
                mean=detection.position,
                sigma=self.config.track_sigma,
                last_seen=detection.time,
            )
            self.tracks[track.id] = track
            logger.debug(f"Agent {self.agent_id} new {track.label} track {track.id}")
            return track
        count = best.count + 1
        best.mean = (
            best.mean[0] + (detection.position[0] - best.mean[0]) / count,
            best.mean[1] + (detection.position[1] - best.mean[1]) / count,
        )
        best.count = count
        best.last_seen = detection.time
        return best

    def expire(self, now: float) -> List[TrackId]:
        stale = [t for t, track in sorted(self.tracks.items()) if now - track.last_seen > self.config.expiry]
        for track_id in stale:
            del self.tracks[track_id]
        return stale

    def sendable(self) -> List[ArtefactTrack]:
        ready = []
        for track_id in sorted(self.tracks):
            track = self.tracks[track_id]
            if track.count < self.config.maturity:
                continue
            if track.reported and track.reported_mean is not None:
                moved = math.hypot(track.mean[0] - track.reported_mean[0], track.mean[1] - track.reported_mean[1])
                if moved <= self.config.resend_distance:
                    continue
            ready.append(track)
        return ready

    def throttle_and_send(self, now: float, reference: FrameReference) -> List[Report]:
        """Reports allowed out now; tracks without a frame wait without using a token."""
        reports = []
        for track in self.sendable():
            located = reference(track.mean)
            if located is None:
                continue
            if not self.bucket.take(now):
                break
            frame_ref, point = located
            track.reported = True
            track.reported_mean = track.mean
            report = Report(
                track_id=track.id,
                label=track.label,
                frame_ref=frame_ref,
                point=point,
                sigma=track.sigma,
                count=min(track.count, 0xFFFF),
                time=now,
            )
            reports.append(report)
            self.reports_sent += 1
            mission_logger.log_report_sent(
                self.agent_id, now, {"track": str(track.id), "label": track.label, "frame": str(frame_ref)}
            )
        return reports

    def signal_report(self, label: str, position: Point, now: float, reference: FrameReference) -> Optional[Report]:
        """Report for one completed proximity encounter."""
        located = reference(position)
        if located is None:
            return None
        frame_ref, point = located
        report = Report(
            track_id=self.next_id(),
            label=label,
            frame_ref=frame_ref,
            point=point,
            sigma=self.config.track_sigma,
            count=1,
            time=now,
        )
        self.reports_sent += 1
        mission_logger.log_report_sent(
            self.agent_id, now, {"track": str(report.track_id), "label": label, "frame": str(frame_ref)}
        )
        return report


@dataclass
class Encounter:
    distance: float
    position: Point


@dataclass
class ProximityDetector:
    """Closest-approach reports for signal-emitting artefacts."""

    config: ArtefactConfig = field(default_factory=ArtefactConfig)
    open: Dict[int, Encounter] = field(default_factory=dict)

    def update(self, agent_state: AgentState, artefacts: Iterable[Artefact]) -> List[Tuple[Artefact, Point]]:
        """
        Track encounters; returns (artefact, odometry position) for each one
        that ended this call
        """
        finished = []
        pose = agent_state.pose
        for artefact in artefacts:
            if not artefact.is_signal:
                continue
            distance = math.hypot(artefact.position[0] - pose.x, artefact.position[1] - pose.y)
            encounter = self.open.get(artefact.id)
            if distance <= self.config.proximity_radius:
                if encounter is None or distance < encounter.distance:
                    self.open[artefact.id] = Encounter(distance, agent_state.odom.position)
            elif encounter is not None:
                finished.append((artefact, encounter.position))
                del self.open[artefact.id]
        return finished

    def finish(self, artefacts: Sequence[Artefact]) -> List[Tuple[Artefact, Point]]:
        """Close every open encounter (end of run)."""
        by_id = {a.id: a for a in artefacts}
        finished = [(by_id[k], self.open[k].position) for k in sorted(self.open) if k in by_id]
        self.open = {}
        return finished


class ReportStore:
    """Base-side report intake: latest report per track, held until its frame is known."""

    def __init__(self):
        self.latest: Dict[TrackId, Report] = {}
        self.received = 0

    def add(self, report: Report) -> bool:
        self.received += 1
        current = self.latest.get(report.track_id)
        if current is not None and current.time >= report.time:
            return False
        self.latest[report.track_id] = report
        return True

    def ingested(self, atlas) -> List[Tuple[Report, Point]]:
        """Reports whose frame the atlas has placed, with their global positions."""
        resolved = []
        for track_id in sorted(self.latest):
            report = self.latest[track_id]
            position = atlas.resolve(report.frame_ref, report.point)
            if position is not None:
                resolved.append((report, position))
        return resolved


def score(
    reports: Sequence[Tuple[Report, Point]],
    artefacts: Sequence[Artefact],
    base_pose: Pose2,
    config: Optional[ArtefactConfig] = None,
) -> ScoreSummary:
    """
    One-to-one matching of reports to ground truth

    Truth is taken relative to the base pose. Pairs of matching class within
    ``score_radius`` are taken greedily by increasing distance.
    """
    config = config or ArtefactConfig()
    truth = (
        base_pose.inverse_transform_points(np.array([a.position for a in artefacts], dtype=float))
        if artefacts else np.zeros((0, 2))
    )
    positions = np.array([p for _, p in reports], dtype=float).reshape(-1, 2)
    distances = cdist(positions, truth) if len(reports) and len(artefacts) else np.zeros((len(reports), len(artefacts)))

    pairs = []
    for i, (report, _) in enumerate(reports):
        for j, artefact in enumerate(artefacts):
            if report.label == artefact.label and distances[i, j] <= config.score_radius:
                pairs.append((float(distances[i, j]), i, j))
    pairs.sort()
    matched_reports: Dict[int, Tuple[int, float]] = {}
    matched_truth = set()
    for distance, i, j in pairs:
        if i in matched_reports or j in matched_truth:
            continue
        matched_reports[i] = (j, distance)
        matched_truth.add(j)

    scored = []
    for i, (report, position) in enumerate(reports):
        match = matched_reports.get(i)
        if match is None:
            scored.append(ScoredReport(report, position, False, None))
        else:
            j, distance = match
            scored.append(ScoredReport(report, position, True, distance, artefacts[j].id))
    errors = [s.error for s in scored if s.correct]
    rms = float(np.sqrt(np.mean(np.square(errors)))) if errors else None
    return ScoreSummary(
        scored=tuple(scored),
        correct=len(errors),
        reports=len(reports),
        artefacts=len(artefacts),
        rms_error=rms,
    )
