"""
Artefact detection, tracking and reporting domain types
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

from models.frame import FrameId


class TrackId(NamedTuple):
    agent: int
    seq: int

    def __str__(self):
        return f"{self.agent}.{self.seq}"


@dataclass(frozen=True)
class Detection:
    label: str
    # Measured position in the detecting agent's odometry frame
    position: Tuple[float, float]
    posterior: float
    time: float
    agent: int


@dataclass
class ArtefactTrack:
    id: TrackId
    label: str
    mean: Tuple[float, float]
    sigma: float = 0.5
    count: int = 1
    last_seen: float = 0.0
    reported: bool = False
    reported_mean: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class Report:
    track_id: TrackId
    label: str
    frame_ref: FrameId
    point: Tuple[float, float]
    sigma: float
    count: int
    time: float


@dataclass(frozen=True)
class ScoredReport:
    report: Report
    position: Optional[Tuple[float, float]]
    correct: bool
    error: Optional[float]
    truth_id: Optional[int] = None


@dataclass(frozen=True)
class ScoreSummary:
    scored: Tuple[ScoredReport, ...]
    correct: int
    reports: int
    artefacts: int
    rms_error: Optional[float]
