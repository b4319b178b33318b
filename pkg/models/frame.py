"""
SLAM frame and pose-graph domain types
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from models.geometry import Pose2

HINT_SIGMA_XY = 2.5
HINT_SIGMA_THETA = math.radians(15.0)


class FrameId(NamedTuple):
    agent: int
    seq: int

    def __str__(self):
        return f"{self.agent}:{self.seq}"


@dataclass
class Frame:
    id: FrameId
    t_start: float
    t_end: float
    # Relative odometry from the previous frame; for seq 1 the odometry pose itself
    delta: Pose2
    sigma_xy: float
    sigma_theta: float
    features: np.ndarray
    odom_pose: Optional[Pose2] = None

    @property
    def size_bytes(self) -> int:
        return 64 + 8 * int(self.features.shape[0])


@dataclass(frozen=True)
class Hint:
    frame_a: FrameId
    frame_b: FrameId
    relative: Pose2
    sigma_xy: float = HINT_SIGMA_XY
    sigma_theta: float = HINT_SIGMA_THETA

    @property
    def key(self) -> Tuple[FrameId, FrameId]:
        return (self.frame_a, self.frame_b)


class EdgeKind(Enum):
    ODOMETRY = "odometry"
    MATCH = "match"
    HINT = "hint"


@dataclass(frozen=True)
class Edge:
    a: FrameId
    b: FrameId
    kind: EdgeKind
    relative: Pose2
    # Diagonal information (1/sigma^2) for x, y, theta
    information: Tuple[float, float, float]


@dataclass(frozen=True)
class MatchResult:
    relative: Optional[Pose2]
    rms: float
    inliers: int
    degenerate: bool = False

    @property
    def matched(self) -> bool:
        return self.relative is not None


class HypothesisSource(Enum):
    HINT = "hint"
    OVERLAP = "overlap"


class HypothesisState(Enum):
    PENDING = "pending"
    ACCEPTED = "accepted"
    REJECTED = "rejected"


@dataclass
class Candidate:
    """A pairwise match near a hypothesis and the endpoint offset it implies."""

    frame_a: FrameId
    frame_b: FrameId
    relative: Pose2
    implied: Pose2


@dataclass
class Hypothesis:
    frame_a: FrameId
    frame_b: FrameId
    source: HypothesisSource
    seed: Pose2
    required_support: int
    state: HypothesisState = HypothesisState.PENDING
    support: List[Candidate] = field(default_factory=list)

    @property
    def key(self) -> Tuple[FrameId, FrameId]:
        return (self.frame_a, self.frame_b)


@dataclass
class AtlasNode:
    frame_id: FrameId
    pose: Pose2
    root: bool = True
    parent: Optional[FrameId] = None
    # Pose of this frame in its parent root's frame (identity for roots)
    offset: Pose2 = field(default_factory=Pose2.identity)
    merged: bool = True


NodeTable = Dict[FrameId, AtlasNode]


@dataclass
class NoiseConfig:
    """Odometry drift per meter traveled, lidar range noise and detection noise."""

    odom_sigma_xy: float = 0.01
    odom_sigma_theta: float = math.radians(0.2)
    range_sigma: float = 0.02
    # Detection position noise sigma = base + per_meter x range
    detection_sigma: float = 0.05
    detection_sigma_per_meter: float = 0.02

    @classmethod
    def zero(cls) -> "NoiseConfig":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class AtlasConfig:
    frame_period: float = 5.0
    frame_window: float = 6.0
    voxel_size: float = 0.4
    max_features: int = 512
    sigma_floor_xy: float = 0.01
    sigma_floor_theta: float = math.radians(0.2)
    # Marginalisation
    redundant_xy: float = 1.0
    redundant_theta: float = math.radians(20.0)
    # ICP
    icp_radius: float = 1.0
    icp_max_iterations: int = 30
    icp_tolerance: float = 1e-4
    icp_min_inliers: int = 30
    icp_max_rms: float = 0.3
    match_sigma_xy: float = 0.05
    match_sigma_theta: float = math.radians(1.0)
    # Hypotheses
    candidate_window: int = 2
    candidate_cap: int = 20
    consistency_xy: float = 0.5
    consistency_theta: float = math.radians(5.0)
    hint_support: int = 2
    large_loop_gap: float = 10.0
    large_loop_support: int = 4
    loop_radius: float = 4.0
    loop_window: int = 1
    loop_min_gap: float = 5.0
    # Optimisation
    cauchy_xy: float = 0.5
    cauchy_theta: float = math.radians(5.0)
    max_iterations: int = 50
    relative_tolerance: float = 1e-6
    initial_damping: float = 1e-6
    max_damping: float = 1e2
