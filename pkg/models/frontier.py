"""
Frontier exploration domain types
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np

from models.frame import FrameId
from models.geometry import Pose2
from models.task import TaskId


class FrontierKind(IntEnum):
    MAX_RANGE = 0
    OPENING = 1


class FrontierState(IntEnum):
    ACTIVE = 0
    CULLED = 1


@dataclass
class Viewpoint:
    """Visible region from one observation; hull is in frame-local coordinates."""

    origin: Pose2
    frame_ref: FrameId
    hull: np.ndarray
    created: float


@dataclass
class Frontier:
    # Shares its id with the Explore task created for it
    id: TaskId
    frame_ref: FrameId
    vertices: np.ndarray
    kind: FrontierKind
    size: float
    observer: Pose2
    state: FrontierState = FrontierState.ACTIVE
    active_mask: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def centroid(self):
        return tuple(np.asarray(self.vertices, dtype=float).mean(axis=0))

    @property
    def is_active(self) -> bool:
        return self.state == FrontierState.ACTIVE
