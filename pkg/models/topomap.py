"""
Topometric map domain types
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, NamedTuple, Tuple

import numpy as np

from models.frame import FrameId
from models.geometry import Pose2

UNOBSERVED = 0
FATAL = 255
MIN_COST_CODE = 10
MAX_COST_CODE = 254

SUBMAP_CELLS = 80
SUBMAP_RESOLUTION = 0.25
SUBMAP_ORIGIN = -SUBMAP_CELLS // 2


class SupercellId(NamedTuple):
    frame: FrameId
    index: int

    def __str__(self):
        return f"{self.frame}#{self.index}"


@dataclass
class CostmapBundle:
    """Cost codes of one root frame's grid (anchor-relative cell origin)."""

    frame_ref: FrameId
    origin: Tuple[int, int]
    cells: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.cells.shape


@dataclass
class Submap:
    root_frame: FrameId
    # Grid axes in frame-local coordinates; cell (r, c) center is
    # anchor * ((origin + c + 0.5) * res, (origin + r + 0.5) * res)
    anchor: Pose2
    grid: np.ndarray = field(
        default_factory=lambda: np.zeros((SUBMAP_CELLS, SUBMAP_CELLS), dtype=np.uint8)
    )
    origin: int = SUBMAP_ORIGIN
    resolution: float = SUBMAP_RESOLUTION
    dirty: bool = True

    def cell_centers(self) -> np.ndarray:
        """Anchor-frame centers of every cell, shape (rows, cols, 2)."""
        rows, cols = self.grid.shape
        xs = (self.origin + np.arange(cols) + 0.5) * self.resolution
        ys = (self.origin + np.arange(rows) + 0.5) * self.resolution
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)


@dataclass
class Supercell:
    id: SupercellId
    cells: List[Tuple[int, int]]
    centroid: Tuple[float, float]
    mean_cost: float
    min_width: float
