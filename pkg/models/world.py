"""
World model: grid cells, platforms, agent state and sensor output
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np

from models.geometry import Pose2


class CellKind(IntEnum):
    FREE = 0
    WALL = 1
    ROUGH = 2


class AgentKind(str, Enum):
    LARGE_UGV = "LargeUGV"
    SMALL_UGV = "SmallUGV"
    UAV = "UAV"


# Planner speeds (m/s) and constrained passage widths (m) per platform
DEFAULT_SPEED = {
    AgentKind.LARGE_UGV: 0.75,
    AgentKind.SMALL_UGV: 0.5,
    AgentKind.UAV: 2.0,
}

DEFAULT_PASSAGE_WIDTH = {
    AgentKind.SMALL_UGV: 0.75,
    AgentKind.LARGE_UGV: 1.0,
    AgentKind.UAV: 2.0,
}

DEFAULT_DROP_NODES = {
    AgentKind.LARGE_UGV: 1,
    AgentKind.SMALL_UGV: 0,
    AgentKind.UAV: 0,
}

# Tolerance used when comparing inscribed widths against passage widths
WIDTH_EPS = 1e-9


@dataclass
class AgentSpec:
    id: int
    kind: AgentKind
    start_pose: Pose2
    speed: Optional[float] = None
    passage_width: Optional[float] = None
    sensor_range: float = 20.0
    carried_uav: Optional[int] = None
    drop_nodes: Optional[int] = None

    def __post_init__(self):
        self.kind = AgentKind(self.kind)
        if self.speed is None:
            self.speed = DEFAULT_SPEED[self.kind]
        if self.passage_width is None:
            self.passage_width = DEFAULT_PASSAGE_WIDTH[self.kind]
        if self.drop_nodes is None:
            self.drop_nodes = DEFAULT_DROP_NODES[self.kind]

    @property
    def ignores_rough(self) -> bool:
        return self.kind == AgentKind.UAV


@dataclass
class Artefact:
    id: int
    label: str
    position: Tuple[float, float]

    @property
    def is_signal(self) -> bool:
        return self.label in SIGNAL_CLASSES


ARTEFACT_CLASSES = (
    "survivor",
    "backpack",
    "cellphone",
    "drill",
    "extinguisher",
    "gas",
    "vent",
    "helmet",
    "rope",
)
SIGNAL_CLASSES = frozenset({"cellphone", "gas"})


@dataclass
class GridWorld:
    """Row-major grid; row 0 is the first map line, y grows with the row index."""

    cell_size: float
    cells: np.ndarray
    costs: np.ndarray
    base_pose: Pose2
    artefacts: List[Artefact] = field(default_factory=list)
    _masks: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def rows(self) -> int:
        return int(self.cells.shape[0])

    @property
    def cols(self) -> int:
        return int(self.cells.shape[1])

    @property
    def extent(self) -> Tuple[float, float]:
        return (self.cols * self.cell_size, self.rows * self.cell_size)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols

    def cell_of(self, x: float, y: float) -> Tuple[int, int]:
        return (int(np.floor(y / self.cell_size)), int(np.floor(x / self.cell_size)))

    def cell_center(self, row: int, col: int) -> Tuple[float, float]:
        return ((col + 0.5) * self.cell_size, (row + 0.5) * self.cell_size)

    def is_wall(self, row: int, col: int) -> bool:
        if not self.in_bounds(row, col):
            return True
        return self.cells[row, col] == CellKind.WALL

    def wall_mask(self) -> np.ndarray:
        return self.cells == CellKind.WALL

    @cached_property
    def inscribed_width(self) -> np.ndarray:
        """Per-cell free width: min of the horizontal and vertical free runs."""
        return compute_inscribed_width(~self.wall_mask(), self.cell_size)

    @cached_property
    def padded_walls(self) -> np.ndarray:
        """Wall mask with a one-cell wall border; outside the map counts as wall."""
        return np.pad(self.wall_mask(), 1, constant_values=True)

    def traversable_mask(self, passage_width: float) -> np.ndarray:
        mask = self._masks.get(passage_width)
        if mask is None:
            mask = self.inscribed_width >= passage_width - WIDTH_EPS
            self._masks[passage_width] = mask
        return mask

    def movement_cost(self, row: int, col: int, ignores_rough: bool) -> float:
        if ignores_rough or not self.in_bounds(row, col):
            return 1.0
        return float(self.costs[row, col])


def _run_lengths(mask: np.ndarray) -> np.ndarray:
    """Length of the run of True cells each cell belongs to, along axis 1."""
    mask = np.asarray(mask, dtype=bool)
    rows, cols = mask.shape
    shifted = np.zeros_like(mask)
    shifted[:, 1:] = mask[:, :-1]
    run_id = np.cumsum(mask & ~shifted, axis=1)
    keys = np.arange(rows)[:, None] * (cols + 1) + run_id
    counts = np.bincount(keys[mask], minlength=rows * (cols + 1))
    out = np.zeros(mask.shape, dtype=int)
    out[mask] = counts[keys[mask]]
    return out


def compute_inscribed_width(open_mask: np.ndarray, cell_size: float) -> np.ndarray:
    """Per-cell free width: min of the horizontal and vertical open runs."""
    horizontal = _run_lengths(open_mask)
    vertical = _run_lengths(open_mask.T).T
    width = np.minimum(horizontal, vertical).astype(float) * cell_size
    width[~open_mask] = 0.0
    return width


@dataclass
class VelocityCommand:
    """Forward speed along the heading, or toward ``target`` when set."""

    speed: float = 0.0
    target: Optional[Tuple[float, float]] = None


@dataclass
class AgentState:
    spec: AgentSpec
    pose: Pose2
    odom: Pose2
    active: bool = True
    drop_nodes_left: int = 0
    uav_carried: bool = False
    blocked_ticks: int = 0
    blocked_target: Optional[Tuple[float, float]] = None
    navigation_failed: bool = False
    distance: float = 0.0
    last_delta: Pose2 = field(default_factory=Pose2.identity)

    @classmethod
    def spawn(cls, spec: AgentSpec, pose: Optional[Pose2] = None, odom: Optional[Pose2] = None):
        pose = pose or spec.start_pose
        return cls(
            spec=spec,
            pose=pose,
            odom=odom or pose,
            drop_nodes_left=int(spec.drop_nodes or 0),
            uav_carried=spec.carried_uav is not None,
        )


@dataclass
class SensorSweep:
    """One 360 degree sweep; points are in the agent's odometry frame."""

    time: float
    origin: Pose2
    points: np.ndarray
    free_cells: np.ndarray
    occupied_cells: np.ndarray
    # Odometry-frame headings of rays with no return within range
    open_headings: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0


class KnownState(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


class KnownMap:
    """An agent's observed copy of the world grid (unknown until sensed)."""

    def __init__(self, rows: int, cols: int, cell_size: float):
        self.cell_size = cell_size
        self.state = np.zeros((rows, cols), dtype=np.int8)
        self.cost = np.ones((rows, cols), dtype=float)
        self._width: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.state.shape

    def update(self, free_cells: np.ndarray, occupied_cells: np.ndarray, world: GridWorld):
        """Mark sensed cells; occupied observations never revert to free."""
        changed = False
        if len(free_cells):
            rows, cols = free_cells[:, 0], free_cells[:, 1]
            fresh = self.state[rows, cols] == KnownState.UNKNOWN
            if fresh.any():
                self.state[rows[fresh], cols[fresh]] = KnownState.FREE
                self.cost[rows[fresh], cols[fresh]] = world.costs[rows[fresh], cols[fresh]]
                changed = True
        if len(occupied_cells):
            rows, cols = occupied_cells[:, 0], occupied_cells[:, 1]
            fresh = self.state[rows, cols] != KnownState.OCCUPIED
            if fresh.any():
                self.state[rows[fresh], cols[fresh]] = KnownState.OCCUPIED
                changed = True
        if changed:
            self._width = None
        return changed

    def free_mask(self) -> np.ndarray:
        return self.state == KnownState.FREE

    def occupied_mask(self) -> np.ndarray:
        return self.state == KnownState.OCCUPIED

    def known_count(self) -> int:
        return int(np.count_nonzero(self.state == KnownState.FREE))

    def is_free(self, row: int, col: int) -> bool:
        rows, cols = self.state.shape
        return 0 <= row < rows and 0 <= col < cols and self.state[row, col] == KnownState.FREE

    def is_occupied(self, row: int, col: int) -> bool:
        rows, cols = self.state.shape
        if not (0 <= row < rows and 0 <= col < cols):
            return True
        return self.state[row, col] == KnownState.OCCUPIED

    def width(self) -> np.ndarray:
        """Inscribed width with unknown cells counted as open."""
        if self._width is None:
            self._width = compute_inscribed_width(~self.occupied_mask(), self.cell_size)
        return self._width

    def traversable_mask(self, passage_width: float) -> np.ndarray:
        return self.free_mask() & (self.width() >= passage_width - WIDTH_EPS)
