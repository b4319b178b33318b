"""
Navigation: grid planning over an agent's own observed map and the
waypoint follower that turns topometric plans into velocity commands
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from models.geometry import Pose2
from models.world import AgentState, KnownMap, VelocityCommand
from services.topomap import Plan

logger = logging.getLogger(__name__)

Point = Tuple[float, float]
Cell = Tuple[int, int]

# (row offset, col offset) of the grid graph edges; the reverse direction is implied
_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass
class NavigationConfig:
    goal_tolerance: float = 0.5
    waypoint_tolerance: float = 1.0
    replan_period: float = 5.0
    local_replan_period: float = 2.0
    window_margin: float = 6.0
    snap_radius: float = 1.0
    shortcut_horizon: int = 40


class NavStatus(Enum):
    IDLE = "idle"
    ACTIVE = "active"
    ARRIVED = "arrived"
    FAILED = "failed"


def _edge_arrays(mask: np.ndarray, cost: np.ndarray):
    rows, cols = mask.shape
    index = np.arange(rows * cols).reshape(rows, cols)
    sources, targets, weights = [], [], []
    for dr, dc in _OFFSETS:
        r0, r1 = 0, rows - dr
        c0, c1 = max(0, -dc), cols - max(0, dc)
        a = mask[r0:r1, c0:c1] & mask[r0 + dr: r1 + dr, c0 + dc: c1 + dc]
        if dr and dc:
            # No corner cutting: both orthogonal neighbours must be open too
            a &= mask[r0:r1, c0 + dc: c1 + dc] & mask[r0 + dr: r1 + dr, c0:c1]
        length = math.hypot(dr, dc)
        step = 0.5 * (cost[r0:r1, c0:c1] + cost[r0 + dr: r1 + dr, c0 + dc: c1 + dc]) * length
        sources.append(index[r0:r1, c0:c1][a])
        targets.append(index[r0 + dr: r1 + dr, c0 + dc: c1 + dc][a])
        weights.append(step[a])
    return np.concatenate(sources), np.concatenate(targets), np.concatenate(weights)


def grid_path(
    mask: np.ndarray,
    cost: np.ndarray,
    start: Cell,
    goal: Cell,
) -> Tuple[Optional[List[Cell]], float]:
    """
    Exact 8-connected shortest path over open cells

    Diagonal moves may not cut corners. Edge weight is the mean cell cost
    times the step length in cells.

    Returns:
        (cells from start to goal, cost in cell units) or (None, inf)
    """
    rows, cols = mask.shape
    if not (mask[start] and mask[goal]):
        return None, math.inf
    sources, targets, weights = _edge_arrays(mask, cost)
    n = rows * cols
    graph = coo_matrix((weights, (sources, targets)), shape=(n, n)).tocsr()
    start_index = start[0] * cols + start[1]
    goal_index = goal[0] * cols + goal[1]
    distances, predecessors = dijkstra(
        graph, directed=False, indices=start_index, return_predecessors=True
    )
    if not np.isfinite(distances[goal_index]):
        return None, math.inf
    path = [goal_index]
    while path[-1] != start_index:
        path.append(int(predecessors[path[-1]]))
    path.reverse()
    return [(i // cols, i % cols) for i in path], float(distances[goal_index])


def segment_clear(mask: np.ndarray, cell_size: float, p: Point, q: Point, offset: Cell = (0, 0)) -> bool:
    """All quarter-cell samples of p-q fall on open cells of ``mask``."""
    length = math.hypot(q[0] - p[0], q[1] - p[1])
    count = max(1, int(math.ceil(length / (0.25 * cell_size))))
    t = np.linspace(0.0, 1.0, count + 1)
    rows = np.floor((p[1] + t * (q[1] - p[1])) / cell_size).astype(int) - offset[0]
    cols = np.floor((p[0] + t * (q[0] - p[0])) / cell_size).astype(int) - offset[1]
    inside = (rows >= 0) & (rows < mask.shape[0]) & (cols >= 0) & (cols < mask.shape[1])
    return bool(inside.all() and mask[rows, cols].all())


def nearest_open_cell(
    mask: np.ndarray, cell_size: float, point: Point, radius: float, offset: Cell = (0, 0)
) -> Optional[Cell]:
    """Open cell of ``mask`` whose center is closest to ``point``, if within ``radius``."""
    open_cells = np.argwhere(mask)
    if open_cells.size == 0:
        return None
    centers = (open_cells[:, ::-1] + np.array([offset[1], offset[0]]) + 0.5) * cell_size
    d = np.hypot(centers[:, 0] - point[0], centers[:, 1] - point[1])
    best = int(np.argmin(d))
    if d[best] > radius:
        return None
    return (int(open_cells[best, 0]), int(open_cells[best, 1]))


def shortcut(points: List[Point], mask: np.ndarray, cell_size: float, offset: Cell, horizon: int) -> List[Point]:
    """Greedy line-of-sight smoothing of a polyline."""
    if len(points) <= 2:
        return list(points)
    kept = [points[0]]
    i = 0
    while i < len(points) - 1:
        j = min(len(points) - 1, i + horizon)
        while j > i + 1 and not segment_clear(mask, cell_size, points[i], points[j], offset):
            j -= 1
        kept.append(points[j])
        i = j
    return kept


def plan_local(
    known: KnownMap,
    start: Point,
    goal: Point,
    passage_width: float,
    ignores_rough: bool,
    config: Optional[NavigationConfig] = None,
) -> Optional[List[Point]]:
    """
    Smoothed path over an agent's observed map, in world coordinates

    The search is limited to a window around start and goal. A goal cell
    that is not open is replaced by the nearest open cell within
    ``snap_radius``.

    Returns:
        Polyline from start to goal (exclusive of start), or None
    """
    config = config or NavigationConfig()
    cs = known.cell_size
    n_rows, n_cols = known.shape
    margin = int(math.ceil(config.window_margin / cs))
    sr, sc = int(math.floor(start[1] / cs)), int(math.floor(start[0] / cs))
    gr, gc = int(math.floor(goal[1] / cs)), int(math.floor(goal[0] / cs))
    r0 = max(0, min(sr, gr) - margin)
    r1 = min(n_rows, max(sr, gr) + margin + 1)
    c0 = max(0, min(sc, gc) - margin)
    c1 = min(n_cols, max(sc, gc) + margin + 1)
    if not (r0 <= sr < r1 and c0 <= sc < c1):
        return None
    mask = known.traversable_mask(passage_width)[r0:r1, c0:c1].copy()
    cost = np.ones(mask.shape) if ignores_rough else known.cost[r0:r1, c0:c1]
    start_cell = (sr - r0, sc - c0)
    mask[start_cell] = True

    goal_cell = (gr - r0, gc - c0)
    snapped = False
    inside = 0 <= goal_cell[0] < mask.shape[0] and 0 <= goal_cell[1] < mask.shape[1]
    if not inside or not mask[goal_cell]:
        goal_cell = nearest_open_cell(mask, cs, goal, config.snap_radius, (r0, c0))
        if goal_cell is None:
            return None
        snapped = True

    cells, _ = grid_path(mask, cost, start_cell, goal_cell)
    if cells is None:
        return None
    points = [start] + [((c + c0 + 0.5) * cs, (r + r0 + 0.5) * cs) for r, c in cells[1:]]
    end = ((goal_cell[1] + c0 + 0.5) * cs, (goal_cell[0] + r0 + 0.5) * cs) if snapped else goal
    if len(points) > 1:
        points[-1] = end
    else:
        points.append(end)
    smoothed = shortcut(points, mask, cs, (r0, c0), config.shortcut_horizon)
    return smoothed[1:]


@dataclass
class NavigationContext:
    """What the follower needs from its agent, as callables."""

    state: Callable[[], AgentState]
    believed: Callable[[], Pose2]
    to_world: Callable[[Point], Point]
    plan_global: Callable[[Point, Point], Optional[Plan]]
    known: KnownMap
    on_new_goal: Optional[Callable[[], None]] = None


@dataclass
class Navigator:
    """Follows a global goal: topometric waypoints, refined by local grid paths."""

    context: NavigationContext
    config: NavigationConfig = field(default_factory=NavigationConfig)
    goal: Optional[Point] = None
    tolerance: float = 0.5
    status: NavStatus = NavStatus.IDLE
    reason: str = ""
    plan: Optional[Plan] = None
    waypoint_index: int = 0
    _planned_at: float = -math.inf
    _local: List[Point] = field(default_factory=list)
    _local_target: Optional[Point] = None
    _local_at: float = -math.inf

    def set_goal(self, goal: Point, tolerance: Optional[float] = None):
        if self.goal is not None and goal == self.goal and self.status == NavStatus.ACTIVE:
            return
        self.goal = (float(goal[0]), float(goal[1]))
        self.tolerance = self.config.goal_tolerance if tolerance is None else tolerance
        self.status = NavStatus.ACTIVE
        self.reason = ""
        self.plan = None
        self._planned_at = -math.inf
        self._local = []
        self._local_target = None
        if self.context.on_new_goal is not None:
            self.context.on_new_goal()

    def clear(self):
        self.goal = None
        self.plan = None
        self.status = NavStatus.IDLE
        self._local = []

    def distance_to_goal(self) -> float:
        if self.goal is None:
            return math.inf
        pose = self.context.believed()
        return math.hypot(self.goal[0] - pose.x, self.goal[1] - pose.y)

    def _fail(self, reason: str, time: float) -> VelocityCommand:
        self.status = NavStatus.FAILED
        self.reason = reason
        logger.debug(f"Navigation to {self.goal} failed at t={time:.1f}: {reason}")
        return VelocityCommand()

    def _current_waypoint(self) -> Point:
        pose = self.context.believed()
        waypoints = self.plan.waypoints
        while self.waypoint_index < len(waypoints) - 1:
            wx, wy = waypoints[self.waypoint_index]
            if math.hypot(wx - pose.x, wy - pose.y) > self.config.waypoint_tolerance:
                break
            self.waypoint_index += 1
        return waypoints[self.waypoint_index]

    def update(self, time: float) -> VelocityCommand:
        """Velocity command for this tick; updates ``status``."""
        if self.goal is None or self.status != NavStatus.ACTIVE:
            return VelocityCommand()
        if self.distance_to_goal() <= self.tolerance:
            self.status = NavStatus.ARRIVED
            return VelocityCommand()
        state = self.context.state()
        if state.navigation_failed:
            return self._fail("blocked", time)

        if self.plan is None or time - self._planned_at >= self.config.replan_period:
            pose = self.context.believed()
            plan = self.context.plan_global(pose.position, self.goal)
            self._planned_at = time
            if plan is None:
                # Without a topometric route, try the agent's own map directly
                plan = Plan(waypoints=[self.goal], cost=math.inf)
                world_goal = self.context.to_world(self.goal)
                direct = plan_local(
                    self.context.known, state.pose.position, world_goal,
                    state.spec.passage_width, state.spec.ignores_rough, self.config,
                )
                if direct is None:
                    return self._fail("unreachable", time)
            self.plan = plan
            self.waypoint_index = 0

        waypoint = self._current_waypoint()
        target = self.context.to_world(waypoint)
        stale = (
            self._local_target is None
            or math.hypot(target[0] - self._local_target[0], target[1] - self._local_target[1]) > 0.25
            or time - self._local_at >= self.config.local_replan_period
            or state.blocked_ticks > 0
        )
        if stale:
            path = plan_local(
                self.context.known, state.pose.position, target,
                state.spec.passage_width, state.spec.ignores_rough, self.config,
            )
            self._local = path if path else [target]
            self._local_target = target
            self._local_at = time
        x, y = state.pose.position
        while len(self._local) > 1 and math.hypot(self._local[0][0] - x, self._local[0][1] - y) < 0.05:
            self._local.pop(0)
        return VelocityCommand(speed=state.spec.speed, target=self._local[0])
