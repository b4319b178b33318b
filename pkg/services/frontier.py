"""
Visibility-based frontier detection, culling and reward discounting

Visibility uses hidden point removal: points are flipped about a large
circle centred on the observer and the convex hull of the flipped set
(plus the observer) marks the visible ones.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import shapely
from scipy.spatial import ConvexHull, QhullError, cKDTree

from models.frame import FrameId
from models.frontier import Frontier, FrontierKind, FrontierState, Viewpoint
from models.geometry import Pose2
from models.task import TaskId

logger = logging.getLogger(__name__)

Point = Tuple[float, float]
Resolver = Callable[[FrameId, np.ndarray], Optional[np.ndarray]]


@dataclass
class FrontierConfig:
    frontier_range: float = 8.0
    supplement_step: float = math.radians(2.0)
    flip_factor: float = 10.0
    max_gap: float = math.radians(6.0)
    opening_threshold: float = 1.5
    lookahead_distance: float = 0.4
    observer_offset: float = 1.0
    snap_radius: float = 3.0
    dedupe_radius: float = 1.5
    reward_per_meter: float = 10.0
    discount_distance: float = 5.0
    discount_floor: float = 0.05
    cull_motion: float = 1.0


@dataclass
class Visibility:
    """Result of hidden point removal around one origin (all in one frame)."""

    origin: Point
    points: np.ndarray
    supplement: np.ndarray
    visible: np.ndarray
    supplement_visible: np.ndarray
    # Visible points of both sets in angular order
    hull: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    hull_is_supplement: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    hull_angles: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class DetectedFrontier:
    vertices: np.ndarray
    kind: FrontierKind
    size: float
    observer: Pose2


def supplement_circle(origin: Point, radius: float, step: float) -> np.ndarray:
    count = int(round(2.0 * math.pi / step))
    angles = np.arange(count) * (2.0 * math.pi / count)
    return np.column_stack([origin[0] + radius * np.cos(angles), origin[1] + radius * np.sin(angles)])


def clip_returns(
    points: np.ndarray,
    origin: Point,
    max_range: float,
    open_headings: Sequence[float] = (),
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split a sweep at ``max_range``

    Returns beyond the range are projected onto the range circle, and rays
    with no return add a point on the circle at their heading. Both mark
    directions in which the sensor saw clear space out to the range.

    Returns:
        (near, clear): returns inside the range and the clear circle points
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    center = np.asarray(origin, dtype=float)
    relative = points - center
    norms = np.hypot(relative[:, 0], relative[:, 1])
    far = norms > max_range
    projected = center + relative[far] * (max_range / norms[far])[:, None]
    headings = np.asarray(open_headings, dtype=float).reshape(-1)
    open_points = center + max_range * np.column_stack([np.cos(headings), np.sin(headings)])
    return points[~far], np.vstack([projected, open_points]).reshape(-1, 2)


def hpr_visibility(
    points: np.ndarray,
    origin: Point,
    max_range: float,
    config: Optional[FrontierConfig] = None,
    supplement: bool = True,
    clear: Optional[np.ndarray] = None,
) -> Visibility:
    """
    Visible subset of ``points`` seen from ``origin``

    Args:
        points: Observed points (N x 2)
        origin: Observer position
        max_range: Input range; radius of the supplementary circle and the
            scale of the flip radius
        config: Supplement spacing and flip factor
        supplement: Add the circle of max-range points
        clear: Max-range points along rays known to be clear (see
            ``clip_returns``); they join the supplementary set and are always
            visible

    Returns:
        Visibility with masks over the input and supplementary points and the
        visible points in angular order
    """
    config = config or FrontierConfig()
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    extra = (
        supplement_circle(origin, max_range, config.supplement_step)
        if supplement
        else np.zeros((0, 2))
    )
    clear = np.zeros((0, 2)) if clear is None else np.asarray(clear, dtype=float).reshape(-1, 2)
    extra = np.vstack([extra, clear])
    combined = np.vstack([points, extra])
    relative = combined - np.asarray(origin, dtype=float)
    norms = np.hypot(relative[:, 0], relative[:, 1])
    keep = norms > 1e-6
    visible = np.zeros(combined.shape[0], dtype=bool)

    if keep.sum() < 3:
        visible[keep] = True
    else:
        flip_radius = config.flip_factor * max(float(max_range), float(norms[keep].max()))
        kept = relative[keep]
        kept_norms = norms[keep][:, None]
        flipped = kept + 2.0 * (flip_radius - kept_norms) * kept / kept_norms
        try:
            hull = ConvexHull(np.vstack([flipped, np.zeros((1, 2))]))
            on_hull = hull.vertices[hull.vertices < kept.shape[0]]
            visible[np.nonzero(keep)[0][on_hull]] = True
        except QhullError:
            visible[keep] = True
    visible[combined.shape[0] - clear.shape[0]:] = True

    n = points.shape[0]
    result = Visibility(
        origin=(float(origin[0]), float(origin[1])),
        points=points,
        supplement=extra,
        visible=visible[:n],
        supplement_visible=visible[n:],
    )
    index = np.nonzero(visible)[0]
    angles = np.arctan2(relative[index, 1], relative[index, 0])
    order = np.lexsort((norms[index], angles))
    result.hull = combined[index[order]]
    result.hull_is_supplement = index[order] >= n
    result.hull_angles = angles[order]
    return result


def _observer(
    vertices: np.ndarray,
    origin: Point,
    config: FrontierConfig,
    snap: Optional[Callable[[Point, float], Optional[Point]]],
) -> Optional[Pose2]:
    centroid = vertices.mean(axis=0)
    inward = np.asarray(origin) - centroid
    length = float(np.hypot(*inward))
    if length < 1e-9:
        target = (float(origin[0]), float(origin[1]))
    else:
        step = min(config.observer_offset, length)
        target = tuple(centroid + inward / length * step)
    if snap is not None:
        target = snap(target, config.snap_radius)
        if target is None:
            return None
    heading = math.atan2(centroid[1] - target[1], centroid[0] - target[0])
    return Pose2(target[0], target[1], heading)


def detect_frontiers(
    visibility: Visibility,
    config: Optional[FrontierConfig] = None,
    is_occupied: Optional[Callable[[Point], bool]] = None,
    snap: Optional[Callable[[Point, float], Optional[Point]]] = None,
) -> List[DetectedFrontier]:
    """
    MaxRange and Opening frontiers of one viewpoint

    MaxRange frontiers are maximal runs of visible supplementary points,
    split where the angular gap exceeds ``max_gap``. Opening frontiers are
    hull edges longer than ``opening_threshold`` between observed points
    whose far side is not known to be occupied. Frontiers whose observer
    cannot be snapped to traversable space are dropped.
    """
    config = config or FrontierConfig()
    hull = visibility.hull
    flags = visibility.hull_is_supplement
    angles = visibility.hull_angles
    count = hull.shape[0]
    found: List[DetectedFrontier] = []
    if count == 0:
        return found

    # links[i]: hull points i and i+1 belong to the same supplement run
    links = []
    for i in range(count):
        j = (i + 1) % count
        gap = (angles[j] - angles[i]) % (2.0 * math.pi) if count > 1 else 2.0 * math.pi
        links.append(bool(flags[i] and flags[j]) and gap <= config.max_gap + 1e-9)
    runs: List[List[int]] = []
    if all(links):
        runs.append(list(range(count)))
    else:
        start = (links.index(False) + 1) % count
        current: List[int] = []
        for k in range(count):
            i = (start + k) % count
            if flags[i]:
                current.append(i)
            if not links[i] and current:
                runs.append(current)
                current = []
    arc_step = config.supplement_step * config.frontier_range
    for run in runs:
        vertices = hull[run]
        size = float(np.sum(np.hypot(*np.diff(vertices, axis=0).T))) if len(run) > 1 else 0.0
        size = max(size, arc_step)
        observer = _observer(vertices, visibility.origin, config, snap)
        if observer is not None:
            found.append(DetectedFrontier(vertices, FrontierKind.MAX_RANGE, size, observer))

    # Openings between consecutive observed points
    if count >= 2:
        for i in range(count):
            j = (i + 1) % count
            if flags[i] or flags[j] or i == j:
                continue
            a, b = hull[i], hull[j]
            length = float(np.hypot(*(b - a)))
            if length <= config.opening_threshold:
                continue
            midpoint = (a + b) / 2.0
            outward = midpoint - np.asarray(visibility.origin)
            norm = float(np.hypot(*outward))
            if norm > 1e-9 and is_occupied is not None:
                beyond = midpoint + outward / norm * config.lookahead_distance
                if is_occupied((float(beyond[0]), float(beyond[1]))):
                    continue
            vertices = np.vstack([a, midpoint, b])
            observer = _observer(vertices, visibility.origin, config, snap)
            if observer is not None:
                found.append(DetectedFrontier(vertices, FrontierKind.OPENING, length, observer))
    return found


def cull_masks(
    frontiers: Sequence[Frontier],
    viewpoints: Sequence[Viewpoint],
    resolve: Resolver,
) -> Dict[TaskId, Optional[np.ndarray]]:
    """
    Active-vertex mask of every frontier against every viewpoint

    A vertex stays active unless it lies strictly inside some viewpoint
    hull. Frontiers whose frame cannot be resolved map to None (skipped this
    round). The result depends only on the inputs, never on earlier calls.
    """
    polygons = []
    for viewpoint in viewpoints:
        hull = resolve(viewpoint.frame_ref, viewpoint.hull)
        if hull is not None and hull.shape[0] >= 3:
            polygon = shapely.Polygon(hull)
            if not polygon.is_valid:
                polygon = shapely.make_valid(polygon)
            polygons.append(polygon)
    tree = shapely.STRtree(polygons) if polygons else None

    masks: Dict[TaskId, Optional[np.ndarray]] = {}
    for frontier in frontiers:
        vertices = resolve(frontier.frame_ref, frontier.vertices)
        if vertices is None:
            masks[frontier.id] = None
            continue
        inside = np.zeros(vertices.shape[0], dtype=bool)
        if tree is not None:
            hits = tree.query(shapely.points(vertices), predicate="within")
            inside[np.unique(hits[0])] = True
        masks[frontier.id] = ~inside
    return masks


def cull(
    frontiers: Sequence[Frontier],
    viewpoints: Sequence[Viewpoint],
    resolve: Resolver,
) -> List[TaskId]:
    """
    Recompute every frontier's state from scratch

    Returns:
        Ids of frontiers that are culled after this pass
    """
    culled = []
    for frontier_id, mask in cull_masks(frontiers, viewpoints, resolve).items():
        if mask is None:
            continue
        frontier = next(f for f in frontiers if f.id == frontier_id)
        frontier.active_mask = mask
        frontier.state = FrontierState.ACTIVE if mask.any() else FrontierState.CULLED
        if not mask.any():
            culled.append(frontier_id)
    return culled


def discount_reward(
    size: float,
    observer: Point,
    trail: Optional[np.ndarray],
    config: Optional[FrontierConfig] = None,
) -> float:
    """
    Base reward (size x reward per meter) scaled by agent proximity

    The factor is clamp(d_min / d0, floor, 1) with d_min the distance from
    the nearest trail point of any agent to the observer position.
    """
    config = config or FrontierConfig()
    reward = size * config.reward_per_meter
    if trail is None or len(trail) == 0:
        return reward
    d_min, _ = cKDTree(np.asarray(trail, dtype=float).reshape(-1, 2)).query(observer)
    factor = min(1.0, max(config.discount_floor, d_min / config.discount_distance))
    return reward * factor


class FrontierMap:
    """
    Frontiers and viewpoints held by one agent

    Viewpoints stay local; frontiers (own and received) are culled against
    them whenever the agent has moved ``cull_motion`` meters or the atlas
    moved frames.
    """

    def __init__(self, agent_id: int, config: Optional[FrontierConfig] = None):
        self.agent_id = agent_id
        self.config = config or FrontierConfig()
        self.viewpoints: List[Viewpoint] = []
        self.frontiers: Dict[TaskId, Frontier] = {}
        self.trails: Dict[int, List[Point]] = {}

    def add_viewpoint(self, viewpoint: Viewpoint):
        self.viewpoints.append(viewpoint)

    def add_frontier(self, frontier: Frontier) -> bool:
        if frontier.id in self.frontiers:
            return False
        self.frontiers[frontier.id] = frontier
        return True

    def is_duplicate(self, observer: Point, resolve: Resolver) -> bool:
        """True if an active frontier's observer lies within the dedupe radius."""
        for frontier in self.active():
            position = resolve(frontier.frame_ref, np.array([frontier.observer.position]))
            if position is None:
                continue
            if math.hypot(position[0, 0] - observer[0], position[0, 1] - observer[1]) <= self.config.dedupe_radius:
                return True
        return False

    def recull(self, resolve: Resolver) -> List[TaskId]:
        ordered = [self.frontiers[k] for k in sorted(self.frontiers)]
        return cull(ordered, self.viewpoints, resolve)

    def active(self) -> List[Frontier]:
        return [self.frontiers[k] for k in sorted(self.frontiers) if self.frontiers[k].is_active]

    def record_trail(self, agent_id: int, point: Point):
        trail = self.trails.setdefault(agent_id, [])
        if not trail or math.hypot(trail[-1][0] - point[0], trail[-1][1] - point[1]) >= 0.5:
            trail.append((float(point[0]), float(point[1])))

    def trail_points(self) -> Optional[np.ndarray]:
        chunks = [np.asarray(self.trails[k]) for k in sorted(self.trails) if self.trails[k]]
        return np.vstack(chunks) if chunks else None

    def reward(self, frontier: Frontier, resolve: Resolver) -> float:
        observer = resolve(frontier.frame_ref, np.array([frontier.observer.position]))
        if observer is None:
            return 0.0
        fraction = 1.0
        if frontier.active_mask is not None and len(frontier.active_mask):
            fraction = float(np.mean(frontier.active_mask))
        return discount_reward(
            frontier.size * fraction, tuple(observer[0]), self.trail_points(), self.config
        )


def viewpoint_from(visibility: Visibility, frame_ref: FrameId, to_frame: Pose2, created: float) -> Viewpoint:
    """Viewpoint whose hull is stored in ``frame_ref`` coordinates (float32-rounded)."""
    local = to_frame.inverse_transform_points(visibility.hull)
    local = np.asarray(local, dtype=np.float32).astype(float)
    origin = to_frame.inverse().compose(Pose2(visibility.origin[0], visibility.origin[1], 0.0))
    return Viewpoint(origin=origin, frame_ref=frame_ref, hull=local, created=created)


def frontier_from(
    detected: DetectedFrontier, frontier_id: TaskId, frame_ref: FrameId, to_frame: Pose2
) -> Frontier:
    """Frame-referenced frontier, rounded as the wire carries it."""
    local = np.asarray(to_frame.inverse_transform_points(detected.vertices), dtype=np.float32).astype(float)
    observer = to_frame.inverse().compose(detected.observer)
    observer = Pose2(
        float(np.float32(observer.x)), float(np.float32(observer.y)), float(np.float32(observer.theta))
    )
    return Frontier(
        id=frontier_id,
        frame_ref=frame_ref,
        vertices=local,
        kind=detected.kind,
        size=float(np.float32(detected.size)),
        observer=observer,
    )


def atlas_resolver(atlas) -> Resolver:
    """Array resolver backed by atlas node poses."""

    def resolve(frame_ref: FrameId, points: np.ndarray) -> Optional[np.ndarray]:
        pose = atlas.pose_of(frame_ref)
        if pose is None:
            return None
        return pose.transform_points(points)

    return resolve
