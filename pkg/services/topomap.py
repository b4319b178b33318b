"""
Topometric navigation: per-root-frame cost submaps, supercell segmentation,
inter-submap edges and shortest-time planning
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree

from models.frame import FrameId
from models.geometry import Pose2
from models.topomap import (
    FATAL,
    MAX_COST_CODE,
    MIN_COST_CODE,
    SUBMAP_CELLS,
    SUBMAP_ORIGIN,
    SUBMAP_RESOLUTION,
    UNOBSERVED,
    CostmapBundle,
    Submap,
    Supercell,
    SupercellId,
)
from models.world import WIDTH_EPS, AgentKind, KnownMap, KnownState, _run_lengths

logger = logging.getLogger(__name__)

# Open cells padded around a submap so runs reaching its border count as long
BORDER_PAD = 40


@dataclass
class TopomapConfig:
    cost_exponent: float = 1.0
    cost_tolerance: float = 0.5
    max_radius: float = 2.5
    width_breaks: Tuple[float, ...] = (0.75, 1.0, 2.0)
    neighbor_radius: float = 20.0
    rebuild_xy: float = 0.1
    rebuild_theta: float = math.radians(1.0)
    snap_distance: float = 2.0


@dataclass
class Plan:
    waypoints: List[Tuple[float, float]]
    cost: float
    supercells: List[SupercellId] = field(default_factory=list)


def cost_code(cost: np.ndarray, exponent: float = 1.0) -> np.ndarray:
    """Traversable cost multiplier to its wire code (cost x 10, clipped)."""
    scaled = np.power(np.asarray(cost, dtype=float), exponent) * 10.0
    return np.clip(np.round(scaled), MIN_COST_CODE, MAX_COST_CODE).astype(np.uint8)


def snap(value: float, resolution: float = SUBMAP_RESOLUTION) -> float:
    return math.floor(value / resolution) * resolution


def submap_anchor(frame_odom: Pose2, resolution: float = SUBMAP_RESOLUTION) -> Pose2:
    """
    Grid anchor of a root frame, in frame-local coordinates

    The grid is axis-aligned in the odometry frame with its center snapped
    to the grid resolution, so cells line up with the world grid when
    odometry is exact.
    """
    return frame_odom.inverse().compose(
        Pose2(snap(frame_odom.x, resolution), snap(frame_odom.y, resolution), 0.0)
    )


def merge_cells(grid: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Fatal wins, then observed over unobserved, then the lower cost."""
    merged = np.where(grid == UNOBSERVED, cells, np.where(cells == UNOBSERVED, grid, np.minimum(grid, cells)))
    merged[(grid == FATAL) | (cells == FATAL)] = FATAL
    return merged.astype(np.uint8)


def costmap_from_known(
    known: KnownMap,
    frame_ref: FrameId,
    frame_odom: Pose2,
    odom_to_world: Pose2,
    config: Optional[TopomapConfig] = None,
) -> Optional[CostmapBundle]:
    """
    Resample an agent's known map into a root frame's submap grid

    Args:
        known: The agent's observed grid (world indices)
        frame_ref: Root frame the bundle is tagged with
        frame_odom: Odometry pose of that frame
        odom_to_world: Current odometry-to-world transform of the agent

    Returns:
        The bounding box of observed cells, or None if nothing was observed
    """
    config = config or TopomapConfig()
    anchor = submap_anchor(frame_odom)
    submap = Submap(root_frame=frame_ref, anchor=anchor)
    centers = submap.cell_centers().reshape(-1, 2)
    to_world = odom_to_world.compose(frame_odom).compose(anchor)
    world_points = to_world.transform_points(centers)
    rows = np.floor(world_points[:, 1] / known.cell_size).astype(int)
    cols = np.floor(world_points[:, 0] / known.cell_size).astype(int)
    n_rows, n_cols = known.shape
    inside = (rows >= 0) & (rows < n_rows) & (cols >= 0) & (cols < n_cols)

    codes = np.zeros(centers.shape[0], dtype=np.uint8)
    state = np.full(centers.shape[0], KnownState.UNKNOWN, dtype=np.int8)
    state[inside] = known.state[rows[inside], cols[inside]]
    free = state == KnownState.FREE
    codes[free] = cost_code(known.cost[rows[free], cols[free]], config.cost_exponent)
    codes[state == KnownState.OCCUPIED] = FATAL
    grid = codes.reshape(SUBMAP_CELLS, SUBMAP_CELLS)

    observed_rows = np.nonzero(grid.any(axis=1))[0]
    observed_cols = np.nonzero(grid.any(axis=0))[0]
    if observed_rows.size == 0:
        return None
    r0, r1 = int(observed_rows[0]), int(observed_rows[-1]) + 1
    c0, c1 = int(observed_cols[0]), int(observed_cols[-1]) + 1
    return CostmapBundle(
        frame_ref=frame_ref,
        origin=(SUBMAP_ORIGIN + c0, SUBMAP_ORIGIN + r0),
        cells=grid[r0:r1, c0:c1].copy(),
    )


def merge_costmap(submap: Submap, bundle: CostmapBundle) -> bool:
    """
    Merge a bundle into its submap in place

    Returns:
        True if any cell changed
    """
    r0 = bundle.origin[1] - submap.origin
    c0 = bundle.origin[0] - submap.origin
    h, w = bundle.cells.shape
    rows, cols = submap.grid.shape
    # Clip bundles that reach outside the submap extent
    br0, bc0 = max(0, -r0), max(0, -c0)
    br1, bc1 = min(h, rows - r0), min(w, cols - c0)
    if br0 >= br1 or bc0 >= bc1:
        return False
    target = submap.grid[r0 + br0: r0 + br1, c0 + bc0: c0 + bc1]
    merged = merge_cells(target, bundle.cells[br0:br1, bc0:bc1])
    if np.array_equal(merged, target):
        return False
    submap.grid[r0 + br0: r0 + br1, c0 + bc0: c0 + bc1] = merged
    submap.dirty = True
    return True


def submap_widths(grid: np.ndarray, resolution: float = SUBMAP_RESOLUTION) -> np.ndarray:
    """Inscribed width per cell; unobserved counts as open, border runs as long."""
    open_mask = np.pad(grid != FATAL, BORDER_PAD, constant_values=True)
    horizontal = _run_lengths(open_mask)
    vertical = _run_lengths(open_mask.T).T
    width = np.minimum(horizontal, vertical).astype(float) * resolution
    width = width[BORDER_PAD:-BORDER_PAD, BORDER_PAD:-BORDER_PAD]
    width[grid == FATAL] = 0.0
    return width


def segment(submap: Submap, config: Optional[TopomapConfig] = None) -> Tuple[List[Supercell], np.ndarray]:
    """
    Deterministic region growing of a submap's traversable cells

    Seeds are taken at the lowest unassigned (row, col); a region grows
    breadth-first through 4-neighbours with a cost within ``cost_tolerance``
    of the region mean, the same width class and within ``max_radius`` of
    the seed.

    Returns:
        Supercells in seed order and a label grid (-1 for non-members)
    """
    config = config or TopomapConfig()
    grid = submap.grid
    res = submap.resolution
    traversable = (grid != UNOBSERVED) & (grid != FATAL)
    cost = grid.astype(float) / 10.0
    width = submap_widths(grid, res)
    width_class = np.digitize(width, config.width_breaks)
    labels = np.full(grid.shape, -1, dtype=int)
    centers = submap.anchor.transform_points(submap.cell_centers().reshape(-1, 2)).reshape(
        grid.shape + (2,)
    )
    rows, cols = grid.shape
    max_cells = config.max_radius / res

    supercells: List[Supercell] = []
    for seed in zip(*np.nonzero(traversable)):
        if labels[seed] >= 0:
            continue
        index = len(supercells)
        labels[seed] = index
        members = [seed]
        total = cost[seed]
        seed_class = width_class[seed]
        queue = deque([seed])
        while queue:
            r, c = queue.popleft()
            for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if not (0 <= nr < rows and 0 <= nc < cols):
                    continue
                if labels[nr, nc] >= 0 or not traversable[nr, nc]:
                    continue
                if width_class[nr, nc] != seed_class:
                    continue
                if math.hypot(nr - seed[0], nc - seed[1]) > max_cells:
                    continue
                if abs(cost[nr, nc] - total / len(members)) > config.cost_tolerance:
                    continue
                labels[nr, nc] = index
                members.append((nr, nc))
                total += cost[nr, nc]
                queue.append((nr, nc))
        member_array = np.array(members)
        centroid = centers[member_array[:, 0], member_array[:, 1]].mean(axis=0)
        supercells.append(
            Supercell(
                id=SupercellId(submap.root_frame, index),
                cells=[(int(r), int(c)) for r, c in members],
                centroid=(float(centroid[0]), float(centroid[1])),
                mean_cost=float(total / len(members)),
                min_width=float(width[member_array[:, 0], member_array[:, 1]].min()),
            )
        )
    submap.dirty = False
    return supercells, labels


def _adjacent_labels(labels: np.ndarray) -> List[Tuple[int, int]]:
    pairs = set()
    for a, b in ((labels[:-1, :], labels[1:, :]), (labels[:, :-1], labels[:, 1:])):
        mask = (a >= 0) & (b >= 0) & (a != b)
        for x, y in zip(a[mask], b[mask]):
            pairs.add((min(int(x), int(y)), max(int(x), int(y))))
    return sorted(pairs)


class TopoMap:
    """One agent's topometric graph over every root frame it holds costmaps for."""

    def __init__(self, config: Optional[TopomapConfig] = None):
        self.config = config or TopomapConfig()
        self.submaps: Dict[FrameId, Submap] = {}
        self.pending: List[CostmapBundle] = []
        self.supercells: Dict[FrameId, List[Supercell]] = {}
        self.labels: Dict[FrameId, np.ndarray] = {}
        self.graph = nx.Graph()
        self._global: Dict[FrameId, Pose2] = {}
        self._pair_poses: Dict[Tuple[FrameId, FrameId], Pose2] = {}
        self._pair_edges: Dict[Tuple[FrameId, FrameId], List[Tuple[SupercellId, SupercellId]]] = {}

    # --- costmaps ------------------------------------------------------------

    def add_bundle(self, bundle: CostmapBundle, atlas) -> bool:
        """Merge a bundle now if its frame is known, else queue it."""
        odom = atlas.odom.get(bundle.frame_ref)
        if odom is None:
            self.pending.append(bundle)
            return False
        submap = self.submaps.get(bundle.frame_ref)
        if submap is None:
            submap = Submap(root_frame=bundle.frame_ref, anchor=submap_anchor(odom))
            self.submaps[bundle.frame_ref] = submap
        return merge_costmap(submap, bundle)

    def flush_pending(self, atlas) -> int:
        waiting, self.pending = self.pending, []
        merged = 0
        for bundle in waiting:
            if self.add_bundle(bundle, atlas):
                merged += 1
        return merged

    # --- graph ---------------------------------------------------------------

    def refresh(self, atlas) -> int:
        """Re-segment dirty submaps and rebuild edges that need it."""
        self.flush_pending(atlas)
        changed = set()
        for frame_id in sorted(self.submaps):
            submap = self.submaps[frame_id]
            if not submap.dirty and frame_id in self.supercells:
                continue
            cells, labels = segment(submap, self.config)
            self.supercells[frame_id] = cells
            self.labels[frame_id] = labels
            self._replace_subgraph(frame_id, cells, labels)
            changed.add(frame_id)
        return self.rebuild_edges(atlas, changed)

    def _replace_subgraph(self, frame_id: FrameId, cells: List[Supercell], labels: np.ndarray):
        stale = [n for n in self.graph.nodes if n.frame == frame_id]
        self.graph.remove_nodes_from(stale)
        for cell in cells:
            self.graph.add_node(cell.id, cost=cell.mean_cost, width=cell.min_width)
        for a, b in _adjacent_labels(labels):
            self._add_edge(cells[a], cells[b], None)

    def _add_edge(self, a: Supercell, b: Supercell, distance: Optional[float]):
        if distance is None:
            distance = math.hypot(a.centroid[0] - b.centroid[0], a.centroid[1] - b.centroid[1])
        self.graph.add_edge(
            a.id, b.id, distance=distance, cost=0.5 * (a.mean_cost + b.mean_cost)
        )

    def global_pose(self, frame_id: FrameId, atlas) -> Optional[Pose2]:
        pose = atlas.pose_of(frame_id)
        submap = self.submaps.get(frame_id)
        if pose is None or submap is None:
            return None
        return pose.compose(submap.anchor)

    def rebuild_edges(self, atlas, changed=frozenset()) -> int:
        """
        Recompute inter-submap edges for root-frame pairs whose relative pose
        moved beyond the rebuild thresholds (or whose submaps changed)

        Returns:
            Number of frame pairs recomputed
        """
        config = self.config
        frames = sorted(f for f in self.supercells if atlas.pose_of(f) is not None)
        poses = {f: atlas.pose_of(f) for f in frames}
        rebuilt = 0
        for i, a in enumerate(frames):
            for b in frames[i + 1:]:
                if poses[a].distance_to(poses[b]) > config.neighbor_radius:
                    if (a, b) in self._pair_poses:
                        self._drop_pair(a, b)
                        del self._pair_poses[(a, b)]
                    continue
                relative = poses[a].between(poses[b])
                previous = self._pair_poses.get((a, b))
                if (
                    previous is not None
                    and a not in changed
                    and b not in changed
                    and previous.is_close(relative, config.rebuild_xy, config.rebuild_theta)
                ):
                    continue
                self._drop_pair(a, b)
                self._link_pair(a, b, atlas)
                self._pair_poses[(a, b)] = relative
                rebuilt += 1
        return rebuilt

    def _drop_pair(self, a: FrameId, b: FrameId):
        stale = self._pair_edges.pop((a, b), [])
        self.graph.remove_edges_from([e for e in stale if self.graph.has_edge(*e)])

    def _link_pair(self, a: FrameId, b: FrameId, atlas):
        """Edges between supercells whose cells overlap when a's cells are mapped into b."""
        pose_a = self.global_pose(a, atlas)
        pose_b = self.global_pose(b, atlas)
        submap_a, submap_b = self.submaps[a], self.submaps[b]
        labels_a, labels_b = self.labels[a], self.labels[b]
        members = np.argwhere(labels_a >= 0)
        if members.size == 0:
            return
        centers = submap_a.cell_centers()[members[:, 0], members[:, 1]]
        in_b = pose_b.inverse().compose(pose_a).transform_points(centers)
        cols = np.floor(in_b[:, 0] / submap_b.resolution).astype(int) - submap_b.origin
        rows = np.floor(in_b[:, 1] / submap_b.resolution).astype(int) - submap_b.origin
        n_rows, n_cols = labels_b.shape
        inside = (rows >= 0) & (rows < n_rows) & (cols >= 0) & (cols < n_cols)
        label_b = np.full(members.shape[0], -1)
        label_b[inside] = labels_b[rows[inside], cols[inside]]
        hit = label_b >= 0
        pairs = np.unique(
            np.stack([labels_a[members[hit, 0], members[hit, 1]], label_b[hit]], axis=1), axis=0
        )
        cells_a, cells_b = self.supercells[a], self.supercells[b]
        for la, lb in pairs:
            ca, cb = cells_a[int(la)], cells_b[int(lb)]
            ga = atlas.pose_of(a).transform_point(ca.centroid)
            gb = atlas.pose_of(b).transform_point(cb.centroid)
            self._add_edge(ca, cb, math.hypot(ga[0] - gb[0], ga[1] - gb[1]))
            self._pair_edges.setdefault((a, b), []).append((ca.id, cb.id))

    # --- planning ------------------------------------------------------------

    def _supercell_global(self, atlas) -> Tuple[List[Supercell], np.ndarray]:
        cells: List[Supercell] = []
        points = []
        for frame_id in sorted(self.supercells):
            pose = atlas.pose_of(frame_id)
            if pose is None:
                continue
            for cell in self.supercells[frame_id]:
                cells.append(cell)
                points.append(pose.transform_point(cell.centroid))
        return cells, np.asarray(points, dtype=float).reshape(-1, 2)

    def _locate(self, point, atlas, passage_width, cells, points, tree) -> Optional[int]:
        """
        Index of the admissible supercell containing ``point``, else of the
        nearest admissible centroid within ``snap_distance``
        """
        position = {cell.id: k for k, cell in enumerate(cells)}
        found = []
        for frame_id in sorted(self.supercells):
            pose = self.global_pose(frame_id, atlas)
            if pose is None:
                continue
            submap = self.submaps[frame_id]
            local = pose.inverse().transform_point(point)
            col = math.floor(local[0] / submap.resolution) - submap.origin
            row = math.floor(local[1] / submap.resolution) - submap.origin
            labels = self.labels[frame_id]
            if not (0 <= row < labels.shape[0] and 0 <= col < labels.shape[1]) or labels[row, col] < 0:
                continue
            cell = self.supercells[frame_id][labels[row, col]]
            k = position[cell.id]
            if cell.min_width >= passage_width - WIDTH_EPS:
                found.append((math.hypot(points[k, 0] - point[0], points[k, 1] - point[1]), cell.id, k))
        if not found:
            for k in tree.query_ball_point(point, self.config.snap_distance):
                cell = cells[k]
                if cell.min_width >= passage_width - WIDTH_EPS:
                    found.append((math.hypot(points[k, 0] - point[0], points[k, 1] - point[1]), cell.id, k))
        if not found:
            return None
        return min(found)[2]

    def _weight(self, kind: AgentKind, speed: float, passage_width: float):
        flying = kind == AgentKind.UAV
        nodes = self.graph.nodes

        def weight(u, v, data):
            if nodes[u]["width"] < passage_width - WIDTH_EPS or nodes[v]["width"] < passage_width - WIDTH_EPS:
                return None
            return data["distance"] * (1.0 if flying else data["cost"]) / speed

        def leg(point, centroid, cell: Supercell) -> float:
            distance = math.hypot(centroid[0] - point[0], centroid[1] - point[1])
            return distance * (1.0 if flying else cell.mean_cost) / speed

        return weight, leg

    def plan(
        self,
        start: Tuple[float, float],
        goal: Tuple[float, float],
        kind: AgentKind,
        speed: float,
        passage_width: float,
        atlas,
    ) -> Optional[Plan]:
        """
        Shortest-time route between two global points

        Edge time is centroid distance x mean cost / speed (cost is ignored for
        aerial platforms); supercells narrower than ``passage_width`` are
        excluded. Waypoints are supercell centroids after the start cell,
        ending at the goal.

        Returns:
            Plan, or None when start or goal cannot be located or no route exists
        """
        cells, points = self._supercell_global(atlas)
        if not cells:
            return None
        tree = cKDTree(points)
        source = self._locate(start, atlas, passage_width, cells, points, tree)
        target = self._locate(goal, atlas, passage_width, cells, points, tree)
        if source is None or target is None:
            return None
        weight, leg = self._weight(kind, speed, passage_width)
        try:
            path = nx.dijkstra_path(self.graph, cells[source].id, cells[target].id, weight=weight)
        except (nx.NetworkXNoPath, nx.NodeNotFound):
            return None

        cost = sum(weight(u, v, self.graph.edges[u, v]) for u, v in zip(path[:-1], path[1:]))
        cost += leg(start, points[source], cells[source]) + leg(goal, points[target], cells[target])
        index = {cell.id: k for k, cell in enumerate(cells)}
        waypoints = [(float(points[index[n], 0]), float(points[index[n], 1])) for n in path[1:]]
        waypoints.append((float(goal[0]), float(goal[1])))
        return Plan(waypoints=waypoints, cost=cost, supercells=list(path))

    def travel_times(
        self,
        start: Tuple[float, float],
        goals: List[Tuple[float, float]],
        kind: AgentKind,
        speed: float,
        passage_width: float,
        atlas,
    ) -> List[Optional[float]]:
        """Plan costs from one start to many goals with a single Dijkstra pass."""
        cells, points = self._supercell_global(atlas)
        if not cells:
            return [None] * len(goals)
        tree = cKDTree(points)
        source = self._locate(start, atlas, passage_width, cells, points, tree)
        if source is None:
            return [None] * len(goals)
        weight, leg = self._weight(kind, speed, passage_width)
        lengths = nx.single_source_dijkstra_path_length(self.graph, cells[source].id, weight=weight)
        head = leg(start, points[source], cells[source])
        times: List[Optional[float]] = []
        for goal in goals:
            target = self._locate(goal, atlas, passage_width, cells, points, tree)
            if target is None or cells[target].id not in lengths:
                times.append(None)
                continue
            times.append(head + lengths[cells[target].id] + leg(goal, points[target], cells[target]))
        return times
