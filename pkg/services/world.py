"""
World service: map parsing, traversability, kinematics, line of sight and
the ray-cast range sensor
"""

import logging
import math
from collections import deque
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.geometry import Pose2
from models.world import (
    AgentKind,
    AgentState,
    Artefact,
    CellKind,
    DEFAULT_PASSAGE_WIDTH,
    GridWorld,
    SensorSweep,
    VelocityCommand,
    WIDTH_EPS,
)
from utils.validators import ValidationError, validate_map_lines

logger = logging.getLogger(__name__)

BLOCKED_TICKS_LIMIT = 5
RAY_COUNT = 360
# Sampling step along rays and path segments, as a fraction of the cell size
SAMPLE_FRACTION = 0.25


class GridQueryError(Exception):
    """Raised when a grid query falls outside the map"""


def parse_ascii_map(
    lines: Sequence[str],
    cell_size: float = 0.25,
    rough_cost: float = 2.0,
    artefact_classes: Optional[Dict[str, str]] = None,
) -> GridWorld:
    """
    Build a GridWorld from an ASCII block

    Args:
        lines: Map rows; row 0 is y in [0, cell_size)
        cell_size: Cell side in meters
        rough_cost: Cost multiplier of 'r' cells
        artefact_classes: Class label for each artefact letter

    Returns:
        The parsed world

    Raises:
        ValidationError: If the block or the artefact legend is malformed
    """
    lines = validate_map_lines(list(lines))
    artefact_classes = artefact_classes or {}
    if rough_cost < 1.0:
        raise ValidationError(f"rough_cost must be >= 1 (received: {rough_cost})")

    rows, cols = len(lines), len(lines[0])
    cells = np.full((rows, cols), CellKind.FREE, dtype=np.int8)
    costs = np.ones((rows, cols), dtype=float)
    artefacts: List[Artefact] = []
    base_cells = []

    for r, line in enumerate(lines):
        for c, char in enumerate(line):
            if char == "#":
                cells[r, c] = CellKind.WALL
            elif char == "r":
                cells[r, c] = CellKind.ROUGH
                costs[r, c] = rough_cost
            elif char == "B":
                base_cells.append((r, c))
            elif "A" <= char <= "Z":
                label = artefact_classes.get(char)
                if label is None:
                    raise ValidationError(
                        f"artefact letter '{char}' at row {r}, column {c} has no class"
                    )
                artefacts.append(
                    Artefact(
                        id=len(artefacts) + 1,
                        label=label,
                        position=((c + 0.5) * cell_size, (r + 0.5) * cell_size),
                    )
                )

    if len(base_cells) != 1:
        raise ValidationError(
            f"map must contain exactly one base cell 'B' (found {len(base_cells)})"
        )
    base_row, base_col = base_cells[0]
    base_pose = Pose2((base_col + 0.5) * cell_size, (base_row + 0.5) * cell_size, 0.0)

    world = GridWorld(cell_size, cells, costs, base_pose, artefacts)
    logger.debug(
        f"Parsed map {rows}x{cols} cells, {len(artefacts)} artefacts, base at {base_pose}"
    )
    return world


def traversable(kind, cell: Tuple[int, int], world: GridWorld, passage_width: Optional[float] = None) -> bool:
    """
    True iff the cell is Free/Rough and wide enough for the platform

    Raises:
        GridQueryError: If the cell is outside the map
    """
    row, col = cell
    if not world.in_bounds(row, col):
        raise GridQueryError(f"cell {cell} outside {world.rows}x{world.cols} map")
    if passage_width is None:
        passage_width = DEFAULT_PASSAGE_WIDTH[AgentKind(kind)]
    if world.cells[row, col] == CellKind.WALL:
        return False
    return bool(world.inscribed_width[row, col] >= passage_width - WIDTH_EPS)


def _segment_clear(world: GridWorld, mask: np.ndarray, start, end) -> bool:
    """All samples of the segment fall on cells allowed by ``mask``."""
    rows, cols = _sample_cells(world, start, end)
    inside = (rows >= 0) & (rows < world.rows) & (cols >= 0) & (cols < world.cols)
    if not inside.all():
        return False
    return bool(mask[rows, cols].all())


def step_kinematics(
    agent_state: AgentState, command: VelocityCommand, dt: float, world: GridWorld
) -> AgentState:
    """
    Advance the true pose by one tick

    The agent moves toward ``command.target`` (or along its heading) at no more
    than its platform speed divided by the cost of the cell it stands on. A move
    whose path crosses a cell the platform cannot traverse is not performed;
    five consecutive blocked ticks toward the same target raise
    ``navigation_failed``.
    """
    state = agent_state
    if not state.active or command.speed == 0.0:
        return replace(state, last_delta=Pose2.identity())

    spec = state.spec
    row, col = world.cell_of(state.pose.x, state.pose.y)
    speed = min(abs(command.speed), spec.speed) / world.movement_cost(
        row, col, spec.ignores_rough
    )
    reach = speed * dt

    if command.target is not None:
        dx = command.target[0] - state.pose.x
        dy = command.target[1] - state.pose.y
        remaining = math.hypot(dx, dy)
        if remaining < 1e-9:
            return replace(state, last_delta=Pose2.identity(), blocked_ticks=0)
        heading = math.atan2(dy, dx)
        travel = min(reach, remaining)
    else:
        heading = state.pose.theta
        travel = reach

    new_pose = Pose2(
        state.pose.x + travel * math.cos(heading),
        state.pose.y + travel * math.sin(heading),
        heading,
    )

    mask = world.traversable_mask(spec.passage_width)
    if not _segment_clear(world, mask, state.pose.position, new_pose.position):
        same_target = state.blocked_target == command.target
        blocked = state.blocked_ticks + 1 if same_target else 1
        failed = state.navigation_failed or blocked >= BLOCKED_TICKS_LIMIT
        if failed and not state.navigation_failed:
            logger.info(f"Agent {spec.id} blocked toward {command.target}")
        return replace(
            state,
            blocked_ticks=blocked,
            blocked_target=command.target,
            navigation_failed=failed,
            last_delta=Pose2.identity(),
        )

    return replace(
        state,
        pose=new_pose,
        blocked_ticks=0,
        blocked_target=None,
        distance=state.distance + travel,
        last_delta=state.pose.between(new_pose),
    )


def _sample_cells(world: GridWorld, p, q) -> Tuple[np.ndarray, np.ndarray]:
    """Cells under samples of the segment p-q, clipped to the padded grid."""
    step = world.cell_size * SAMPLE_FRACTION
    length = math.hypot(q[0] - p[0], q[1] - p[1])
    count = max(1, int(math.ceil(length / step)))
    t = np.linspace(0.0, 1.0, count + 1)
    xs = p[0] + t * (q[0] - p[0])
    ys = p[1] + t * (q[1] - p[1])
    rows = np.clip(np.floor(ys / world.cell_size).astype(int), -1, world.rows)
    cols = np.clip(np.floor(xs / world.cell_size).astype(int), -1, world.cols)
    return rows, cols


def line_of_sight(world: GridWorld, p: Tuple[float, float], q: Tuple[float, float]) -> bool:
    """True iff no wall cell lies on the segment p-q; diagonal corner grazes block."""
    rows, cols = _sample_cells(world, p, q)
    walls = world.padded_walls
    if walls[rows + 1, cols + 1].any():
        return False
    diagonal = np.nonzero((rows[1:] != rows[:-1]) & (cols[1:] != cols[:-1]))[0]
    if diagonal.size:
        side_a = walls[rows[diagonal] + 1, cols[diagonal + 1] + 1]
        side_b = walls[rows[diagonal + 1] + 1, cols[diagonal] + 1]
        if (side_a | side_b).any():
            return False
    return True


def sense(
    agent_state: AgentState,
    world: GridWorld,
    rng: np.random.Generator,
    range_sigma: float = 0.02,
    time: float = 0.0,
) -> SensorSweep:
    """
    360 degree ray-cast sweep at 1 degree resolution

    Each ray's first wall hit is reported as the midpoint of the wall face it
    entered, deduplicated per face, perturbed along the ray by range noise
    (truncated at 3 sigma) and expressed in the agent's odometry frame. Cells
    crossed before the hit are observed free, hit cells observed occupied.
    """
    pose = agent_state.pose
    max_range = agent_state.spec.sensor_range
    cs = world.cell_size
    step = cs * SAMPLE_FRACTION
    walls = world.padded_walls

    angles = pose.theta + np.deg2rad(np.arange(RAY_COUNT, dtype=float))
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    # Samples run slightly past the range so faces just inside it are still hit
    dists = np.arange(0.0, max_range + cs + step, step)
    xs = pose.x + dirs[:, 0:1] * dists[None, :]
    ys = pose.y + dirs[:, 1:2] * dists[None, :]
    rows = np.floor(ys / cs).astype(int)
    cols = np.floor(xs / cs).astype(int)
    rows = np.clip(rows, -1, world.rows)
    cols = np.clip(cols, -1, world.cols)
    hit = walls[rows + 1, cols + 1]
    has_hit = hit.any(axis=1)
    first = np.where(has_hit, hit.argmax(axis=1), dists.shape[0])

    before_hit = (np.arange(dists.shape[0])[None, :] < first[:, None]) & (
        dists[None, :] <= max_range
    )
    free_keys = np.unique(rows[before_hit] * world.cols + cols[before_hit])
    free_arr = np.stack([free_keys // world.cols, free_keys % world.cols], axis=1)

    ray = np.nonzero(has_hit & (first > 0))[0]
    n = first[ray]
    face_rows, face_cols, points = _entered_faces(
        world, walls, pose.x, pose.y, dirs[ray],
        rows[ray, n - 1], cols[ray, n - 1], rows[ray, n], cols[ray, n],
    )
    in_range = np.hypot(points[:, 0] - pose.x, points[:, 1] - pose.y) <= max_range
    # One return per (cell, face midpoint), in row, col, x, y order
    faces = np.column_stack([face_rows[in_range], face_cols[in_range], points[in_range]]).reshape(-1, 4)
    if len(faces):
        faces = np.unique(faces, axis=0)
    face_cells = faces[:, :2].astype(int)
    deltas = faces[:, 2:] - np.array([pose.x, pose.y])
    ranges = np.hypot(deltas[:, 0], deltas[:, 1])
    noise = np.zeros(len(faces))
    if range_sigma > 0.0 and len(faces):
        noise = np.clip(rng.normal(0.0, range_sigma, size=len(faces)), -3 * range_sigma, 3 * range_sigma)
    world_points = np.array([pose.x, pose.y]) + deltas * ((ranges + noise) / ranges)[:, None]
    to_odom = agent_state.odom.compose(pose.inverse())
    odom_points = to_odom.transform_points(world_points.reshape(-1, 2))

    inside = (
        (face_cells[:, 0] >= 0) & (face_cells[:, 0] < world.rows)
        & (face_cells[:, 1] >= 0) & (face_cells[:, 1] < world.cols)
    )
    occ_arr = face_cells[inside]
    if len(occ_arr):
        occ_arr = np.unique(occ_arr, axis=0)

    open_rays = ~has_hit
    open_rays[ray[~in_range]] = True
    open_headings = np.mod(angles[open_rays] - pose.theta + agent_state.odom.theta, 2.0 * np.pi)
    return SensorSweep(
        time=time,
        origin=agent_state.odom,
        points=odom_points,
        free_cells=free_arr,
        occupied_cells=occ_arr,
        open_headings=open_headings,
    )


def _entered_faces(world, walls, ox, oy, directions, r0, c0, r1, c1):
    """
    Wall cells and face midpoints where rays first enter a wall

    Each ray steps from the free cell (r0, c0) into the wall cell (r1, c1).
    On a diagonal step the ray may graze a wall neighbour first; the face it
    crosses earliest wins.

    Returns:
        (rows, cols, points) with points the face midpoints (K x 2)
    """
    cs = world.cell_size
    same_row = r0 == r1
    same_col = c0 == c1
    diagonal = ~same_row & ~same_col

    dx, dy = directions[:, 0], directions[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(np.abs(dx) > 1e-12, (np.maximum(c0, c1) * cs - ox) / dx, np.inf)
        ty = np.where(np.abs(dy) > 1e-12, (np.maximum(r0, r1) * cs - oy) / dy, np.inf)
    side_x = walls[r0 + 1, c1 + 1]  # (r0, c1), entered through its x-face
    side_y = walls[r1 + 1, c0 + 1]  # (r1, c0), entered through its y-face

    # Diagonal outcomes: grazed x-neighbour, y-face of the hit, grazed y-neighbour
    x_first = tx < ty
    y_first = ty < tx
    tied = ~x_first & ~y_first
    grazed_x = diagonal & side_x & (x_first | tied)
    hit_y = diagonal & x_first & ~side_x
    grazed_y = diagonal & side_y & (y_first | (tied & ~side_x))

    face_rows = np.where(grazed_x, r0, r1)
    face_cols = np.where(grazed_y, c0, c1)
    through_x = np.where(diagonal, ~(hit_y | grazed_y), same_row)

    x_of_x_face = np.where(c0 < face_cols, face_cols * cs, (face_cols + 1) * cs)
    y_of_y_face = np.where(r0 < face_rows, face_rows * cs, (face_rows + 1) * cs)
    xs = np.where(through_x, x_of_x_face, (face_cols + 0.5) * cs)
    ys = np.where(through_x, (face_rows + 0.5) * cs, y_of_y_face)
    points = np.round(np.column_stack([xs, ys]).astype(float), 9)
    return face_rows, face_cols, points


def reachable_free_cells(world: GridWorld, starts, passage_width: float) -> np.ndarray:
    """Flood fill of traversable cells from the given world positions."""
    mask = world.traversable_mask(passage_width)
    seen = np.zeros(mask.shape, dtype=bool)
    queue = deque()
    for x, y in starts:
        r, c = world.cell_of(x, y)
        if world.in_bounds(r, c) and mask[r, c] and not seen[r, c]:
            seen[r, c] = True
            queue.append((r, c))
    while queue:
        r, c = queue.popleft()
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < world.rows and 0 <= nc < world.cols and mask[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                queue.append((nr, nc))
    return seen
