"""
Per-agent decentralized pose graph

The graph is a deterministic function of the frames and hints an agent
holds: every refresh rebuilds chains, marginalisation, hypotheses and the
optimisation from scratch, so two agents holding the same inputs agree
regardless of the order the inputs arrived in. ICP results are cached by
(frame pair, rounded guess) to keep rebuilds cheap.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse import identity as sparse_identity
from scipy.sparse.linalg import splu

from models.frame import (
    AtlasConfig,
    AtlasNode,
    Candidate,
    Edge,
    EdgeKind,
    Frame,
    FrameId,
    Hint,
    Hypothesis,
    HypothesisSource,
    HypothesisState,
    MatchResult,
)
from models.geometry import Pose2, normalize_angle
from services.icp import match_frames
from utils.mission_logger import log_exception_with_context, mission_logger

logger = logging.getLogger(__name__)

GUESS_STEP_XY = 0.05
GUESS_STEP_THETA = math.radians(0.5)


def round_pose(pose: Pose2) -> Pose2:
    """Snap a pose to the ICP guess lattice."""
    return Pose2(
        round(pose.x / GUESS_STEP_XY) * GUESS_STEP_XY,
        round(pose.y / GUESS_STEP_XY) * GUESS_STEP_XY,
        round(pose.theta / GUESS_STEP_THETA) * GUESS_STEP_THETA,
    )


# --- residuals ---------------------------------------------------------------


def edge_residual(relative: Pose2, pose_a: Pose2, pose_b: Pose2) -> np.ndarray:
    """SE(2) error of z^-1 * (x_a^-1 * x_b) as (x, y, theta)."""
    ca, sa = math.cos(pose_a.theta), math.sin(pose_a.theta)
    cz, sz = math.cos(relative.theta), math.sin(relative.theta)
    dx, dy = pose_b.x - pose_a.x, pose_b.y - pose_a.y
    ux = ca * dx + sa * dy - relative.x
    uy = -sa * dx + ca * dy - relative.y
    return np.array(
        [
            cz * ux + sz * uy,
            -sz * ux + cz * uy,
            normalize_angle(pose_b.theta - pose_a.theta - relative.theta),
        ]
    )


def edge_jacobians(relative: Pose2, pose_a: Pose2, pose_b: Pose2) -> Tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians of edge_residual with respect to (x, y, theta) of a and b."""
    ca, sa = math.cos(pose_a.theta), math.sin(pose_a.theta)
    cz, sz = math.cos(relative.theta), math.sin(relative.theta)
    rz_t = np.array([[cz, sz], [-sz, cz]])
    ra_t = np.array([[ca, sa], [-sa, ca]])
    dra_t = np.array([[-sa, ca], [-ca, -sa]])
    delta = np.array([pose_b.x - pose_a.x, pose_b.y - pose_a.y])

    jac_a = np.zeros((3, 3))
    jac_b = np.zeros((3, 3))
    rot = rz_t @ ra_t
    jac_a[:2, :2] = -rot
    jac_a[:2, 2] = rz_t @ dra_t @ delta
    jac_a[2, 2] = -1.0
    jac_b[:2, :2] = rot
    jac_b[2, 2] = 1.0
    return jac_a, jac_b


def chi_squared(poses: Dict[FrameId, Pose2], edges: Sequence[Edge]) -> float:
    total = 0.0
    for edge in edges:
        error = edge_residual(edge.relative, poses[edge.a], poses[edge.b])
        total += float(np.dot(error * error, edge.information))
    return total


# --- optimisation ------------------------------------------------------------


@dataclass
class OptimizationResult:
    poses: Dict[FrameId, Pose2]
    initial_chi2: float
    chi2: float
    iterations: int = 0
    failed: bool = False


def _normal_equations(
    poses: Dict[FrameId, Pose2],
    edges: Sequence[Edge],
    index: Dict[FrameId, int],
    config: AtlasConfig,
):
    size = 3 * len(index)
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    values: List[np.ndarray] = []
    gradient = np.zeros(size)
    block = np.arange(3)
    for edge in edges:
        pose_a, pose_b = poses[edge.a], poses[edge.b]
        error = edge_residual(edge.relative, pose_a, pose_b)
        jac_a, jac_b = edge_jacobians(edge.relative, pose_a, pose_b)
        scaled = (error[0] ** 2 + error[1] ** 2) / config.cauchy_xy ** 2 + (
            error[2] ** 2
        ) / config.cauchy_theta ** 2
        weight = np.asarray(edge.information) / (1.0 + scaled)
        terms = [(index.get(edge.a), jac_a), (index.get(edge.b), jac_b)]
        for i, jac_i in terms:
            if i is None:
                continue
            gradient[3 * i: 3 * i + 3] += jac_i.T @ (weight * error)
            for j, jac_j in terms:
                if j is None:
                    continue
                rows.append(np.repeat(3 * i + block, 3))
                cols.append(np.tile(3 * j + block, 3))
                values.append((jac_i.T @ (weight[:, None] * jac_j)).ravel())
    if rows:
        hessian = coo_matrix(
            (np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))),
            shape=(size, size),
        ).tocsc()
    else:
        hessian = coo_matrix((size, size)).tocsc()
    return hessian, gradient


def _apply(poses: Dict[FrameId, Pose2], index: Dict[FrameId, int], step: np.ndarray):
    updated = dict(poses)
    for frame_id, i in index.items():
        pose = poses[frame_id]
        updated[frame_id] = Pose2(
            pose.x + step[3 * i], pose.y + step[3 * i + 1], pose.theta + step[3 * i + 2]
        )
    return updated


def optimize(
    poses: Dict[FrameId, Pose2],
    edges: Sequence[Edge],
    fixed: Iterable[FrameId],
    config: Optional[AtlasConfig] = None,
) -> OptimizationResult:
    """
    Robust Gauss-Newton over SE(2) poses

    Cauchy-weighted normal equations are solved with a sparse LU factorisation
    under a Levenberg shift. A step is kept only when plain chi^2 does not
    increase, so the returned chi^2 never exceeds the initial one.

    Args:
        poses: Initial pose of every node touched by ``edges``
        edges: Relative pose constraints
        fixed: Nodes held constant (one anchor per connected component)
        config: Weights, damping and termination settings

    Returns:
        OptimizationResult; on a singular system the input poses with failed set
    """
    config = config or AtlasConfig()
    fixed = set(fixed)
    free = sorted(f for f in poses if f not in fixed)
    index = {frame_id: i for i, frame_id in enumerate(free)}
    chi2 = chi_squared(poses, edges)
    result = OptimizationResult(poses=dict(poses), initial_chi2=chi2, chi2=chi2)
    if not free or not edges:
        return result

    max_raises = int(round(math.log10(config.max_damping / config.initial_damping)))
    damping = config.initial_damping
    current = dict(poses)
    for iteration in range(config.max_iterations):
        if chi2 == 0.0:
            break
        hessian, gradient = _normal_equations(current, edges, index, config)
        eye = sparse_identity(hessian.shape[0], format="csc")
        accepted = None
        raises = 0
        while True:
            try:
                step = splu((hessian + damping * eye).tocsc()).solve(-gradient)
                if not np.all(np.isfinite(step)):
                    raise RuntimeError("non-finite step")
            except RuntimeError:
                if raises >= max_raises:
                    logger.warning(f"Pose graph singular at damping {damping:g}")
                    return OptimizationResult(
                        poses=dict(poses), initial_chi2=result.initial_chi2, chi2=result.initial_chi2,
                        iterations=iteration, failed=True,
                    )
                damping *= 10.0
                raises += 1
                continue
            candidate = _apply(current, index, step)
            candidate_chi2 = chi_squared(candidate, edges)
            if candidate_chi2 <= chi2:
                accepted = (candidate, candidate_chi2)
                break
            if raises >= max_raises:
                break
            damping *= 10.0
            raises += 1
        if accepted is None:
            break
        candidate, candidate_chi2 = accepted
        change = (chi2 - candidate_chi2) / chi2
        current, chi2 = candidate, candidate_chi2
        result.iterations = iteration + 1
        damping = max(config.initial_damping, damping / 10.0)
        if change < config.relative_tolerance:
            break

    result.poses = current
    result.chi2 = chi2
    return result


# --- marginalisation and hypotheses -------------------------------------------


def marginalize(
    chain: Sequence[FrameId], odom: Dict[FrameId, Pose2], config: Optional[AtlasConfig] = None
) -> Dict[FrameId, AtlasNode]:
    """
    Collapse one agent's frame chain into root frames

    Walking the chain in sequence order, a frame within the redundancy
    distance and angle of the current root becomes a child of that root;
    otherwise it becomes the new root.
    """
    config = config or AtlasConfig()
    nodes: Dict[FrameId, AtlasNode] = {}
    root: Optional[FrameId] = None
    for frame_id in chain:
        if root is not None:
            offset = odom[root].between(odom[frame_id])
            if (
                math.hypot(offset.x, offset.y) <= config.redundant_xy
                and abs(offset.theta) <= config.redundant_theta
            ):
                nodes[frame_id] = AtlasNode(frame_id, Pose2(), root=False, parent=root, offset=offset)
                continue
        nodes[frame_id] = AtlasNode(frame_id, Pose2(), root=True)
        root = frame_id
    return nodes


def validate_hypothesis(
    hypothesis: Hypothesis,
    candidates: Sequence[Candidate],
    exhausted: bool,
    config: Optional[AtlasConfig] = None,
) -> Hypothesis:
    """
    Decide a hypothesis from its candidate matches

    Candidates are consistent when the endpoint offsets they imply agree
    within the consistency bounds. The exact maximum clique of the
    consistency graph is the support; accept when it reaches the required
    size, reject when no more candidates can arrive, else stay pending.
    """
    config = config or AtlasConfig()
    candidates = list(candidates)[: config.candidate_cap]
    graph = nx.Graph()
    graph.add_nodes_from(range(len(candidates)))
    for i in range(len(candidates)):
        for j in range(i + 1, len(candidates)):
            if candidates[i].implied.is_close(
                candidates[j].implied, config.consistency_xy, config.consistency_theta
            ):
                graph.add_edge(i, j)
    clique: List[int] = []
    if candidates:
        clique, _ = nx.max_weight_clique(graph, weight=None)
    hypothesis.support = [candidates[i] for i in sorted(clique)]
    if len(clique) >= hypothesis.required_support:
        hypothesis.state = HypothesisState.ACCEPTED
    elif exhausted:
        hypothesis.state = HypothesisState.REJECTED
    else:
        hypothesis.state = HypothesisState.PENDING
    return hypothesis


def _spanning_poses(
    roots: Sequence[FrameId], edges: Sequence[Edge], seeds: Dict[FrameId, Pose2]
) -> Tuple[Dict[FrameId, Pose2], Dict[FrameId, FrameId]]:
    """Breadth-first initial poses per component; returns poses and each node's anchor."""
    adjacency: Dict[FrameId, List[Tuple[FrameId, Pose2]]] = {r: [] for r in roots}
    for edge in edges:
        adjacency[edge.a].append((edge.b, edge.relative))
        adjacency[edge.b].append((edge.a, edge.relative.inverse()))
    for frame_id in adjacency:
        adjacency[frame_id].sort(key=lambda item: item[0])

    poses: Dict[FrameId, Pose2] = {}
    anchors: Dict[FrameId, FrameId] = {}
    for anchor in sorted(roots):
        if anchor in poses:
            continue
        poses[anchor] = seeds[anchor]
        anchors[anchor] = anchor
        queue = deque([anchor])
        while queue:
            current = queue.popleft()
            for neighbor, relative in adjacency[current]:
                if neighbor not in poses:
                    poses[neighbor] = poses[current].compose(relative)
                    anchors[neighbor] = anchor
                    queue.append(neighbor)
    return poses, anchors


class AtlasGraph:
    """
    One agent's view of the shared map

    Attributes:
        frames: Every frame held, by id
        nodes: Placed frames with pose and root/redundant role
        edges: Constraints of the last optimisation
        hypotheses: Hypotheses evaluated by the last refresh
    """

    def __init__(
        self,
        owner_id: int,
        reference: Optional[Pose2] = None,
        config: Optional[AtlasConfig] = None,
    ):
        self.owner_id = owner_id
        # Start-gate pose in odometry coordinates; seeds map odometry to the shared frame
        self.reference = reference or Pose2.identity()
        self.config = config or AtlasConfig()
        self.frames: Dict[FrameId, Frame] = {}
        self.hints: Dict[Tuple[FrameId, FrameId], Hint] = {}
        self.nodes: Dict[FrameId, AtlasNode] = {}
        self.edges: List[Edge] = []
        self.hypotheses: Dict[Tuple[FrameId, FrameId], Hypothesis] = {}
        self.chi2 = 0.0
        self.optimization_failed = False
        self.odom: Dict[FrameId, Pose2] = {}
        self.cumulative: Dict[FrameId, float] = {}
        self._dirty = False
        self._match_cache: Dict[tuple, MatchResult] = {}
        self._accepted_keys: Set[Tuple[FrameId, FrameId]] = set()
        self.time = 0.0

    # --- inputs --------------------------------------------------------------

    def add_frame(self, frame: Frame) -> bool:
        if frame.id in self.frames:
            return False
        self.frames[frame.id] = frame
        self._dirty = True
        return True

    def add_hint(self, hint: Hint) -> bool:
        if hint.key in self.hints:
            return False
        self.hints[hint.key] = hint
        self._dirty = True
        return True

    @property
    def dirty(self) -> bool:
        return self._dirty

    # --- queries -------------------------------------------------------------

    def pose_of(self, frame_id: FrameId) -> Optional[Pose2]:
        node = self.nodes.get(frame_id)
        return None if node is None else node.pose

    def root_of(self, frame_id: FrameId) -> Optional[FrameId]:
        node = self.nodes.get(frame_id)
        if node is None:
            return None
        return frame_id if node.root else node.parent

    def is_merged(self, frame_id: FrameId) -> bool:
        node = self.nodes.get(frame_id)
        return node is not None and node.merged

    def resolve(self, frame_ref: FrameId, point: Tuple[float, float]) -> Optional[Tuple[float, float]]:
        """Global position of a frame-local point, or None for a frame not placed yet."""
        node = self.nodes.get(frame_ref)
        if node is None:
            return None
        return node.pose.transform_point(point)

    def localize(self, frame_ref: FrameId, point: Tuple[float, float]) -> Optional[Tuple[float, float]]:
        """Inverse of resolve: global point into a frame's coordinates."""
        node = self.nodes.get(frame_ref)
        if node is None:
            return None
        return tuple(node.pose.inverse_transform_points(np.array([point]))[0])

    def latest_frame(self, agent: int) -> Optional[FrameId]:
        placed = [f for f in self.nodes if f.agent == agent]
        return max(placed) if placed else None

    def roots(self) -> List[FrameId]:
        return sorted(f for f, n in self.nodes.items() if n.root)

    # --- refresh -------------------------------------------------------------

    @log_exception_with_context(service="AtlasGraph", operation="refresh")
    def refresh(self, time: Optional[float] = None) -> bool:
        """
        Rebuild the graph if any frame or hint arrived since the last refresh

        Returns:
            True if the graph was rebuilt
        """
        if time is not None:
            self.time = time
        if not self._dirty:
            return False
        self._dirty = False
        config = self.config

        chains = self._chains()
        nodes: Dict[FrameId, AtlasNode] = {}
        for agent in sorted(chains):
            nodes.update(marginalize(chains[agent], self.odom, config))
        roots = sorted(f for f, n in nodes.items() if n.root)
        if not roots:
            self.nodes = {}
            return True
        seeds = {f: self.reference.between(self.odom[f]) for f in roots}

        odometry = self._odometry_edges(chains, nodes)
        hypotheses: Dict[Tuple[FrameId, FrameId], Hypothesis] = {}
        match_edges: List[Edge] = []
        linked: Set[Tuple[FrameId, FrameId]] = {(e.a, e.b) for e in odometry}

        for key in sorted(self.hints):
            hint = self.hints[key]
            if hint.frame_a not in nodes or hint.frame_b not in nodes:
                continue
            hypothesis = self.propose_hypothesis(
                hint.frame_a, hint.frame_b, HypothesisSource.HINT, hint.relative, nodes, linked
            )
            self._evaluate(hypothesis, config.candidate_window, hypotheses, match_edges, nodes, linked)

        stage_one, anchors = self._solve(roots, odometry + match_edges, seeds)

        for p, q in self._loop_pairs(roots, stage_one, anchors, nodes, linked):
            seed = stage_one[p].between(stage_one[q])
            hypothesis = self.propose_hypothesis(p, q, HypothesisSource.OVERLAP, seed, nodes, linked)
            self._evaluate(hypothesis, config.loop_window, hypotheses, match_edges, nodes, linked)

        edges = odometry + match_edges
        final, anchors = self._solve(roots, edges, seeds)

        gauge = min(nodes)
        gauge_anchor = anchors[self._root_id(gauge, nodes)]
        for frame_id in sorted(nodes):
            node = nodes[frame_id]
            root = frame_id if node.root else node.parent
            node.pose = final[root] if node.root else final[root].compose(node.offset)
            node.merged = anchors[root] == gauge_anchor
        self.nodes = nodes
        self.edges = edges
        self.hypotheses = hypotheses
        for key, hypothesis in hypotheses.items():
            if hypothesis.state == HypothesisState.ACCEPTED and key not in self._accepted_keys:
                self._accepted_keys.add(key)
                mission_logger.log_hypothesis_accepted(
                    self.owner_id,
                    self.time,
                    {
                        "frame_a": str(key[0]),
                        "frame_b": str(key[1]),
                        "source": hypothesis.source.value,
                        "support": len(hypothesis.support),
                    },
                )
        logger.debug(
            f"Agent {self.owner_id} atlas: {len(roots)} roots, {len(edges)} edges, chi2={self.chi2:.4g}"
        )
        return True

    def propose_hypothesis(
        self,
        frame_a: FrameId,
        frame_b: FrameId,
        source: HypothesisSource,
        seed: Pose2,
        nodes: Optional[Dict[FrameId, AtlasNode]] = None,
        linked: Optional[Set[Tuple[FrameId, FrameId]]] = None,
    ) -> Hypothesis:
        """
        Create a hypothesis between two frames

        Hint hypotheses need hint_support matches; overlap ones need more when
        the chain distance between the frames exceeds the large-loop gap.
        Pairs already constrained to each other come back rejected.
        """
        nodes = self.nodes if nodes is None else nodes
        linked = set() if linked is None else linked
        if source == HypothesisSource.HINT:
            required = self.config.hint_support
        elif self.chain_gap(frame_a, frame_b) > self.config.large_loop_gap:
            required = self.config.large_loop_support
        else:
            required = self.config.hint_support
        hypothesis = Hypothesis(frame_a, frame_b, source, seed, required)
        root_a, root_b = self._root_id(frame_a, nodes), self._root_id(frame_b, nodes)
        if root_a == root_b or (root_a, root_b) in linked or (root_b, root_a) in linked:
            hypothesis.state = HypothesisState.REJECTED
        return hypothesis

    def chain_gap(self, frame_a: FrameId, frame_b: FrameId) -> float:
        """Distance traveled between two frames along their odometry chains."""
        da = self.cumulative.get(frame_a, 0.0)
        db = self.cumulative.get(frame_b, 0.0)
        if frame_a.agent == frame_b.agent:
            return abs(da - db)
        return da + db

    def dump(self) -> str:
        """Line-oriented text form of the graph, stable for diffing."""
        lines = []
        for frame_id in sorted(self.nodes):
            node = self.nodes[frame_id]
            role = "root" if node.root else f"redundant parent={node.parent}"
            lines.append(
                f"node {frame_id} {node.pose.x:.6f} {node.pose.y:.6f} {node.pose.theta:.6f} "
                f"{role} merged={int(node.merged)}"
            )
        for edge in sorted(self.edges, key=lambda e: (e.a, e.b, e.kind.value)):
            z = edge.relative
            info = " ".join(f"{v:.6g}" for v in edge.information)
            lines.append(
                f"edge {edge.kind.value} {edge.a} {edge.b} {z.x:.6f} {z.y:.6f} {z.theta:.6f} {info}"
            )
        return "\n".join(lines) + ("\n" if lines else "")

    # --- internals -----------------------------------------------------------

    def _chains(self) -> Dict[int, List[FrameId]]:
        """Contiguous frame prefix per agent, with chained odometry poses."""
        by_agent: Dict[int, Set[int]] = {}
        for frame_id in self.frames:
            by_agent.setdefault(frame_id.agent, set()).add(frame_id.seq)
        chains: Dict[int, List[FrameId]] = {}
        self.odom = {}
        self.cumulative = {}
        for agent in sorted(by_agent):
            seqs = by_agent[agent]
            chain = []
            pose = None
            distance = 0.0
            seq = 1
            while seq in seqs:
                frame_id = FrameId(agent, seq)
                delta = self.frames[frame_id].delta
                if pose is None:
                    pose = delta
                else:
                    pose = pose.compose(delta)
                    distance += math.hypot(delta.x, delta.y)
                self.odom[frame_id] = pose
                self.cumulative[frame_id] = distance
                chain.append(frame_id)
                seq += 1
            if chain:
                chains[agent] = chain
        return chains

    def _odometry_edges(self, chains, nodes) -> List[Edge]:
        edges = []
        for agent in sorted(chains):
            previous = None
            var_xy = var_theta = 0.0
            for frame_id in chains[agent]:
                frame = self.frames[frame_id]
                if previous is not None:
                    var_xy += frame.sigma_xy ** 2
                    var_theta += frame.sigma_theta ** 2
                if not nodes[frame_id].root:
                    continue
                if previous is not None:
                    edges.append(
                        Edge(
                            previous,
                            frame_id,
                            EdgeKind.ODOMETRY,
                            self.odom[previous].between(self.odom[frame_id]),
                            (1.0 / var_xy, 1.0 / var_xy, 1.0 / var_theta),
                        )
                    )
                previous = frame_id
                var_xy = var_theta = 0.0
        return edges

    @staticmethod
    def _root_id(frame_id: FrameId, nodes: Dict[FrameId, AtlasNode]) -> FrameId:
        node = nodes[frame_id]
        return frame_id if node.root else node.parent

    def _window(self, frame_id: FrameId, width: int, nodes) -> Tuple[List[FrameId], bool]:
        present = [
            FrameId(frame_id.agent, s)
            for s in range(max(1, frame_id.seq - width), frame_id.seq + width + 1)
            if FrameId(frame_id.agent, s) in nodes
        ]
        complete = FrameId(frame_id.agent, frame_id.seq + width) in nodes
        return present, complete

    def _match(self, frame_i: FrameId, frame_j: FrameId, guess: Pose2) -> MatchResult:
        guess = round_pose(guess)
        key = (frame_i, frame_j, guess.x, guess.y, guess.theta)
        if key not in self._match_cache:
            self._match_cache[key] = match_frames(
                self.frames[frame_i], self.frames[frame_j], guess, self.config
            )
        return self._match_cache[key]

    def _evaluate(self, hypothesis, width, hypotheses, match_edges, nodes, linked):
        key = hypothesis.key
        if key in hypotheses or hypothesis.state == HypothesisState.REJECTED:
            hypotheses.setdefault(key, hypothesis)
            return
        a, b = hypothesis.frame_a, hypothesis.frame_b
        window_a, complete_a = self._window(a, width, nodes)
        window_b, complete_b = self._window(b, width, nodes)
        candidates: List[Candidate] = []
        for i in window_a:
            to_i = self.odom[a].between(self.odom[i])
            for j in window_b:
                if i == j or len(candidates) >= self.config.candidate_cap:
                    continue
                to_j = self.odom[b].between(self.odom[j])
                guess = to_i.inverse().compose(hypothesis.seed).compose(to_j)
                result = self._match(i, j, guess)
                if not result.matched:
                    continue
                implied = to_i.compose(result.relative).compose(to_j.inverse())
                candidates.append(Candidate(i, j, result.relative, implied))
        validate_hypothesis(hypothesis, candidates, complete_a and complete_b, self.config)
        hypotheses[key] = hypothesis
        if hypothesis.state != HypothesisState.ACCEPTED:
            return
        for candidate in hypothesis.support:
            node_i, node_j = nodes[candidate.frame_a], nodes[candidate.frame_b]
            root_i = self._root_id(candidate.frame_a, nodes)
            root_j = self._root_id(candidate.frame_b, nodes)
            if root_i == root_j:
                continue
            offset_i = Pose2() if node_i.root else node_i.offset
            offset_j = Pose2() if node_j.root else node_j.offset
            match_edges.append(
                Edge(
                    root_i,
                    root_j,
                    EdgeKind.MATCH,
                    offset_i.compose(candidate.relative).compose(offset_j.inverse()),
                    (
                        1.0 / self.config.match_sigma_xy ** 2,
                        1.0 / self.config.match_sigma_xy ** 2,
                        1.0 / self.config.match_sigma_theta ** 2,
                    ),
                )
            )
            linked.add((root_i, root_j))

    def _solve(self, roots, edges, seeds):
        initial, anchors = _spanning_poses(roots, edges, seeds)
        fixed = {f for f, anchor in anchors.items() if f == anchor}
        result = optimize(initial, edges, fixed, self.config)
        self.optimization_failed = result.failed
        self.chi2 = result.chi2
        if result.failed:
            poses = dict(initial)
            for frame_id, node in self.nodes.items():
                if frame_id in poses and node.root:
                    poses[frame_id] = node.pose
            return poses, anchors
        return result.poses, anchors

    def _loop_pairs(self, roots, poses, anchors, nodes, linked) -> List[Tuple[FrameId, FrameId]]:
        """For each root, the closest earlier root of the same component worth a loop test."""
        config = self.config
        pairs = []
        for index, q in enumerate(roots):
            best = None
            for p in roots[:index]:
                if anchors[p] != anchors[q]:
                    continue
                if (p, q) in linked or (q, p) in linked:
                    continue
                distance = poses[p].distance_to(poses[q])
                if distance > config.loop_radius:
                    continue
                if self.chain_gap(p, q) <= config.loop_min_gap:
                    continue
                if best is None or distance < best[0]:
                    best = (distance, p)
            if best is not None:
                pairs.append((best[1], q))
        return pairs
