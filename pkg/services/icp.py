"""
Point-to-point 2D ICP between frame feature sets
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from models.frame import AtlasConfig, Frame, MatchResult
from models.geometry import Pose2

logger = logging.getLogger(__name__)

# Association radii, coarse to fine; the last stage polishes exact overlaps
RADIUS_SCHEDULE = (1.0, 0.5, 0.25, 0.1, 0.05)
DEGENERATE_SPREAD = 1e-6


def is_degenerate(points: np.ndarray) -> bool:
    """True if the points are collinear (or fewer than two distinct points)."""
    if points.shape[0] < 2:
        return True
    centered = points - points.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    return singular[-1] / math.sqrt(points.shape[0]) < DEGENERATE_SPREAD


def rigid_fit(source: np.ndarray, target: np.ndarray) -> Pose2:
    """Least-squares rigid transform T with target ~ T(source)."""
    mean_s = source.mean(axis=0)
    mean_t = target.mean(axis=0)
    s = source - mean_s
    t = target - mean_t
    cross = s.T @ t
    theta = math.atan2(cross[0, 1] - cross[1, 0], cross[0, 0] + cross[1, 1])
    c, si = math.cos(theta), math.sin(theta)
    tx = mean_t[0] - (c * mean_s[0] - si * mean_s[1])
    ty = mean_t[1] - (si * mean_s[0] + c * mean_s[1])
    return Pose2(tx, ty, theta)


def _associate(tree: cKDTree, points: np.ndarray, radius: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    distances, index = tree.query(points, k=1, distance_upper_bound=radius)
    mask = np.isfinite(distances)
    return mask, index[mask], distances[mask]


def match_points(
    target: np.ndarray,
    source: np.ndarray,
    guess: Pose2,
    config: Optional[AtlasConfig] = None,
) -> MatchResult:
    """
    Register ``source`` onto ``target`` starting from ``guess``

    Args:
        target: Points of frame a, in frame a coordinates
        source: Points of frame b, in frame b coordinates
        guess: Initial pose of frame b in frame a
        config: ICP thresholds

    Returns:
        MatchResult whose relative pose maps frame b into frame a, or a
        no-match with the residual and inlier count that caused it
    """
    config = config or AtlasConfig()
    target = np.asarray(target, dtype=float).reshape(-1, 2)
    source = np.asarray(source, dtype=float).reshape(-1, 2)
    if target.shape[0] == 0 or source.shape[0] == 0:
        return MatchResult(None, math.inf, 0)
    if is_degenerate(target) or is_degenerate(source):
        return MatchResult(None, math.inf, 0, degenerate=True)

    tree = cKDTree(target)
    estimate = guess
    first_count = None
    schedule = [r for r in RADIUS_SCHEDULE if r <= config.icp_radius] or [config.icp_radius]
    for radius in schedule:
        stage_estimate = estimate
        count = 0
        for _ in range(config.icp_max_iterations):
            moved = stage_estimate.transform_points(source)
            mask, index, _ = _associate(tree, moved, radius)
            count = int(mask.sum())
            if count < 3:
                break
            update = rigid_fit(source[mask], target[index])
            step = stage_estimate.between(update)
            stage_estimate = update
            if math.hypot(step.x, step.y) + abs(step.theta) < config.icp_tolerance:
                break
        if first_count is None:
            first_count = count
        if count < 3 or count < 0.5 * first_count:
            break
        estimate = stage_estimate

    moved = estimate.transform_points(source)
    mask, _, distances = _associate(tree, moved, config.icp_radius)
    inliers = int(mask.sum())
    rms = float(math.sqrt(np.mean(distances ** 2))) if inliers else math.inf
    if inliers < config.icp_min_inliers or rms > config.icp_max_rms:
        return MatchResult(None, rms, inliers)
    return MatchResult(estimate, rms, inliers)


def match_frames(
    frame_a: Frame, frame_b: Frame, guess: Pose2, config: Optional[AtlasConfig] = None
) -> MatchResult:
    """Pose of frame b in frame a by ICP on their features."""
    return match_points(frame_a.features, frame_b.features, guess, config)
