"""
SLAM frame generation: odometry drift, sweep accumulation and voxel
downsampling into fixed-size frames
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from models.frame import AtlasConfig, Frame, FrameId, Hint, NoiseConfig
from models.geometry import Pose2
from models.world import SensorSweep

logger = logging.getLogger(__name__)


class OdometryDrift:
    """Integrates true motion into an agent's drifting odometry frame."""

    def __init__(self, noise: NoiseConfig, rng: np.random.Generator):
        self.noise = noise
        self.rng = rng

    def integrate(self, odom: Pose2, delta: Pose2) -> Pose2:
        """
        Compose one motion increment with noise drawn per meter traveled

        Each component gets a zero-mean Gaussian with variance sigma^2 * d,
        so the error of a long walk grows with the square root of distance.
        """
        distance = math.hypot(delta.x, delta.y)
        if distance == 0.0 or (self.noise.odom_sigma_xy == 0.0 and self.noise.odom_sigma_theta == 0.0):
            return odom.compose(delta)
        scale = math.sqrt(distance)
        nx, ny = self.rng.normal(0.0, self.noise.odom_sigma_xy * scale, size=2)
        ntheta = self.rng.normal(0.0, self.noise.odom_sigma_theta * scale)
        return odom.compose(delta).compose(Pose2(nx, ny, ntheta))


class SweepAccumulator:
    """Keeps recent sweeps (odometry-frame points) for frame windows."""

    def __init__(self, horizon: float = 6.0):
        self.horizon = horizon
        self._sweeps: List[Tuple[float, np.ndarray]] = []

    def add(self, sweep: SensorSweep):
        self._sweeps.append((sweep.time, sweep.points))
        cutoff = sweep.time - 2.0 * self.horizon
        self._sweeps = [(t, p) for t, p in self._sweeps if t > cutoff]

    def window_points(self, t_start: float, t_end: float) -> np.ndarray:
        chunks = [p for t, p in self._sweeps if t_start < t <= t_end + 1e-9 and len(p)]
        if not chunks:
            return np.zeros((0, 2))
        return np.vstack(chunks)


def voxel_downsample(points: np.ndarray, voxel_size: float, max_points: int) -> np.ndarray:
    """
    Keep one point per voxel: the one nearest the voxel center

    The result is sorted by voxel key; when more than ``max_points`` voxels
    are occupied an evenly spaced subset is kept.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if points.shape[0] == 0:
        return points
    keys = np.floor(points / voxel_size).astype(np.int64)
    centers = (keys + 0.5) * voxel_size
    dist = np.hypot(points[:, 0] - centers[:, 0], points[:, 1] - centers[:, 1])
    order = np.lexsort((points[:, 1], points[:, 0], dist, keys[:, 1], keys[:, 0]))
    _, first = np.unique(keys[order], axis=0, return_index=True)
    kept = points[order[np.sort(first)]]
    if kept.shape[0] > max_points:
        index = np.unique(np.round(np.linspace(0, kept.shape[0] - 1, max_points)).astype(int))
        kept = kept[index]
    return kept


def quantize_features(points: np.ndarray) -> np.ndarray:
    """Round to float32, exactly as the frame codec carries them."""
    return np.asarray(points, dtype=np.float32).astype(float).reshape(-1, 2)


class FrameBuilder:
    """Produces an agent's frame sequence from its odometry and sweeps."""

    def __init__(self, agent_id: int, config: Optional[AtlasConfig] = None, noise: Optional[NoiseConfig] = None):
        self.agent_id = agent_id
        self.config = config or AtlasConfig()
        self.noise = noise or NoiseConfig()
        self.seq = 0
        self.last_odom: Optional[Pose2] = None
        self.distance = 0.0
        self.next_due = self.config.frame_period
        self.frames: List[Frame] = []

    def add_distance(self, meters: float):
        self.distance += meters

    def due(self, time: float) -> bool:
        return time + 1e-9 >= self.next_due

    def make_frame(self, t_end: float, odom: Pose2, sweeps: SweepAccumulator) -> Frame:
        """
        Close the current window into a frame

        Args:
            t_end: End of the window (now)
            odom: Current odometry pose
            sweeps: Accumulated sweeps in the odometry frame

        Returns:
            The new frame; seq 1 carries the absolute odometry pose as delta
        """
        t_start = t_end - self.config.frame_window
        points = voxel_downsample(
            sweeps.window_points(t_start, t_end), self.config.voxel_size, self.config.max_features
        )
        features = quantize_features(odom.inverse_transform_points(points))
        self.seq += 1
        delta = odom if self.last_odom is None else self.last_odom.between(odom)
        root_distance = math.sqrt(self.distance)
        frame = Frame(
            id=FrameId(self.agent_id, self.seq),
            t_start=t_start,
            t_end=t_end,
            delta=delta,
            sigma_xy=max(self.config.sigma_floor_xy, self.noise.odom_sigma_xy * root_distance),
            sigma_theta=max(self.config.sigma_floor_theta, self.noise.odom_sigma_theta * root_distance),
            features=features,
            odom_pose=odom,
        )
        if features.shape[0] == 0:
            logger.debug(f"Agent {self.agent_id} frame {frame.id} has no features")
        self.last_odom = odom
        self.distance = 0.0
        self.next_due = t_end + self.config.frame_period
        self.frames.append(frame)
        return frame

    def latest(self) -> Optional[Frame]:
        return self.frames[-1] if self.frames else None


def spawn_hint(base_pose: Pose2, first_frame: Frame) -> Hint:
    """Hint tying an agent's first frame to the base station frame."""
    return Hint(FrameId(0, 1), first_frame.id, base_pose.between(first_frame.odom_pose))


def launch_hint(carrier_frame: Frame, uav_frame: Frame) -> Hint:
    """Hint tying a launched UAV's first frame to its carrier's latest frame."""
    return Hint(carrier_frame.id, uav_frame.id, carrier_frame.odom_pose.between(uav_frame.odom_pose))
