"""
Planar rigid-body geometry shared by every subsystem
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2:
    """SE(2) pose; theta is kept normalized after every construction."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @classmethod
    def identity(cls) -> "Pose2":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "Pose2":
        x, y, theta = values
        return cls(x, y, theta)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def compose(self, other: "Pose2") -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.theta,
        )

    def between(self, other: "Pose2") -> "Pose2":
        """Relative pose of ``other`` expressed in this pose's frame."""
        return self.inverse().compose(other)

    def transform_point(self, point: Tuple[float, float]) -> Tuple[float, float]:
        c, s = math.cos(self.theta), math.sin(self.theta)
        px, py = point
        return (self.x + c * px - s * py, self.y + s * px + c * py)

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return points @ self.rotation().T + np.array([self.x, self.y])

    def inverse_transform_points(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return (points - np.array([self.x, self.y])) @ self.rotation()

    def distance_to(self, other: "Pose2") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def is_close(self, other: "Pose2", tol_xy: float, tol_theta: float) -> bool:
        return (
            self.distance_to(other) <= tol_xy
            and abs(normalize_angle(other.theta - self.theta)) <= tol_theta
        )


def point_distance(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])
