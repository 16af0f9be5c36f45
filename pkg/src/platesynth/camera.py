"""Fibonacci-hemisphere camera rig with per-camera focal length jitter."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, RangeError
from .scene import PlateSpec

GOLDEN_CONJUGATE = (math.sqrt(5.0) - 1.0) / 2.0
FALLBACK_UP = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class RigConfig:
    n_views: int = 12
    hemisphere_radius_m: float = 0.45
    min_elevation_rad: float = math.radians(15.0)
    focal_range_mm: tuple[float, float] = (24.0, 50.0)
    sensor_width_mm: float = 36.0
    image_width_px: int = 512
    image_height_px: int = 512

    def __post_init__(self):
        object.__setattr__(self, "focal_range_mm", tuple(float(f) for f in self.focal_range_mm))
        if int(self.n_views) != self.n_views or self.n_views < 1:
            raise ConfigurationError(f"rig.n_views must be an integer >= 1, got {self.n_views}")
        if not 0.0 <= self.min_elevation_rad < math.pi / 2:
            raise ConfigurationError("rig.min_elevation_rad must lie in [0, pi/2)")
        if not self.hemisphere_radius_m > 0:
            raise ConfigurationError("rig.hemisphere_radius_m must be > 0")
        f_min, f_max = self.focal_range_mm
        if not 0 < f_min <= f_max:
            raise ConfigurationError(f"rig.focal_range_mm must satisfy 0 < min <= max, got {self.focal_range_mm}")
        if not self.sensor_width_mm > 0:
            raise ConfigurationError("rig.sensor_width_mm must be > 0")
        if self.image_width_px < 1 or self.image_height_px < 1:
            raise ConfigurationError("rig image resolution must be positive")

    def to_dict(self) -> dict:
        return {"n_views": self.n_views, "hemisphere_radius_m": self.hemisphere_radius_m,
                "min_elevation_rad": self.min_elevation_rad, "focal_range_mm": list(self.focal_range_mm),
                "sensor_width_mm": self.sensor_width_mm, "image_width_px": self.image_width_px,
                "image_height_px": self.image_height_px}

    @classmethod
    def from_dict(cls, data: dict) -> "RigConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__) - {"min_elevation_deg"}
        if unknown:
            raise ConfigurationError(f"unknown rig keys: {sorted(unknown)}")
        if "min_elevation_deg" in data:
            data["min_elevation_rad"] = math.radians(data.pop("min_elevation_deg"))
        return cls(**data)


@dataclass(frozen=True)
class CameraPose:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    focal_length_mm: float
    sensor_width_mm: float
    image_width_px: int
    image_height_px: int

    @property
    def forward(self) -> np.ndarray:
        d = self.look_at - self.position
        return d / np.linalg.norm(d)

    @property
    def right(self) -> np.ndarray:
        r = np.cross(self.forward, self.up)
        return r / np.linalg.norm(r)

    @property
    def horizontal_fov(self) -> float:
        return 2.0 * math.atan(self.sensor_width_mm / (2.0 * self.focal_length_mm))

    @property
    def focal_px(self) -> float:
        return self.focal_length_mm / self.sensor_width_mm * self.image_width_px

    def intrinsics(self) -> np.ndarray:
        """Pinhole K with square pixels and the principal point at the centre."""
        f = self.focal_px
        return np.array([[f, 0.0, self.image_width_px / 2.0],
                         [0.0, f, self.image_height_px / 2.0],
                         [0.0, 0.0, 1.0]])

    def world_to_camera(self) -> np.ndarray:
        """Rows are the camera x (right), y (down) and z (forward) axes."""
        return np.stack([self.right, -self.up, self.forward])

    def project(self, points) -> np.ndarray:
        """Pixel coordinates (u, v) and forward depth of world points."""
        cam = (np.atleast_2d(points) - self.position) @ self.world_to_camera().T
        k = self.intrinsics()
        uv = cam[:, :2] / cam[:, 2:3] * k[0, 0] + k[:2, 2]
        return np.column_stack([uv, cam[:, 2]])

    def to_dict(self) -> dict:
        return {"position": self.position.tolist(), "look_at": self.look_at.tolist(), "up": self.up.tolist(),
                "focal_length_mm": self.focal_length_mm, "sensor_width_mm": self.sensor_width_mm,
                "image_width_px": self.image_width_px, "image_height_px": self.image_height_px,
                "intrinsics": self.intrinsics().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPose":
        return cls(np.asarray(d["position"], dtype=float), np.asarray(d["look_at"], dtype=float),
                   np.asarray(d["up"], dtype=float), float(d["focal_length_mm"]), float(d["sensor_width_mm"]),
                   int(d["image_width_px"]), int(d["image_height_px"]))


def fibonacci_hemisphere(n: int, radius: float, min_elev: float, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """``n`` points on the upper hemisphere: stratified sin(elevation) above
    ``min_elev`` and golden-ratio azimuth steps."""
    if n < 1:
        raise RangeError(f"n must be >= 1, got {n}")
    min_sin = math.sin(min_elev)
    i = np.arange(n, dtype=np.float64)
    sin_el = min_sin + (1.0 - min_sin) * (i + 0.5) / n
    cos_el = np.sqrt(1.0 - sin_el * sin_el)
    azimuth = 2.0 * math.pi * i * GOLDEN_CONJUGATE
    unit = np.column_stack([cos_el * np.cos(azimuth), cos_el * np.sin(azimuth), sin_el])
    return np.asarray(center, dtype=np.float64) + radius * unit


def min_angular_separation(positions, center=(0.0, 0.0, 0.0)) -> float:
    """Smallest angle (rad) between any two directions from ``center``."""
    dirs = np.asarray(positions, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    dirs = dirs / np.linalg.norm(dirs, axis=1)[:, None]
    best = math.inf
    for a, b in itertools.combinations(range(len(dirs)), 2):
        c = float(np.clip(np.dot(dirs[a], dirs[b]), -1.0, 1.0))
        best = min(best, math.acos(c))
    return best


def _up_vector(forward: np.ndarray) -> np.ndarray:
    world_up = np.array([0.0, 0.0, 1.0])
    up = world_up - np.dot(world_up, forward) * forward
    norm = np.linalg.norm(up)
    if norm < 1e-9:
        up = FALLBACK_UP - np.dot(FALLBACK_UP, forward) * forward
        norm = np.linalg.norm(up)
    return up / norm


def build_rig(plate: PlateSpec, config: RigConfig, rng: np.random.Generator) -> list[CameraPose]:
    target = plate.surface_center
    positions = fibonacci_hemisphere(config.n_views, config.hemisphere_radius_m, config.min_elevation_rad, target)
    f_min, f_max = config.focal_range_mm
    poses = []
    for pos in positions:
        focal = float(rng.uniform(f_min, f_max)) if f_max > f_min else f_min
        forward = (target - pos) / np.linalg.norm(target - pos)
        poses.append(CameraPose(position=pos, look_at=target.copy(), up=_up_vector(forward),
                                focal_length_mm=focal, sensor_width_mm=config.sensor_width_mm,
                                image_width_px=config.image_width_px, image_height_px=config.image_height_px))
    return poses


def select_views(n_total: int, k: int, rng: np.random.Generator) -> list[int]:
    """``k`` distinct view indices drawn uniformly without replacement, sorted."""
    if k < 0 or k > n_total:
        raise RangeError(f"cannot select {k} of {n_total} views")
    return sorted(int(i) for i in rng.choice(n_total, size=k, replace=False))
