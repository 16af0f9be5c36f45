"""Scene data shared by both plating modes, the renderer and the pipeline."""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

SEED_MASK = (1 << 64) - 1


def derive_seed(*parts: int | str) -> int:
    """Stable 64-bit seed from an arbitrary tuple of ints/strings."""
    h = hashlib.blake2b(digest_size=8, person=b"platesynth")
    for p in parts:
        if isinstance(p, str):
            h.update(b"s" + p.encode())
        else:
            h.update(b"i" + struct.pack("<q", int(p)) if -(1 << 63) <= int(p) < (1 << 63)
                     else b"I" + str(int(p)).encode())
    return int.from_bytes(h.digest(), "little") & SEED_MASK


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


@dataclass(frozen=True)
class PlateSpec:
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius_m: float = 0.12
    rim_height_m: float = 0.012
    top_z_m: float = 0.02
    segment_count: int = 8

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3 or not all(math.isfinite(c) for c in self.center):
            raise ConfigurationError("plate.center must be three finite numbers")
        if not (self.radius_m > 0 and math.isfinite(self.radius_m)):
            raise ConfigurationError(f"plate.radius_m must be > 0, got {self.radius_m}")
        if not (self.top_z_m > 0 and math.isfinite(self.top_z_m)):
            raise ConfigurationError(f"plate.top_z_m must be > 0, got {self.top_z_m}")
        if self.rim_height_m < 0:
            raise ConfigurationError(f"plate.rim_height_m must be >= 0, got {self.rim_height_m}")
        if int(self.segment_count) != self.segment_count or self.segment_count < 1:
            raise ConfigurationError(f"plate.segment_count must be an integer >= 1, got {self.segment_count}")
        object.__setattr__(self, "segment_count", int(self.segment_count))

    @property
    def surface_center(self) -> np.ndarray:
        """Centre of the plate's top face."""
        return np.array([self.center[0], self.center[1], self.top_z_m])

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius_m": self.radius_m, "rim_height_m": self.rim_height_m,
                "top_z_m": self.top_z_m, "segment_count": self.segment_count}

    @classmethod
    def from_dict(cls, data: dict) -> "PlateSpec":
        unknown = set(data) - {"center", "radius_m", "rim_height_m", "top_z_m", "segment_count"}
        if unknown:
            raise ConfigurationError(f"unknown plate keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class PlacedItem:
    """An asset instance; world point = R(orientation) @ p_object + position."""

    instance_id: int
    asset_id: str
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]

    def to_dict(self) -> dict:
        return {"instance_id": self.instance_id, "asset_id": self.asset_id,
                "position": list(self.position), "orientation": list(self.orientation)}

    @classmethod
    def from_dict(cls, d: dict) -> "PlacedItem":
        return cls(int(d["instance_id"]), str(d["asset_id"]),
                   tuple(float(x) for x in d["position"]), tuple(float(x) for x in d["orientation"]))


@dataclass(frozen=True)
class Scene:
    plate: PlateSpec
    items: tuple[PlacedItem, ...]
    seed: int
    mode: str = "dynamic"
    rejected: tuple[dict, ...] = field(default_factory=tuple)
    brightness: tuple[float, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "seed": self.seed, "plate": self.plate.to_dict(),
                "items": [it.to_dict() for it in self.items],
                "brightness": list(self.brightness),
                "rejected": [dict(r) for r in self.rejected]}

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(plate=PlateSpec.from_dict(d["plate"]),
                   items=tuple(PlacedItem.from_dict(i) for i in d["items"]),
                   seed=int(d["seed"]), mode=d.get("mode", "dynamic"),
                   rejected=tuple(d.get("rejected", ())),
                   brightness=tuple(float(b) for b in d.get("brightness", ())))

    def with_brightness(self, factors) -> "Scene":
        return Scene(self.plate, self.items, self.seed, self.mode, self.rejected,
                     tuple(float(f) for f in factors))
