"""Plate geometry: a flat polygonal base plus an optional sloped lip.

Both physics and rendering use the same convex pieces, so what an item rests
on is exactly what the camera sees.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .geometry import Hull, point_hull_distance
from .scene import PlateSpec

PLATE_SIDES = 48
RIM_SLOPE_DEG = 35.0


def rim_width(plate: PlateSpec) -> float:
    return plate.rim_height_m / math.tan(math.radians(RIM_SLOPE_DEG))


def outer_radius(plate: PlateSpec) -> float:
    return plate.radius_m + rim_width(plate)


def _ring(radius: float, z: float, cx: float, cy: float, angles: np.ndarray) -> np.ndarray:
    return np.column_stack([cx + radius * np.cos(angles), cy + radius * np.sin(angles), np.full(len(angles), z)])


@lru_cache(maxsize=64)
def plate_pieces(plate: PlateSpec) -> tuple[Hull, ...]:
    """Convex pieces in world coordinates: base prism first, then lip wedges."""
    cx, cy, _ = plate.center
    angles = 2 * math.pi * np.arange(PLATE_SIDES) / PLATE_SIDES
    base = np.vstack([_ring(plate.radius_m, 0.0, cx, cy, angles),
                      _ring(plate.radius_m, plate.top_z_m, cx, cy, angles)])
    pieces = [Hull.from_points(base)]
    if plate.rim_height_m > 0:
        r_out = outer_radius(plate)
        top = plate.top_z_m + plate.rim_height_m
        for s in range(PLATE_SIDES):
            pair = angles[[s, (s + 1) % PLATE_SIDES]]
            if s == PLATE_SIDES - 1:
                pair = np.array([angles[s], 2 * math.pi])
            pts = np.vstack([_ring(plate.radius_m, 0.0, cx, cy, pair),
                             _ring(plate.radius_m, plate.top_z_m, cx, cy, pair),
                             _ring(r_out, top, cx, cy, pair),
                             _ring(r_out, 0.0, cx, cy, pair)])
            pieces.append(Hull.from_points(pts))
    return tuple(pieces)


def plate_mesh(plate: PlateSpec) -> tuple[np.ndarray, np.ndarray]:
    """Triangle soup of all plate pieces (vertices, triangles)."""
    verts, tris, off = [], [], 0
    for piece in plate_pieces(plate):
        verts.append(piece.vertices)
        tris.append(piece.faces + off)
        off += len(piece.vertices)
    return np.vstack(verts), np.vstack(tris)


def distance_to_plate(points, plate: PlateSpec) -> np.ndarray:
    """Exact distance from points to the plate solid (0 inside)."""
    pts = np.atleast_2d(points)
    best = np.full(len(pts), np.inf)
    for piece in plate_pieces(plate):
        best = np.minimum(best, point_hull_distance(pts, piece.vertices, piece.faces))
    return best
