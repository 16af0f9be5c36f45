"""Small rigid-transform and convex-hull helpers.

Quaternions are stored as ``(w, x, y, z)`` numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.sqrt(np.dot(q, q))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite quaternion")
    return q / n


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([np.cos(0.5 * yaw), 0.0, 0.0, np.sin(0.5 * yaw)])


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation (normalised 4D Gaussian), canonical w >= 0."""
    while True:
        q = rng.standard_normal(4)
        n = np.linalg.norm(q)
        if n > 1e-9:
            q = q / n
            return -q if q[0] < 0 else q


def transform_points(points, position, orientation) -> np.ndarray:
    return np.asarray(points) @ quat_to_matrix(orientation).T + np.asarray(position)


def aabb(points) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=np.float64)
    return pts.min(axis=0), pts.max(axis=0)


@dataclass(frozen=True, eq=False)
class Hull:
    """Convex hull with outward facet planes ``normal . p + offset <= 0`` inside."""

    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) indices into vertices, outward winding
    planes: np.ndarray  # (P, 4) de-duplicated facet planes

    @classmethod
    def from_points(cls, points) -> "Hull":
        pts = np.asarray(points, dtype=np.float64)
        qh = ConvexHull(pts)
        verts = pts[qh.vertices]
        remap = {int(old): new for new, old in enumerate(qh.vertices)}
        faces = np.array([[remap[int(i)] for i in tri] for tri in qh.simplices], dtype=np.int64)
        centroid = verts.mean(axis=0)
        for k, tri in enumerate(faces):
            a, b, c = verts[tri]
            if np.dot(np.cross(b - a, c - a), a - centroid) < 0:
                faces[k] = tri[[0, 2, 1]]
        return cls(verts, faces, _unique_planes(qh.equations))

    def signed_distance_planes(self, points) -> np.ndarray:
        """Max facet-plane value per point: exact inside, a lower bound outside."""
        pts = np.atleast_2d(points)
        return (pts @ self.planes[:, :3].T + self.planes[:, 3]).max(axis=1)

    def contains(self, points, tol: float = 1e-6) -> np.ndarray:
        return self.signed_distance_planes(points) <= tol

    def edges(self) -> np.ndarray:
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)


def edge_samples(hull: "Hull", spacing: float, min_length: float | None = None) -> np.ndarray:
    """Points along hull edges longer than ``min_length`` (default 2.5x spacing),
    skipping triangulation diagonals inside flat facets."""
    if min_length is None:
        min_length = 2.5 * spacing
    verts = hull.vertices
    normals: dict[tuple[int, int], list[np.ndarray]] = {}
    for tri in hull.faces:
        a, b, c = verts[tri]
        n = np.cross(b - a, c - a)
        n /= np.linalg.norm(n)
        for e in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            normals.setdefault(tuple(sorted((int(e[0]), int(e[1])))), []).append(n)
    out = []
    for (i, j), ns in sorted(normals.items()):
        if len(ns) == 2 and np.dot(ns[0], ns[1]) > 1 - 1e-9:
            continue
        length = np.linalg.norm(verts[j] - verts[i])
        if length <= min_length:
            continue
        k = int(np.ceil(length / spacing))
        for s in range(1, k):
            out.append(verts[i] + (verts[j] - verts[i]) * (s / k))
    return np.array(out).reshape(-1, 3)


def _unique_planes(equations: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    eq = np.asarray(equations, dtype=np.float64)
    keep: list[np.ndarray] = []
    for row in eq:
        if not any(np.abs(row - k).max() < tol for k in keep):
            keep.append(row)
    return np.array(keep)


def mass_properties(vertices, faces) -> tuple[float, np.ndarray, np.ndarray]:
    """Volume, centroid and unit-density inertia tensor (about the centroid)
    of a closed, outward-wound triangle mesh."""
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces)
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    ref = v.mean(axis=0)
    a, b, c = a - ref, b - ref, c - ref
    vol6 = np.einsum("ij,ij->i", a, np.cross(b, c))
    volume = vol6.sum() / 6.0
    if volume <= 0:
        raise ValueError("mesh has non-positive enclosed volume")
    centroid_local = (vol6[:, None] * (a + b + c)).sum(axis=0) / (24.0 * volume)

    # second moments of each tetrahedron (origin, a, b, c)
    def _moment(i, j):
        return (vol6 / 120.0 * (
            2 * (a[:, i] * a[:, j] + b[:, i] * b[:, j] + c[:, i] * c[:, j])
            + a[:, i] * b[:, j] + a[:, j] * b[:, i]
            + a[:, i] * c[:, j] + a[:, j] * c[:, i]
            + b[:, i] * c[:, j] + b[:, j] * c[:, i]
        )).sum()

    cov = np.array([[_moment(i, j) for j in range(3)] for i in range(3)])
    inertia_origin = np.trace(cov) * np.eye(3) - cov
    d = centroid_local
    inertia = inertia_origin - volume * (np.dot(d, d) * np.eye(3) - np.outer(d, d))
    return float(volume), centroid_local + ref, inertia


def point_triangles_distance(point, tris) -> np.ndarray:
    """Euclidean distance from one point to each triangle of a (T, 3, 3) array."""
    p = np.asarray(point, dtype=np.float64)
    tris = np.asarray(tris, dtype=np.float64)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, ac = b - a, c - a
    n = np.cross(ab, ac)
    nn = np.einsum("ij,ij->i", n, n)
    ap = p - a
    t = np.einsum("ij,ij->i", ap, n) / nn
    v2 = ap - t[:, None] * n
    d00 = np.einsum("ij,ij->i", ab, ab)
    d01 = np.einsum("ij,ij->i", ab, ac)
    d11 = np.einsum("ij,ij->i", ac, ac)
    d20 = np.einsum("ij,ij->i", v2, ab)
    d21 = np.einsum("ij,ij->i", v2, ac)
    denom = d00 * d11 - d01 * d01
    bv = (d11 * d20 - d01 * d21) / denom
    bw = (d00 * d21 - d01 * d20) / denom
    inside = (bv >= 0) & (bw >= 0) & (bv + bw <= 1)
    best = np.where(inside, np.abs(t) * np.sqrt(nn), np.inf)
    for s, e in ((a, b), (b, c), (c, a)):
        seg = e - s
        u = np.clip(np.einsum("ij,ij->i", p - s, seg) / np.einsum("ij,ij->i", seg, seg), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(p - (s + u[:, None] * seg), axis=1))
    return best


def point_hull_distance(points, hull_vertices, hull_faces) -> np.ndarray:
    """Exact distance from points to a convex hull given by its boundary
    triangles; zero for points inside."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    verts = np.asarray(hull_vertices, dtype=np.float64)
    tris = verts[np.asarray(hull_faces)]
    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    offsets = -np.einsum("ij,ij->i", normals, tris[:, 0])
    out = np.empty(len(pts))
    for k, p in enumerate(pts):
        if np.max(normals @ p + offsets) <= 0.0:
            out[k] = 0.0
        else:
            out[k] = point_triangles_distance(p, tris).min()
    return out


def penetration_depth(verts_a, verts_b) -> float:
    """Exact overlap depth of two convex point sets (0 when separated).

    The minimum translation distance equals the distance from the origin to
    the boundary of the Minkowski difference A - B, when the origin is inside.
    """
    a = np.asarray(verts_a, dtype=np.float64)
    b = np.asarray(verts_b, dtype=np.float64)
    diff = (a[:, None, :] - b[None, :, :]).reshape(-1, 3)
    eq = ConvexHull(diff).equations
    values = eq[:, 3]  # plane value at the origin
    if values.max() >= 0.0:
        return 0.0
    return float(-values.max())
