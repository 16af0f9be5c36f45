"""Bounding-volume hierarchy build and numba ray traversal."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ and "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # prefer OpenMP: avoids a noisy probe of old TBB builds and is thread-safe
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

LEAF_SIZE = 4


@dataclass(frozen=True, eq=False)
class BVH:
    node_min: np.ndarray  # (N, 3)
    node_max: np.ndarray  # (N, 3)
    node_left: np.ndarray  # (N,) child index, -1 for leaves
    node_right: np.ndarray
    node_start: np.ndarray  # leaf triangle range into ``tri_order``
    node_count: np.ndarray
    tri_verts: np.ndarray  # (T, 3, 3) triangles in BVH leaf order
    tri_order: np.ndarray  # original triangle index per slot


def build_bvh(vertices, triangles) -> BVH:
    """Median-split BVH over triangle centroids along the widest axis."""
    tris = np.asarray(vertices, dtype=np.float64)[np.asarray(triangles)]
    lo_t, hi_t = tris.min(axis=1), tris.max(axis=1)
    cent = tris.mean(axis=1)
    order = np.arange(len(tris))
    mins, maxs, lefts, rights, starts, counts = [], [], [], [], [], []

    def new_node():
        for lst in (mins, maxs):
            lst.append(None)
        for lst in (lefts, rights, starts, counts):
            lst.append(-1)
        return len(mins) - 1

    # iterative build with an explicit stack: (node, start, end)
    root = new_node()
    stack = [(root, 0, len(order))]
    while stack:
        node, s, e = stack.pop()
        idx = order[s:e]
        mins[node] = lo_t[idx].min(axis=0)
        maxs[node] = hi_t[idx].max(axis=0)
        if e - s <= LEAF_SIZE:
            starts[node], counts[node] = s, e - s
            continue
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        sub = np.argsort(c[:, axis], kind="stable")
        order[s:e] = idx[sub]
        mid = s + (e - s) // 2
        left, right = new_node(), new_node()
        lefts[node], rights[node] = left, right
        stack.append((right, mid, e))
        stack.append((left, s, mid))
    return BVH(np.array(mins), np.array(maxs), np.array(lefts, dtype=np.int64),
               np.array(rights, dtype=np.int64), np.array(starts, dtype=np.int64),
               np.array(counts, dtype=np.int64), np.ascontiguousarray(tris[order]), order)


@njit(cache=True, inline="always")
def _ray_box(ox, oy, oz, ix, iy, iz, bmin, bmax, t_max):
    t0 = (bmin[0] - ox) * ix
    t1 = (bmax[0] - ox) * ix
    lo = min(t0, t1)
    hi = max(t0, t1)
    t0 = (bmin[1] - oy) * iy
    t1 = (bmax[1] - oy) * iy
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    t0 = (bmin[2] - oz) * iz
    t1 = (bmax[2] - oz) * iz
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    return hi >= max(lo, 0.0) and lo <= t_max


@njit(cache=True, inline="always")
def _ray_tri(ox, oy, oz, dx, dy, dz, tri):
    """Two-sided Moller-Trumbore; returns t or -1."""
    e1x = tri[1, 0] - tri[0, 0]
    e1y = tri[1, 1] - tri[0, 1]
    e1z = tri[1, 2] - tri[0, 2]
    e2x = tri[2, 0] - tri[0, 0]
    e2y = tri[2, 1] - tri[0, 1]
    e2z = tri[2, 2] - tri[0, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < 1e-18:
        return -1.0
    inv = 1.0 / det
    sx = ox - tri[0, 0]
    sy = oy - tri[0, 1]
    sz = oz - tri[0, 2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= 1e-9:
        return -1.0
    return t


@njit(cache=True)
def _closest_hit(ox, oy, oz, dx, dy, dz, node_min, node_max, node_left, node_right,
                 node_start, node_count, tris, node_base, tri_base, stack):
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    best_t = np.inf
    best_tri = -1
    sp = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = node_base + stack[sp]
        if not _ray_box(ox, oy, oz, ix, iy, iz, node_min[node], node_max[node], best_t):
            continue
        if node_left[node] < 0:
            s = tri_base + node_start[node]
            for k in range(s, s + node_count[node]):
                t = _ray_tri(ox, oy, oz, dx, dy, dz, tris[k])
                if t > 0.0 and t < best_t:
                    best_t = t
                    best_tri = k - tri_base
        else:
            stack[sp] = node_right[node]
            stack[sp + 1] = node_left[node]
            sp += 2
    return best_t, best_tri


@njit(cache=True, parallel=True, error_model="numpy")
def cast_primary(origin, right, down, forward, focal_px, cx, cy, width, height,
                 rot, trans, node_off, tri_off,
                 node_min, node_max, node_left, node_right, node_start, node_count, tris,
                 n_items):
    """Per pixel: nearest hit over all instances plus per-item any-hit flags.

    Instances are tested in index order and a strictly smaller t is required
    to replace the current hit, so ties go to the lowest index.
    Returns (t, instance, triangle, dir·forward, item_hit[n_items, H, W]).
    """
    n_inst = rot.shape[0]
    t_out = np.full((height, width), np.inf)
    inst_out = np.full((height, width), -1, dtype=np.int32)
    tri_out = np.full((height, width), -1, dtype=np.int32)
    cos_out = np.zeros((height, width))
    item_hit = np.zeros((n_items, height, width), dtype=np.bool_)
    for v in prange(height):
        stack = np.empty(128, dtype=np.int64)
        for u in range(width):
            x = (u + 0.5 - cx) / focal_px
            y = (v + 0.5 - cy) / focal_px
            wx = x * right[0] + y * down[0] + forward[0]
            wy = x * right[1] + y * down[1] + forward[1]
            wz = x * right[2] + y * down[2] + forward[2]
            nrm = np.sqrt(wx * wx + wy * wy + wz * wz)
            wx /= nrm
            wy /= nrm
            wz /= nrm
            cos_out[v, u] = wx * forward[0] + wy * forward[1] + wz * forward[2]
            for k in range(n_inst):
                r = rot[k]
                # object-space ray: R^T (o - t), R^T d (rigid, so t is preserved)
                ex = origin[0] - trans[k, 0]
                ey = origin[1] - trans[k, 1]
                ez = origin[2] - trans[k, 2]
                ox = r[0, 0] * ex + r[1, 0] * ey + r[2, 0] * ez
                oy = r[0, 1] * ex + r[1, 1] * ey + r[2, 1] * ez
                oz = r[0, 2] * ex + r[1, 2] * ey + r[2, 2] * ez
                dx = r[0, 0] * wx + r[1, 0] * wy + r[2, 0] * wz
                dy = r[0, 1] * wx + r[1, 1] * wy + r[2, 1] * wz
                dz = r[0, 2] * wx + r[1, 2] * wy + r[2, 2] * wz
                t, tri = _closest_hit(ox, oy, oz, dx, dy, dz, node_min, node_max, node_left, node_right,
                                      node_start, node_count, tris, node_off[k], tri_off[k], stack)
                if tri >= 0:
                    if k < n_items:
                        item_hit[k, v, u] = True
                    if t < t_out[v, u]:
                        t_out[v, u] = t
                        inst_out[v, u] = k
                        tri_out[v, u] = tri
    return t_out, inst_out, tri_out, cos_out, item_hit
