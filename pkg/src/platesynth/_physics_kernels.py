"""Numba kernels for convex rigid-body stepping.

Shapes are convex hulls in the body frame (origin at the centre of mass),
described by facet planes and a set of surface probe points (hull vertices
plus samples along long hull edges).  Contacts are probe-in-hull tests in both
directions, against the static convex pieces of the plate and against the
ground plane z=0.

Contact normals point from the "other" body (index ``cb``) toward the owner
(index ``ca``).  ``cb == -1`` is the plate, ``cb == -2`` the ground.
"""

from __future__ import annotations

import numpy as np
from numba import njit

PLATE = -1
GROUND = -2


@njit(cache=True)
def quat_to_mat(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    m = np.empty((3, 3))
    m[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    m[0, 1] = 2.0 * (x * y - w * z)
    m[0, 2] = 2.0 * (x * z + w * y)
    m[1, 0] = 2.0 * (x * y + w * z)
    m[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    m[1, 2] = 2.0 * (y * z - w * x)
    m[2, 0] = 2.0 * (x * z - w * y)
    m[2, 1] = 2.0 * (y * z + w * x)
    m[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return m


@njit(cache=True, inline="always")
def _add_contact(buf_i, buf_f, n, ca, cb, p, nrm, sep):
    if n >= buf_i.shape[0]:
        return n
    buf_i[n, 0] = ca
    buf_i[n, 1] = cb
    buf_f[n, 0] = p[0]
    buf_f[n, 1] = p[1]
    buf_f[n, 2] = p[2]
    buf_f[n, 3] = nrm[0]
    buf_f[n, 4] = nrm[1]
    buf_f[n, 5] = nrm[2]
    buf_f[n, 6] = sep
    return n + 1


@njit(cache=True)
def generate_contacts(pos, quat, active, margin, bound_r,
                      probes, probe_off, planes, plane_off,
                      s_planes, s_plane_off, s_probes, s_probe_off, s_center, s_bound_r,
                      buf_i, buf_f):
    """Fill contact buffers; returns the number of contacts written.

    ``s_*`` arrays describe the static convex pieces of the plate (world frame).
    """
    nb = pos.shape[0]
    ns = s_center.shape[0]
    n = 0
    rots = np.empty((nb, 3, 3))
    for i in range(nb):
        rots[i] = quat_to_mat(quat[i])
    p = np.empty(3)
    loc = np.empty(3)
    nrm = np.empty(3)
    for i in range(nb):
        if not active[i]:
            continue
        ri = rots[i]
        for k in range(probe_off[i], probe_off[i + 1]):
            for a in range(3):
                p[a] = pos[i, a] + ri[a, 0] * probes[k, 0] + ri[a, 1] * probes[k, 1] + ri[a, 2] * probes[k, 2]
            if p[2] < margin[i]:
                nrm[0] = 0.0
                nrm[1] = 0.0
                nrm[2] = 1.0
                n = _add_contact(buf_i, buf_f, n, i, GROUND, p, nrm, p[2])
        for sidx in range(ns):
            d0 = pos[i, 0] - s_center[sidx, 0]
            d1 = pos[i, 1] - s_center[sidx, 1]
            d2 = pos[i, 2] - s_center[sidx, 2]
            if np.sqrt(d0 * d0 + d1 * d1 + d2 * d2) > s_bound_r[sidx] + bound_r[i] + margin[i]:
                continue
            # body probes against the static piece
            lim = (s_bound_r[sidx] + margin[i]) ** 2
            for k in range(probe_off[i], probe_off[i + 1]):
                for a in range(3):
                    p[a] = pos[i, a] + ri[a, 0] * probes[k, 0] + ri[a, 1] * probes[k, 1] + ri[a, 2] * probes[k, 2]
                e0 = p[0] - s_center[sidx, 0]
                e1 = p[1] - s_center[sidx, 1]
                e2 = p[2] - s_center[sidx, 2]
                if e0 * e0 + e1 * e1 + e2 * e2 > lim:
                    continue
                best = -1e30
                bf = -1
                for f in range(s_plane_off[sidx], s_plane_off[sidx + 1]):
                    s = s_planes[f, 0] * p[0] + s_planes[f, 1] * p[1] + s_planes[f, 2] * p[2] + s_planes[f, 3]
                    if s > best:
                        best = s
                        bf = f
                        if best > margin[i]:
                            break
                if best < margin[i]:
                    nrm[0] = s_planes[bf, 0]
                    nrm[1] = s_planes[bf, 1]
                    nrm[2] = s_planes[bf, 2]
                    n = _add_contact(buf_i, buf_f, n, i, PLATE, p, nrm, best)
            # static probes against the body hull
            lim = (bound_r[i] + margin[i]) ** 2
            for k in range(s_probe_off[sidx], s_probe_off[sidx + 1]):
                d0 = s_probes[k, 0] - pos[i, 0]
                d1 = s_probes[k, 1] - pos[i, 1]
                d2 = s_probes[k, 2] - pos[i, 2]
                if d0 * d0 + d1 * d1 + d2 * d2 > lim:
                    continue
                for a in range(3):
                    loc[a] = ri[0, a] * d0 + ri[1, a] * d1 + ri[2, a] * d2
                best = -1e30
                bf = -1
                for f in range(plane_off[i], plane_off[i + 1]):
                    s = planes[f, 0] * loc[0] + planes[f, 1] * loc[1] + planes[f, 2] * loc[2] + planes[f, 3]
                    if s > best:
                        best = s
                        bf = f
                        if best > margin[i]:
                            break
                if best < margin[i]:
                    for a in range(3):
                        nrm[a] = -(ri[a, 0] * planes[bf, 0] + ri[a, 1] * planes[bf, 1] + ri[a, 2] * planes[bf, 2])
                    n = _add_contact(buf_i, buf_f, n, i, PLATE, s_probes[k], nrm, best)
    # body-body, canonical order i < j, probes of i against j then j against i
    for i in range(nb):
        if not active[i]:
            continue
        for j in range(i + 1, nb):
            if not active[j]:
                continue
            mg = margin[i] + margin[j]
            d0 = pos[j, 0] - pos[i, 0]
            d1 = pos[j, 1] - pos[i, 1]
            d2 = pos[j, 2] - pos[i, 2]
            if np.sqrt(d0 * d0 + d1 * d1 + d2 * d2) > bound_r[i] + bound_r[j] + mg:
                continue
            for side in range(2):
                a_idx = i if side == 0 else j
                b_idx = j if side == 0 else i
                ra = rots[a_idx]
                rb = rots[b_idx]
                rlim = (bound_r[b_idx] + mg) ** 2
                for k in range(probe_off[a_idx], probe_off[a_idx + 1]):
                    for a in range(3):
                        p[a] = (pos[a_idx, a] + ra[a, 0] * probes[k, 0] + ra[a, 1] * probes[k, 1]
                                + ra[a, 2] * probes[k, 2])
                    e0 = p[0] - pos[b_idx, 0]
                    e1 = p[1] - pos[b_idx, 1]
                    e2 = p[2] - pos[b_idx, 2]
                    if e0 * e0 + e1 * e1 + e2 * e2 > rlim:
                        continue
                    for a in range(3):
                        loc[a] = rb[0, a] * e0 + rb[1, a] * e1 + rb[2, a] * e2
                    best = -1e30
                    bf = -1
                    for f in range(plane_off[b_idx], plane_off[b_idx + 1]):
                        s = planes[f, 0] * loc[0] + planes[f, 1] * loc[1] + planes[f, 2] * loc[2] + planes[f, 3]
                        if s > best:
                            best = s
                            bf = f
                            if best > mg:
                                break
                    if best < mg:
                        for a in range(3):
                            nrm[a] = rb[a, 0] * planes[bf, 0] + rb[a, 1] * planes[bf, 1] + rb[a, 2] * planes[bf, 2]
                        n = _add_contact(buf_i, buf_f, n, a_idx, b_idx, p, nrm, best)
    return n


@njit(cache=True, inline="always")
def _jac(inv_i, r, d, ang, w):
    # ang = r x d ; w = I^-1 (r x d)
    ang[0] = r[1] * d[2] - r[2] * d[1]
    ang[1] = r[2] * d[0] - r[0] * d[2]
    ang[2] = r[0] * d[1] - r[1] * d[0]
    for a in range(3):
        w[a] = inv_i[a, 0] * ang[0] + inv_i[a, 1] * ang[1] + inv_i[a, 2] * ang[2]
    return ang[0] * w[0] + ang[1] * w[1] + ang[2] * w[2]


@njit(cache=True, inline="always")
def _rel(vel, omg, a, b, dirs, ang_a, ang_b, c, d):
    v = 0.0
    for k in range(3):
        v += dirs[c, d, k] * vel[a, k] + ang_a[c, d, k] * omg[a, k]
    if b >= 0:
        for k in range(3):
            v -= dirs[c, d, k] * vel[b, k] + ang_b[c, d, k] * omg[b, k]
    return v


@njit(cache=True, inline="always")
def _push(vel, omg, inv_mass, a, b, dirs, w_a, w_b, c, d, lam):
    ia = inv_mass[a] * lam
    for k in range(3):
        vel[a, k] += ia * dirs[c, d, k]
        omg[a, k] += lam * w_a[c, d, k]
    if b >= 0:
        ib = inv_mass[b] * lam
        for k in range(3):
            vel[b, k] -= ib * dirs[c, d, k]
            omg[b, k] -= lam * w_b[c, d, k]


@njit(cache=True)
def step(pos, quat, vel, omg, active, inv_mass, inv_inertia_body,
         probes, probe_off, planes, plane_off, bound_r,
         s_planes, s_plane_off, s_probes, s_probe_off, s_center, s_bound_r,
         gravity, dt, friction, restitution, lin_damp, ang_damp,
         vel_iters, pos_iters, slop, beta, spec_base,
         buf_i, buf_f):
    """Advance one semi-implicit step in place; returns the contact count."""
    nb = pos.shape[0]
    inv_iw = np.zeros((nb, 3, 3))
    margin = np.empty(nb)
    for i in range(nb):
        if not active[i]:
            margin[i] = 0.0
            continue
        for a in range(3):
            vel[i, a] += gravity[a] * dt
        r = quat_to_mat(quat[i])
        for u in range(3):
            for v in range(3):
                acc = 0.0
                for k in range(3):
                    for m in range(3):
                        acc += r[u, k] * inv_inertia_body[i, k, m] * r[v, m]
                inv_iw[i, u, v] = acc
        speed = (np.sqrt(vel[i, 0] ** 2 + vel[i, 1] ** 2 + vel[i, 2] ** 2)
                 + np.sqrt(omg[i, 0] ** 2 + omg[i, 1] ** 2 + omg[i, 2] ** 2) * bound_r[i])
        margin[i] = spec_base + speed * dt

    nc = generate_contacts(pos, quat, active, margin, bound_r, probes, probe_off, planes, plane_off,
                           s_planes, s_plane_off, s_probes, s_probe_off, s_center, s_bound_r, buf_i, buf_f)

    # per contact, per direction (normal, t1, t2): direction, angular terms, eff. mass
    dirs = np.empty((nc, 3, 3))
    ang_a = np.empty((nc, 3, 3))
    ang_b = np.zeros((nc, 3, 3))
    w_a = np.empty((nc, 3, 3))
    w_b = np.zeros((nc, 3, 3))
    kinv = np.empty((nc, 3))
    target = np.empty(nc)
    bias = np.empty(nc)
    lam = np.zeros((nc, 3))
    lam_p = np.zeros(nc)
    ra = np.empty(3)
    rb = np.empty(3)

    for c in range(nc):
        a = buf_i[c, 0]
        b = buf_i[c, 1]
        sep = buf_f[c, 6]
        n0, n1, n2 = buf_f[c, 3], buf_f[c, 4], buf_f[c, 5]
        for k in range(3):
            ra[k] = buf_f[c, k] - pos[a, k]
            rb[k] = buf_f[c, k] - pos[b, k] if b >= 0 else 0.0
        dirs[c, 0, 0] = n0
        dirs[c, 0, 1] = n1
        dirs[c, 0, 2] = n2
        if abs(n0) > 0.57735:
            t0, t1_, t2_ = n1, -n0, 0.0
        else:
            t0, t1_, t2_ = 0.0, n2, -n1
        tl = np.sqrt(t0 * t0 + t1_ * t1_ + t2_ * t2_)
        dirs[c, 1, 0] = t0 / tl
        dirs[c, 1, 1] = t1_ / tl
        dirs[c, 1, 2] = t2_ / tl
        dirs[c, 2, 0] = n1 * dirs[c, 1, 2] - n2 * dirs[c, 1, 1]
        dirs[c, 2, 1] = n2 * dirs[c, 1, 0] - n0 * dirs[c, 1, 2]
        dirs[c, 2, 2] = n0 * dirs[c, 1, 1] - n1 * dirs[c, 1, 0]
        for d in range(3):
            k = inv_mass[a] + _jac(inv_iw[a], ra, dirs[c, d], ang_a[c, d], w_a[c, d])
            if b >= 0:
                k += inv_mass[b] + _jac(inv_iw[b], rb, dirs[c, d], ang_b[c, d], w_b[c, d])
            kinv[c, d] = 1.0 / k
        vn0 = _rel(vel, omg, a, b, dirs, ang_a, ang_b, c, 0)
        if sep > 0.0:
            target[c] = -sep / dt
        elif vn0 < -0.2:
            target[c] = -restitution * vn0
        else:
            target[c] = 0.0
        bias[c] = beta * max(0.0, -sep - slop) / dt

    for _ in range(vel_iters):
        for c in range(nc):
            a = buf_i[c, 0]
            b = buf_i[c, 1]
            # friction first, bounded by the current normal impulse
            limit = friction * lam[c, 0]
            vt1 = _rel(vel, omg, a, b, dirs, ang_a, ang_b, c, 1)
            vt2 = _rel(vel, omg, a, b, dirs, ang_a, ang_b, c, 2)
            l1 = lam[c, 1] - vt1 * kinv[c, 1]
            l2 = lam[c, 2] - vt2 * kinv[c, 2]
            mag = np.sqrt(l1 * l1 + l2 * l2)
            if mag > limit and mag > 0.0:
                l1 *= limit / mag
                l2 *= limit / mag
            _push(vel, omg, inv_mass, a, b, dirs, w_a, w_b, c, 1, l1 - lam[c, 1])
            _push(vel, omg, inv_mass, a, b, dirs, w_a, w_b, c, 2, l2 - lam[c, 2])
            lam[c, 1] = l1
            lam[c, 2] = l2
            vn = _rel(vel, omg, a, b, dirs, ang_a, ang_b, c, 0)
            new = max(0.0, lam[c, 0] + (target[c] - vn) * kinv[c, 0])
            _push(vel, omg, inv_mass, a, b, dirs, w_a, w_b, c, 0, new - lam[c, 0])
            lam[c, 0] = new

    # split-impulse position correction on pseudo velocities
    pv = np.zeros((nb, 3))
    pw = np.zeros((nb, 3))
    for _ in range(pos_iters):
        for c in range(nc):
            if bias[c] <= 0.0:
                continue
            a = buf_i[c, 0]
            b = buf_i[c, 1]
            vn = _rel(pv, pw, a, b, dirs, ang_a, ang_b, c, 0)
            new = max(0.0, lam_p[c] + (bias[c] - vn) * kinv[c, 0])
            _push(pv, pw, inv_mass, a, b, dirs, w_a, w_b, c, 0, new - lam_p[c])
            lam_p[c] = new

    lin_f = max(0.0, 1.0 - lin_damp * dt)
    ang_f = max(0.0, 1.0 - ang_damp * dt)
    for i in range(nb):
        if not active[i]:
            continue
        for a in range(3):
            vel[i, a] *= lin_f
            omg[i, a] *= ang_f
            pos[i, a] += (vel[i, a] + pv[i, a]) * dt
        w0 = omg[i, 0] + pw[i, 0]
        w1 = omg[i, 1] + pw[i, 1]
        w2 = omg[i, 2] + pw[i, 2]
        wm = np.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
        if wm > 0.0:
            half = 0.5 * wm * dt
            s = np.sin(half) / wm
            dq0 = np.cos(half)
            dq1 = w0 * s
            dq2 = w1 * s
            dq3 = w2 * s
            q0, q1, q2, q3 = quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3]
            r0 = dq0 * q0 - dq1 * q1 - dq2 * q2 - dq3 * q3
            r1 = dq0 * q1 + dq1 * q0 + dq2 * q3 - dq3 * q2
            r2 = dq0 * q2 - dq1 * q3 + dq2 * q0 + dq3 * q1
            r3 = dq0 * q3 + dq1 * q2 - dq2 * q1 + dq3 * q0
            qn = np.sqrt(r0 * r0 + r1 * r1 + r2 * r2 + r3 * r3)
            quat[i, 0] = r0 / qn
            quat[i, 1] = r1 / qn
            quat[i, 2] = r2 / qn
            quat[i, 3] = r3 / qn
    return nc
