"""Compiled kernels. Same signatures and semantics as numpy_impl."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _exp_one(v, R, M):
    """Fill R with exp([v]_x) and M with the dexp factor, in place."""
    t2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    t = np.sqrt(t2)
    K = np.zeros((3, 3))
    K[0, 1] = -v[2]
    K[0, 2] = v[1]
    K[1, 0] = v[2]
    K[1, 2] = -v[0]
    K[2, 0] = -v[1]
    K[2, 1] = v[0]
    K2 = K @ K
    if t < 1e-4:
        c1 = 1.0
        c2 = 0.5
    else:
        c1 = np.sin(t) / t
        c2 = (1.0 - np.cos(t)) / t2
    for a in range(3):
        for b in range(3):
            R[a, b] = c1 * K[a, b] + c2 * K2[a, b]
        R[a, a] += 1.0
    if t < 1e-4:
        for a in range(3):
            for b in range(3):
                M[a, b] = -0.5 * K[a, b]
            M[a, a] += 1.0
    else:
        for a in range(3):
            for b in range(3):
                acc = v[a] * v[b]
                for k in range(3):
                    rtk = R[k, a]
                    if k == a:
                        rtk -= 1.0
                    acc += rtk * K[k, b]
                M[a, b] = acc / t2


@njit(cache=True)
def energy_grad(
    x, v, edge_face, edge_vi, edge_vj, da, pair_i, pair_j, rij, alpha, bdir
):
    nf = v.shape[0]
    R = np.empty((nf, 3, 3))
    M = np.empty((nf, 3, 3))
    for f in range(nf):
        _exp_one(v[f], R[f], M[f])

    energy = 0.0
    gx = np.zeros_like(x)
    G = np.zeros((nf, 3, 3))

    r = np.empty(3)
    for e in range(edge_face.shape[0]):
        f = edge_face[e]
        i = edge_vi[e]
        j = edge_vj[e]
        for a in range(3):
            r_a = x[i, a] - x[j, a]
            for b in range(3):
                r_a -= R[f, a, b] * da[e, b]
            r[a] = r_a
        bd = bdir[e, 0] * r[0] + bdir[e, 1] * r[1] + bdir[e, 2] * r[2]
        for a in range(3):
            rw_a = r[a] + bdir[e, a] * bd
            energy += r[a] * rw_a
            gx[i, a] += 2.0 * rw_a
            gx[j, a] -= 2.0 * rw_a
            for b in range(3):
                G[f, a, b] -= 2.0 * rw_a * da[e, b]

    for p in range(pair_i.shape[0]):
        i = pair_i[p]
        j = pair_j[p]
        ap = alpha[p]
        for a in range(3):
            for b in range(3):
                t_ab = 0.0
                for k in range(3):
                    t_ab += R[j, a, k] * rij[p, k, b]
                diff = R[i, a, b] - t_ab
                energy += ap * diff * diff
                G[i, a, b] -= 2.0 * ap * t_ab
                # R_i rij^T accumulated into the partner face
        for a in range(3):
            for b in range(3):
                u_ab = 0.0
                for k in range(3):
                    u_ab += R[i, a, k] * rij[p, b, k]
                G[j, a, b] -= 2.0 * ap * u_ab

    gv = np.zeros((nf, 3))
    for f in range(nf):
        P = R[f].T @ G[f]
        s0 = P[2, 1] - P[1, 2]
        s1 = P[0, 2] - P[2, 0]
        s2 = P[1, 0] - P[0, 1]
        for a in range(3):
            gv[f, a] = M[f, 0, a] * s0 + M[f, 1, a] * s1 + M[f, 2, a] * s2
    return energy, gx, gv


@njit(cache=True)
def winding_numbers(points, vertices, faces):
    n = points.shape[0]
    out = np.zeros(n)
    for p in range(n):
        total = 0.0
        px, py, pz = points[p, 0], points[p, 1], points[p, 2]
        for f in range(faces.shape[0]):
            ax = vertices[faces[f, 0], 0] - px
            ay = vertices[faces[f, 0], 1] - py
            az = vertices[faces[f, 0], 2] - pz
            bx = vertices[faces[f, 1], 0] - px
            by = vertices[faces[f, 1], 1] - py
            bz = vertices[faces[f, 1], 2] - pz
            cx = vertices[faces[f, 2], 0] - px
            cy = vertices[faces[f, 2], 1] - py
            cz = vertices[faces[f, 2], 2] - pz
            la = np.sqrt(ax * ax + ay * ay + az * az)
            lb = np.sqrt(bx * bx + by * by + bz * bz)
            lc = np.sqrt(cx * cx + cy * cy + cz * cz)
            det = (
                ax * (by * cz - bz * cy)
                + ay * (bz * cx - bx * cz)
                + az * (bx * cy - by * cx)
            )
            denom = (
                la * lb * lc
                + (ax * bx + ay * by + az * bz) * lc
                + (bx * cx + by * cy + bz * cz) * la
                + (cx * ax + cy * ay + cz * az) * lb
            )
            total += np.arctan2(det, denom)
        out[p] = total / (2.0 * np.pi)
    return out


@njit(cache=True)
def _closest_sq(px, py, pz, a, ab, ac):
    apx = px - a[0]
    apy = py - a[1]
    apz = pz - a[2]
    d1 = ab[0] * apx + ab[1] * apy + ab[2] * apz
    d2 = ac[0] * apx + ac[1] * apy + ac[2] * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return apx * apx + apy * apy + apz * apz
    bpx = apx - ab[0]
    bpy = apy - ab[1]
    bpz = apz - ab[2]
    d3 = ab[0] * bpx + ab[1] * bpy + ab[2] * bpz
    d4 = ac[0] * bpx + ac[1] * bpy + ac[2] * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        dx = apx - t * ab[0]
        dy = apy - t * ab[1]
        dz = apz - t * ab[2]
        return dx * dx + dy * dy + dz * dz
    cpx = apx - ac[0]
    cpy = apy - ac[1]
    cpz = apz - ac[2]
    d5 = ab[0] * cpx + ab[1] * cpy + ab[2] * cpz
    d6 = ac[0] * cpx + ac[1] * cpy + ac[2] * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        dx = apx - t * ac[0]
        dy = apy - t * ac[1]
        dz = apz - t * ac[2]
        return dx * dx + dy * dy + dz * dz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        dx = bpx - t * (ac[0] - ab[0])
        dy = bpy - t * (ac[1] - ab[1])
        dz = bpz - t * (ac[2] - ab[2])
        return dx * dx + dy * dy + dz * dz
    denom = 1.0 / (va + vb + vc)
    vf = vb * denom
    wf = vc * denom
    dx = apx - vf * ab[0] - wf * ac[0]
    dy = apy - vf * ab[1] - wf * ac[1]
    dz = apz - vf * ab[2] - wf * ac[2]
    return dx * dx + dy * dy + dz * dz


@njit(cache=True)
def point_surface_distance(points, vertices, faces):
    nf = faces.shape[0]
    a = np.empty((nf, 3))
    ab = np.empty((nf, 3))
    ac = np.empty((nf, 3))
    for f in range(nf):
        for k in range(3):
            a[f, k] = vertices[faces[f, 0], k]
            ab[f, k] = vertices[faces[f, 1], k] - a[f, k]
            ac[f, k] = vertices[faces[f, 2], k] - a[f, k]
    out = np.empty(points.shape[0])
    for p in range(points.shape[0]):
        best = np.inf
        for f in range(nf):
            d2 = _closest_sq(
                points[p, 0], points[p, 1], points[p, 2], a[f], ab[f], ac[f]
            )
            if d2 < best:
                best = d2
        out[p] = np.sqrt(best)
    return out
