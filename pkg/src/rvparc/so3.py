"""Rotation-group helpers: exp, log and the derivative of the exponential.

Rotations are parametrized by axis-angle vectors v in R^3 with
R = exp([v]_x). The derivative of the action R(v) u with respect to v
has a closed form away from the origin; below ``SMALL_ANGLE`` the
first-order expansion is used instead, which keeps the formulas finite
and matches the exact value to O(theta^2).
"""

from __future__ import annotations

import numpy as np

SMALL_ANGLE = 1e-4


def hat(v):
    """Skew matrix [v]_x with hat(v) @ u == cross(v, u)."""
    v = np.asarray(v, dtype=np.float64)
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def exp_so3(v):
    """Rotation matrix exp([v]_x) by the Rodrigues formula."""
    v = np.asarray(v, dtype=np.float64)
    theta = np.linalg.norm(v)
    K = hat(v)
    if theta < SMALL_ANGLE:
        # second-order series; error O(theta^3) is below roundoff here
        return np.eye(3) + K + 0.5 * (K @ K)
    return (
        np.eye(3)
        + (np.sin(theta) / theta) * K
        + ((1.0 - np.cos(theta)) / theta**2) * (K @ K)
    )


def log_so3(R):
    """Axis-angle vector v with exp_so3(v) == R, |v| in [0, pi]."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(tr)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < SMALL_ANGLE:
        return 0.5 * w
    if np.pi - theta < 1e-6:
        # near the cut locus the antisymmetric part vanishes; recover the
        # axis from the symmetric part R + I = 2 a a^T (up to sign)
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        k = int(np.argmax(axis))
        if axis[k] > 0:
            axis = A[:, k] / axis[k]
        n = np.linalg.norm(axis)
        if n > 0:
            axis = axis / n
        if w @ axis < 0:
            axis = -axis
        return theta * axis
    return (theta / (2.0 * np.sin(theta))) * w


def dexp_apply(v, u):
    """Jacobian of v -> exp_so3(v) @ u, shape (3, 3).

    Closed form J = -R [u]_x M(v) with
    M(v) = (v v^T + (R^T - I)[v]_x) / |v|^2; for |v| below the
    small-angle cutoff M degenerates to I - [v]_x / 2.
    """
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    R = exp_so3(v)
    theta2 = v @ v
    if theta2 < SMALL_ANGLE**2:
        M = np.eye(3) - 0.5 * hat(v)
    else:
        M = (np.outer(v, v) + (R.T - np.eye(3)) @ hat(v)) / theta2
    return -R @ hat(u) @ M


def dexp_rmatvec(v, G):
    """Adjoint contraction sum_u J(v, e_u)^T G[:, u] for G in R^{3x3}.

    Equivalent to the gradient of trace(G^T R) with respect to v where
    R = exp_so3(v): returns g with g[k] = trace(G^T dR/dv_k).
    """
    v = np.asarray(v, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    R = exp_so3(v)
    theta2 = v @ v
    if theta2 < SMALL_ANGLE**2:
        M = np.eye(3) - 0.5 * hat(v)
    else:
        M = (np.outer(v, v) + (R.T - np.eye(3)) @ hat(v)) / theta2
    # d/dv_k trace(G^T R) with columns of J stacked: for each basis e_u,
    # J(v, e_u) gives d(R e_u)/dv; collecting trace terms yields
    # g = M^T s where s_k = sum_u (R^T G)[:, u] x e_u accumulated,
    # which reduces to the axial part of R^T G.
    P = R.T @ G
    s = np.array([P[2, 1] - P[1, 2], P[0, 2] - P[2, 0], P[1, 0] - P[0, 1]])
    return M.T @ s


def project_rotation(A):
    """Nearest rotation (Frobenius) to a 3x3 matrix, det +1 enforced."""
    U, _, Vt = np.linalg.svd(np.asarray(A, dtype=np.float64))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U = U.copy()
        U[:, -1] = -U[:, -1]
        R = U @ Vt
    return R


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
