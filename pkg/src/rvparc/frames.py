"""Surface Laplace solver and anatomical direction fields.

The longitudinal direction on each face is the normalized surface
gradient of a scalar potential u obtained from a Laplace solve with a
cold apex (u = 0) and warm valves (u = 1); the circumferential
direction is its in-plane normal, c = l x n. A variant derives l from
the gradient of the apex geodesic distance field instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, csc_matrix
from scipy.sparse.linalg import splu

from .geodesics import exact_geodesic
from .mesh import LandmarkSet, MeshError, TriSurface

# cotangents beyond this are clamped (near-degenerate corners)
COT_CLAMP = 1e6

DEGENERATE_GRAD = 1e-12


@dataclass
class HeatSolution:
    """Per-vertex potential from a constrained Laplace solve."""

    surface: TriSurface
    values: np.ndarray
    constrained: np.ndarray  # bool mask of Dirichlet vertices
    residual: float


@dataclass
class FrameField:
    """Per-face anatomical directions (all unit, l and c tangent)."""

    surface: TriSurface
    l: np.ndarray
    c: np.ndarray
    n: np.ndarray
    degenerate: np.ndarray  # faces where the potential gradient vanished
    valve_faces: np.ndarray = None  # frames there carry no anatomical meaning
    potential: np.ndarray = None
    l_glob: np.ndarray = None
    metadata: dict = field(default_factory=dict)


def cotan_laplacian(surface: TriSurface):
    """Symmetric positive semi-definite cotangent Laplacian (n x n).

    Row sums are zero; the quadratic form u^T L u is the discrete
    Dirichlet energy. Extreme cotangents are clamped with a warning.
    """
    f = surface.faces
    n = surface.n_vertices
    corners = surface.face_corners
    rows, cols, vals = [], [], []
    n_clamped = 0
    for k in range(3):
        # cotangent at corner k weights the opposite edge (k+1, k+2)
        a = corners[:, (k + 1) % 3] - corners[:, k]
        b = corners[:, (k + 2) % 3] - corners[:, k]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        dot = np.einsum("ij,ij->i", a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = dot / cross
        bad = ~np.isfinite(cot) | (np.abs(cot) > COT_CLAMP)
        n_clamped += int(bad.sum())
        cot = np.clip(np.nan_to_num(cot, nan=COT_CLAMP), -COT_CLAMP, COT_CLAMP)
        i = f[:, (k + 1) % 3]
        j = f[:, (k + 2) % 3]
        w = 0.5 * cot
        rows.extend([i, j, i, j])
        cols.extend([j, i, i, j])
        vals.extend([-w, -w, w, w])
    if n_clamped:
        warnings.warn(f"clamped {n_clamped} extreme cotangent weights")
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    L = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    L.n_clamped = n_clamped
    return L


def cotan_laplace_solve(surface: TriSurface, dirichlet: dict) -> HeatSolution:
    """Solve L u = 0 with fixed values on the given vertices."""
    if not dirichlet:
        raise MeshError("no Dirichlet constraints given")
    n = surface.n_vertices
    fixed = np.zeros(n, dtype=bool)
    u = np.zeros(n)
    for v, val in dirichlet.items():
        v = int(v)
        if not 0 <= v < n:
            raise MeshError(f"constraint vertex {v} out of range")
        fixed[v] = True
        u[v] = float(val)

    L = cotan_laplacian(surface)
    free = ~fixed
    if free.any():
        Lff = csc_matrix(L[np.ix_(free, free)])
        rhs = -L[np.ix_(free, fixed)] @ u[fixed]
        try:
            u[free] = splu(Lff).solve(rhs)
        except RuntimeError as exc:
            raise MeshError(f"singular Laplace system: {exc}") from None
        res = np.linalg.norm(Lff @ u[free] - rhs)
        scale = max(np.linalg.norm(rhs), np.abs(u).max(), 1e-30)
        residual = float(res / scale)
    else:
        residual = 0.0
    return HeatSolution(surface, u, fixed, residual)


def face_gradient(surface: TriSurface, values):
    """Per-face gradient of a per-vertex scalar (constant on each face)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (surface.n_vertices,):
        raise MeshError("scalar field does not match vertex count")
    corners = surface.face_corners
    nrm = surface.face_normals
    areas = surface.face_areas
    uf = values[surface.faces]
    g = np.zeros((surface.n_faces, 3))
    for k in range(3):
        e = corners[:, (k + 2) % 3] - corners[:, (k + 1) % 3]
        g += uf[:, k, None] * np.cross(nrm, e)
    return g / (2.0 * areas[:, None])


def anatomical_frames(
    surface: TriSurface,
    landmarks: LandmarkSet,
    longitudinal="heat",
    apex_distance=None,
    max_degenerate_frac=0.01,
) -> FrameField:
    """Per-face (l, c, n) frames from landmark-driven potentials.

    ``longitudinal='heat'`` uses the Laplace potential (apex 0, valves
    1); ``'geodesic-gradient'`` uses the apex geodesic distance field
    (optionally precomputed and passed as ``apex_distance``). Faces
    whose potential gradient vanishes are flagged degenerate; valve
    interiors are expected to plateau and do not count against the
    ``max_degenerate_frac`` budget, all other faces do.
    """
    landmarks.check_valid_for(surface)
    if longitudinal == "heat":
        dirichlet = {int(v): 0.0 for v in landmarks.apex}
        for v in landmarks.valve_vertices():
            dirichlet[int(v)] = 1.0
        heat = cotan_laplace_solve(surface, dirichlet)
        potential = heat.values
    elif longitudinal == "geodesic-gradient":
        if apex_distance is None:
            apex_distance = exact_geodesic(surface, landmarks.apex, "apex").values
        potential = np.asarray(apex_distance, dtype=np.float64)
    else:
        raise ValueError(f"unknown longitudinal mode '{longitudinal}'")

    g = face_gradient(surface, potential)
    gn = np.linalg.norm(g, axis=1)
    degenerate = gn < DEGENERATE_GRAD
    # valve-interior faces sit on the u = 1 plateau and carry no meaningful
    # direction anyway; only unexpected degeneracy counts against the budget
    valve_faces = landmarks.valve_face_mask(surface)
    unexpected = degenerate & ~valve_faces
    frac = unexpected.mean() if len(unexpected) else 0.0
    if frac > max_degenerate_frac:
        raise MeshError(
            f"potential gradient vanished on {frac:.1%} of non-valve faces "
            f"(> {max_degenerate_frac:.0%})"
        )
    nrm = surface.face_normals
    l = np.where(degenerate[:, None], nrm, g / np.where(gn > 0, gn, 1.0)[:, None])
    # re-project: numerical gradients may have a tiny normal component
    l = l - np.einsum("ij,ij->i", l, nrm)[:, None] * nrm
    ln = np.linalg.norm(l, axis=1)
    degenerate = degenerate | (ln < DEGENERATE_GRAD)
    safe = np.where(degenerate, 1.0, ln)
    l = l / safe[:, None]
    c = np.cross(l, nrm)

    ff = FrameField(
        surface,
        l,
        c,
        nrm,
        degenerate,
        valve_faces=valve_faces,
        potential=potential,
        metadata={"longitudinal": longitudinal},
    )
    ff.l_glob = global_directions(ff)[0]
    return ff


def global_directions(ff: FrameField):
    """Area-weighted global longitudinal direction and the projector
    onto its orthogonal complement (used for global circumferential
    constructions)."""
    ok = ~ff.degenerate
    if ff.valve_faces is not None:
        ok = ok & ~ff.valve_faces
    if not ok.any():
        raise MeshError("no usable faces for the global direction")
    w = ff.surface.face_areas[ok]
    mean = (ff.l[ok] * w[:, None]).sum(axis=0)
    nrm = np.linalg.norm(mean)
    if nrm < 1e-12:
        raise MeshError("global longitudinal direction is ill-defined (zero mean)")
    l_glob = mean / nrm
    projector = np.eye(3) - np.outer(l_glob, l_glob)
    return l_glob, projector
