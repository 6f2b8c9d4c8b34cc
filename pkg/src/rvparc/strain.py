"""Per-triangle deformation gradients and anatomical strain components.

Every triangle gets a canonical 2D unfolding (first vertex at the
origin, first edge on the x-axis) and an embedding frame mapping those
coordinates back to 3D. Strain between two meshes in point
correspondence is measured per triangle from the deformation gradient
expressed in the (l, c) anatomical basis of the reference triangle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .frames import FrameField
from .mesh import MIN_FACE_AREA, MeshError, TriSurface


@dataclass
class TriangleBasis:
    """Canonical per-triangle 2D coordinates and embedding frames.

    Attributes
    ----------
    a : ndarray, shape (n_faces, 3, 2)
        Local coordinates of the three corners. ``a[:, 0] == (0, 0)``
        and ``a[:, 1] == (L01, 0)`` where L01 is the first edge length.
    f : ndarray, shape (n_faces, 3, 3)
        Rotation per face whose columns are the first-edge direction,
        its in-plane normal and the triangle normal (det +1). The map
        ``p = p0 + f @ (ax, ay, 0)`` reproduces the corner positions.
    """

    surface: TriSurface
    a: np.ndarray
    f: np.ndarray


@dataclass
class StrainField:
    """Per-triangle in-plane strain between corresponded meshes.

    ``eps`` is the small-displacement Cauchy strain (F symmetrised,
    identity subtracted so rest reads zero) in the reference (l, c)
    basis; ``valid`` is False on faces whose anatomical frame was
    degenerate and whose entries are NaN.
    """

    reference: TriSurface
    deformed: TriSurface
    F: np.ndarray  # (n_faces, 2, 2)
    eps: np.ndarray  # (n_faces, 2, 2)
    eps_ll: np.ndarray
    eps_cc: np.ndarray
    valid: np.ndarray
    metadata: dict = field(default_factory=dict)

    def principal_strains(self):
        """Eigenvalues of eps per face, ascending (diagnostic only)."""
        out = np.full((len(self.eps), 2), np.nan)
        out[self.valid] = np.linalg.eigvalsh(self.eps[self.valid])
        return out


def coords_from_lengths(l01, l02, l12):
    """2D triangle coordinates from the three edge lengths.

    Places corner 0 at the origin and corner 1 at (l01, 0); corner 2
    lands at positive y. The construction reproduces all three lengths
    exactly (law of cosines).

    Parameters
    ----------
    l01, l02, l12 : array_like
        Edge lengths opposite the usual corner ordering: 0-1, 0-2, 1-2.

    Returns
    -------
    ndarray, shape (..., 3, 2)

    Raises
    ------
    MeshError
        If any length triple is degenerate (violates the triangle
        inequality or spans a vanishing area).
    """
    l01 = np.asarray(l01, dtype=np.float64)
    l02 = np.asarray(l02, dtype=np.float64)
    l12 = np.asarray(l12, dtype=np.float64)
    if np.any(l01 <= 0) or np.any(l02 <= 0) or np.any(l12 <= 0):
        raise MeshError("non-positive edge length")
    x2 = (l01 * l01 + l02 * l02 - l12 * l12) / (2.0 * l01)
    ysq = l02 * l02 - x2 * x2
    area = 0.5 * l01 * np.sqrt(np.maximum(ysq, 0.0))
    if np.any(~np.isfinite(ysq)) or np.any(ysq <= 0) or np.any(area < MIN_FACE_AREA):
        raise MeshError("degenerate triangle: lengths admit no positive area")
    a = np.zeros(l01.shape + (3, 2))
    a[..., 1, 0] = l01
    a[..., 2, 0] = x2
    a[..., 2, 1] = np.sqrt(ysq)
    return a


def triangle_coords(surface: TriSurface) -> TriangleBasis:
    """Canonical 2D coordinates and frame for every face.

    Raises
    ------
    MeshError
        On degenerate faces.
    """
    p = surface.face_corners
    e01 = p[:, 1] - p[:, 0]
    l01 = np.linalg.norm(e01, axis=1)
    l02 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    l12 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
    a = coords_from_lengths(l01, l02, l12)

    n = surface.face_normals
    ex = e01 / l01[:, None]
    ey = np.cross(n, ex)
    f = np.stack([ex, ey, n], axis=2)
    return TriangleBasis(surface, a, f)


def _sqrt_spd_2x2(c):
    """Symmetric square root of symmetric positive definite 2x2 stacks."""
    det = c[:, 0, 0] * c[:, 1, 1] - c[:, 0, 1] * c[:, 1, 0]
    tr = c[:, 0, 0] + c[:, 1, 1]
    bad = (det <= 0) | (tr <= 0)
    if np.any(bad):
        raise MeshError("deformed triangle is degenerate (singular metric)")
    s = np.sqrt(det)
    t = np.sqrt(tr + 2.0 * s)
    out = c.copy()
    out[:, 0, 0] += s
    out[:, 1, 1] += s
    return out / t[:, None, None]


def deformation_gradient(
    ref: TriSurface, deformed: TriSurface, frames: FrameField
) -> StrainField:
    """Per-triangle deformation gradient and strain in the (l, c) basis.

    Two independent edges of each triangle are expressed in the
    reference frame's anatomical directions; the deformed edges are
    compared after removing the per-triangle rigid motion (the rotation
    factor of the polar decomposition, which aligns the triangle
    normals), so F carries only the in-plane stretch and the strain
    eps = (F^T + F)/2 - Id vanishes at rest and under any rigid motion
    of the deformed mesh.

    Parameters
    ----------
    ref, deformed : TriSurface
        Meshes with identical topology (point correspondence by index).
    frames : FrameField
        Anatomical frames computed on ``ref`` (Lagrangian convention).

    Returns
    -------
    StrainField
    """
    if not ref.same_topology(deformed):
        raise MeshError("topology mismatch between reference and deformed mesh")
    if frames.surface is not ref and not np.array_equal(
        frames.surface.faces, ref.faces
    ):
        raise MeshError("frames were not computed on the reference mesh")

    pr = ref.face_corners
    pd = deformed.face_corners
    er = np.stack([pr[:, 1] - pr[:, 0], pr[:, 2] - pr[:, 0]], axis=2)  # (nf,3,2)
    ed = np.stack([pd[:, 1] - pd[:, 0], pd[:, 2] - pd[:, 0]], axis=2)

    lc = np.stack([frames.l, frames.c], axis=1)  # (nf,2,3)
    e_ref = lc @ er  # columns are edges in (l,c) coordinates
    det = e_ref[:, 0, 0] * e_ref[:, 1, 1] - e_ref[:, 0, 1] * e_ref[:, 1, 0]
    valid = ~frames.degenerate & (np.abs(det) > 2.0 * MIN_FACE_AREA)
    if not np.all(valid):
        # avoid divisions on flagged faces; results there become NaN
        det = np.where(valid, det, 1.0)

    inv = np.empty_like(e_ref)
    inv[:, 0, 0] = e_ref[:, 1, 1]
    inv[:, 1, 1] = e_ref[:, 0, 0]
    inv[:, 0, 1] = -e_ref[:, 0, 1]
    inv[:, 1, 0] = -e_ref[:, 1, 0]
    inv /= det[:, None, None]

    # right Cauchy-Green tensor in reference (l,c) coordinates; the def
    # edges enter only through their Gram matrix, so any rigid motion of
    # the deformed mesh drops out exactly
    gram = np.einsum("fki,fkj->fij", ed, ed)
    cgreen = np.einsum("fki,fkl,flj->fij", inv, gram, inv)
    cgreen = 0.5 * (cgreen + np.transpose(cgreen, (0, 2, 1)))

    fgrad = np.full_like(cgreen, np.nan)
    fgrad[valid] = _sqrt_spd_2x2(cgreen[valid])
    eps = 0.5 * (fgrad + np.transpose(fgrad, (0, 2, 1)))
    eps[:, 0, 0] -= 1.0
    eps[:, 1, 1] -= 1.0

    return StrainField(
        reference=ref,
        deformed=deformed,
        F=fgrad,
        eps=eps,
        eps_ll=eps[:, 0, 0].copy(),
        eps_cc=eps[:, 1, 1].copy(),
        valid=valid,
        metadata={"convention": "engineering: identity subtracted, zero at rest"},
    )
