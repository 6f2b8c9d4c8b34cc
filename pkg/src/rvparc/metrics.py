"""Mesh-comparison and population metrics.

Voxelized Dice on a grid shared by both meshes, per-vertex
node-to-node and node-to-surface distance maps, partial (rotation plus
translation, never scaling) Procrustes mean shapes, rigid
landmark-based pre-alignment, and the regional-attribution accuracy
index that scores a parcellation against known volume increments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .mesh import LandmarkSet, MeshError, TriSurface, signed_volume


@dataclass
class ComparisonReport:
    """Pairwise comparison of two closed surfaces in correspondence.

    Volumes are in ml, distances in mm. ``volume_diff_pct`` is relative
    to the first mesh. The per-vertex maps satisfy node-to-surface <=
    node-to-node everywhere, because the corresponding node is itself a
    point of the other surface.
    """

    volume_a_ml: float
    volume_b_ml: float
    volume_diff_ml: float
    volume_diff_pct: float
    dice: float
    mean_node_to_node_mm: float
    mean_node_to_surface_mm: float
    node_to_node_mm: np.ndarray = field(repr=False, default=None)
    node_to_surface_mm: np.ndarray = field(repr=False, default=None)

    def to_dict(self, include_maps=True):
        """Plain-python form of the report (JSON export)."""
        out = {
            "volume_a_ml": self.volume_a_ml,
            "volume_b_ml": self.volume_b_ml,
            "volume_diff_ml": self.volume_diff_ml,
            "volume_diff_pct": self.volume_diff_pct,
            "dice": self.dice,
            "mean_node_to_node_mm": self.mean_node_to_node_mm,
            "mean_node_to_surface_mm": self.mean_node_to_surface_mm,
        }
        if include_maps:
            out["node_to_node_mm"] = self.node_to_node_mm.tolist()
            out["node_to_surface_mm"] = self.node_to_surface_mm.tolist()
        return out


@dataclass
class AccuracyReport:
    """Measured versus prescribed per-region volume increments.

    ``accuracy`` is 1 exactly when the computed increments match the
    prescribed ones region by region, 0 when the whole increment lands
    in the wrong regions, and negative when the attribution is worse
    than that (regions shrinking that should grow, or vice versa).
    """

    computed_ml: dict
    theoretical_ml: dict
    accuracy: float
    case: str = ""

    def to_dict(self):
        return {
            "case": self.case,
            "computed_ml": dict(self.computed_ml),
            "theoretical_ml": dict(self.theoretical_ml),
            "accuracy": self.accuracy,
        }


def _voxel_centers(lo, hi, voxel):
    """Centers of a regular grid of cubic cells covering [lo, hi]."""
    n = np.maximum(np.ceil((hi - lo) / voxel).astype(np.int64), 1)
    axes = [lo[k] + voxel * (np.arange(n[k]) + 0.5) for k in range(3)]
    x, y, z = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([x.ravel(), y.ravel(), z.ravel()])


def _inside(surface, points):
    """Winding-number interior test, short-circuited by bounding box."""
    lo = surface.vertices.min(axis=0)
    hi = surface.vertices.max(axis=0)
    box = np.all((points >= lo) & (points <= hi), axis=1)
    out = np.zeros(len(points), dtype=bool)
    if box.any():
        w = kernels.winding_numbers(points[box], surface.vertices, surface.faces)
        out[box] = w > 0.5
    return out


def dice(a: TriSurface, b: TriSurface, voxel=1.0):
    """Voxelized Dice coefficient of two closed surfaces.

    Both interiors are sampled at the centers of one shared axis-aligned
    grid of cubic cells with edge ``voxel`` (mm) covering the union of
    the two bounding boxes; a center counts as inside where the
    generalized winding number exceeds one half. Sharing the grid makes
    the coefficient exactly symmetric in its arguments.

    Parameters
    ----------
    a, b : TriSurface
        Closed oriented surfaces. No correspondence is needed.
    voxel : float, optional
        Cell edge in mm. Finer grids converge toward the continuum
        Dice of the two interiors.

    Returns
    -------
    float
        2 |A & B| / (|A| + |B|) over the counted cells, in [0, 1].
    """
    if voxel <= 0.0:
        raise ValueError("voxel size must be positive")
    lo = np.minimum(a.vertices.min(axis=0), b.vertices.min(axis=0)) - voxel
    hi = np.maximum(a.vertices.max(axis=0), b.vertices.max(axis=0)) + voxel
    pts = _voxel_centers(lo, hi, voxel)
    in_a = _inside(a, pts)
    in_b = _inside(b, pts)
    na = int(in_a.sum())
    nb = int(in_b.sum())
    if na == 0 or nb == 0:
        raise MeshError("a surface encloses no voxel centers; refine the grid")
    return 2.0 * float(np.count_nonzero(in_a & in_b)) / float(na + nb)


def node_distances(a: TriSurface, b: TriSurface):
    """Per-vertex distances from one mesh to another (mm).

    Node-to-node pairs vertices by index; node-to-surface measures each
    vertex of ``a`` against the closest triangle of ``b``, which can
    only be closer than the corresponding node.

    Parameters
    ----------
    a, b : TriSurface
        Meshes in point correspondence (equal vertex counts).

    Returns
    -------
    node_to_node, node_to_surface : ndarray, shape (n_vertices,)
        Per-vertex maps; means are the arrays' means.
    """
    if a.n_vertices != b.n_vertices:
        raise MeshError(
            "node-to-node distances need equal vertex counts "
            f"({a.n_vertices} vs {b.n_vertices})"
        )
    n2n = np.linalg.norm(a.vertices - b.vertices, axis=1)
    n2s = kernels.point_surface_distance(a.vertices, b.vertices, b.faces)
    return n2n, n2s


def rigid_align(source, target):
    """Least-squares rotation and translation mapping points onto points.

    Solves the orthogonal Procrustes problem over exact correspondences
    with no scaling; the rotation is proper (det +1) even when the best
    orthogonal map would reflect.

    Parameters
    ----------
    source, target : ndarray, shape (n, 3)
        Corresponding point sets.

    Returns
    -------
    R : ndarray, shape (3, 3)
    t : ndarray, shape (3,)
        ``source @ R.T + t`` is the aligned copy of ``source``.
    """
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    sc = source.mean(axis=0)
    tc = target.mean(axis=0)
    h = (source - sc).T @ (target - tc)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, tc - r @ sc


def landmark_points(surface: TriSurface, landmarks: LandmarkSet):
    """Apex centroid and the two valve-orifice centroids, stacked (3, 3)."""
    return np.array(
        [
            surface.vertices[landmarks.apex].mean(axis=0),
            surface.vertices[landmarks.tricuspid].mean(axis=0),
            surface.vertices[landmarks.pulmonary].mean(axis=0),
        ]
    )


def landmark_align(
    source: TriSurface,
    target: TriSurface,
    landmarks_source: LandmarkSet,
    landmarks_target=None,
):
    """Rigidly align a mesh onto another through anatomical landmarks.

    The rotation and translation are fit on three corresponding points,
    the apex and the two valve-orifice centroids, so the alignment does
    not presume any vertex correspondence. This is the standard
    pre-alignment before a test-retest comparison.

    Parameters
    ----------
    source, target : TriSurface
    landmarks_source : LandmarkSet
        Landmarks of ``source``.
    landmarks_target : LandmarkSet, optional
        Landmarks of ``target``; defaults to ``landmarks_source``,
        which is correct when both meshes share one template topology.

    Returns
    -------
    TriSurface
        Transformed copy of ``source``.
    """
    if landmarks_target is None:
        landmarks_target = landmarks_source
    ps = landmark_points(source, landmarks_source)
    pt = landmark_points(target, landmarks_target)
    r, t = rigid_align(ps, pt)
    return source.transformed(matrix=r, translation=t)


def procrustes_mean(population, tol=1e-8, max_iter=100):
    """Partial Procrustes mean shape of a mesh population.

    Every member is rigidly aligned (rotation plus translation, no
    scaling) to the evolving mean, which is then replaced by the
    average of the aligned vertex sets; iteration stops when the mean
    moves less than ``tol`` mm per vertex on average, or after
    ``max_iter`` rounds. The mean is centered at the origin.

    Parameters
    ----------
    population : sequence of TriSurface
        At least two meshes sharing one topology.
    tol : float, optional
        Mean vertex movement (mm) declaring convergence.
    max_iter : int, optional

    Returns
    -------
    TriSurface
        Mean shape on the shared topology; ``metadata`` records the
        iteration count and final mean movement.
    """
    population = list(population)
    if len(population) < 2:
        raise MeshError("a Procrustes mean needs at least two meshes")
    base = population[0]
    for other in population[1:]:
        if not base.same_topology(other):
            raise MeshError("population meshes do not share a topology")
    mean = base.vertices - base.vertices.mean(axis=0)
    move = np.inf
    for it in range(max_iter):
        aligned = np.empty((len(population), base.n_vertices, 3))
        for k, other in enumerate(population):
            r, t = rigid_align(other.vertices, mean)
            aligned[k] = other.vertices @ r.T + t
        new = aligned.mean(axis=0)
        move = float(np.linalg.norm(new - mean, axis=1).mean())
        mean = new
        if move < tol:
            break
    return TriSurface(
        mean,
        base.faces,
        metadata={"iterations": it + 1, "mean_movement": move},
    )


def accuracy_index(computed, theoretical):
    """Attribution accuracy of per-region volume increments.

    acc = 1 - sum_k |dV_computed_k - dV_theoretical_k| / (2 dV_total)

    with dV_total the sum of the prescribed increments. Exact
    attribution scores 1, attributing the full increment to wrong
    regions scores 0, and anything that additionally moves volume in
    the wrong direction goes negative.

    Parameters
    ----------
    computed, theoretical : dict
        Region name to volume increment (ml). Missing regions count
        as zero increment.

    Returns
    -------
    float
        acc in (-inf, 1].
    """
    total = float(sum(theoretical.values()))
    if total == 0.0:
        raise MeshError("prescribed total volume increment is zero")
    err = 0.0
    for k in set(computed) | set(theoretical):
        err += abs(float(computed.get(k, 0.0)) - float(theoretical.get(k, 0.0)))
    return 1.0 - err / (2.0 * total)


def compare_meshes(a: TriSurface, b: TriSurface, voxel=1.0, landmarks=None):
    """Full pairwise comparison of two corresponded closed surfaces.

    When ``landmarks`` is given as a pair (landmarks_a, landmarks_b),
    ``b`` is first rigidly aligned onto ``a`` through the apex and
    valve centroids; volumes are rigid-invariant, Dice and the distance
    maps are not.

    Parameters
    ----------
    a, b : TriSurface
        Meshes with equal vertex counts; ``a`` is the reference for
        the percentage volume difference.
    voxel : float, optional
        Dice grid cell edge (mm).
    landmarks : tuple of LandmarkSet, optional

    Returns
    -------
    ComparisonReport
    """
    if landmarks is not None:
        lm_a, lm_b = landmarks
        b = landmark_align(b, a, lm_b, lm_a)
    va = signed_volume(a)
    vb = signed_volume(b)
    n2n, n2s = node_distances(a, b)
    return ComparisonReport(
        volume_a_ml=va,
        volume_b_ml=vb,
        volume_diff_ml=vb - va,
        volume_diff_pct=100.0 * (vb - va) / va,
        dice=dice(a, b, voxel=voxel),
        mean_node_to_node_mm=float(n2n.mean()),
        mean_node_to_surface_mm=float(n2s.mean()),
        node_to_node_mm=n2n,
        node_to_surface_mm=n2s,
    )
