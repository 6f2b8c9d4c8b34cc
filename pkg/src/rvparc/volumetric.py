"""Cavity tetrahedralization, harmonic interior extension and
landmark-nearest parcellation with exact sub-tet clipping.

Regions are decided by the pointwise argmin of the three extended
distance fields (inlet where the tricuspid field wins, outflow for
pulmonary, apical for apex), with ties broken inlet > outflow >
apical. Differences of linear-per-tet fields are linear, so each tet
is cut exactly by the difference planes instead of being voxelized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, csc_matrix
from scipy.sparse.linalg import splu

from .frames import cotan_laplace_solve
from .geodesics import landmark_distance_fields
from .mesh import (
    MM3_PER_ML,
    CorrespondencePair,
    LandmarkSet,
    MeshError,
    TriSurface,
    signed_volume_mm3,
)

REGION_OF_LANDMARK = {"tricuspid": "inlet", "pulmonary": "outflow", "apex": "apical"}
REGIONS = ("inlet", "outflow", "apical")

MIN_TET_VOLUME = 1e-12  # mm^3


@dataclass
class TetCavity:
    """Tetrahedralized interior of a closed surface.

    Vertices start with the surface vertices (same indices), followed by
    interior Steiner vertices; all tets are positively oriented.
    """

    surface: TriSurface
    vertices: np.ndarray
    tets: np.ndarray
    boundary_faces: np.ndarray  # (nf, 3) triangles matching the surface

    @property
    def n_boundary(self):
        return self.surface.n_vertices

    def tet_volumes_mm3(self):
        c = self.vertices[self.tets]
        return (
            np.einsum(
                "ij,ij->i",
                np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]),
                c[:, 3] - c[:, 0],
            )
            / 6.0
        )

    def total_volume_ml(self):
        return float(self.tet_volumes_mm3().sum()) / MM3_PER_ML


@dataclass
class VolumetricField:
    cavity: TetCavity
    values: np.ndarray
    tag: str | None = None


@dataclass
class Parcellation:
    """Labelled exact decomposition of the cavity into the three regions."""

    cavity: TetCavity
    volumes_ml: dict
    fragment_vertices: np.ndarray = field(repr=False, default=None)
    fragment_tets: np.ndarray = field(repr=False, default=None)
    fragment_labels: np.ndarray = field(repr=False, default=None)

    @property
    def total_ml(self):
        return float(sum(self.volumes_ml.values()))

    def fractions(self):
        tot = self.total_ml
        return {k: v / tot for k, v in self.volumes_ml.items()}


def _orient_positive(vertices, tets):
    c = vertices[tets]
    vol = (
        np.einsum(
            "ij,ij->i",
            np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]),
            c[:, 3] - c[:, 0],
        )
        / 6.0
    )
    flip = vol < 0
    tets[flip] = tets[flip][:, [0, 1, 3, 2]]
    return np.abs(vol)


def tetrahedralize(surface: TriSurface, target_edge=None) -> TetCavity:
    """Fill a star-shaped closed surface with layered radial tets.

    Columns of Steiner vertices are placed on the rays centroid->vertex
    at fractions j/k, giving homothetic shells split into prisms (their
    side quads are planar, so the 3-tet prism split is exact). The
    layer count k makes the radial spacing approximately ``target_edge``
    (default: the mean surface edge length). Surfaces that are not
    star-shaped about the vertex centroid produce inverted tets and are
    rejected.
    """
    if surface.has_boundary:
        raise MeshError("tetrahedralization requires a closed surface")
    nv, nf = surface.n_vertices, surface.n_faces
    if target_edge is None:
        target_edge = float(surface.edge_lengths_halfedge.mean())
    if target_edge <= 0:
        raise MeshError("target_edge must be positive")
    centroid = surface.vertices.mean(axis=0)
    radii = np.linalg.norm(surface.vertices - centroid, axis=1)
    k = max(1, int(round(radii.max() / target_edge)))

    if k == 1 and nv == 4 and nf == 4:
        tets = np.array([[0, 1, 2, 3]], dtype=np.int64)
        vol = _orient_positive(surface.vertices, tets)
        if vol[0] <= MIN_TET_VOLUME:
            raise MeshError("degenerate tetrahedron input")
        return TetCavity(surface, surface.vertices.copy(), tets, surface.faces.copy())

    # vertex layout: surface (layer k) first, then centroid, then layers 1..k-1
    verts = [surface.vertices]
    verts.append(centroid[None, :])
    cid = nv

    def layer_ids(j):
        if j == k:
            return np.arange(nv)
        return nv + 1 + (j - 1) * nv + np.arange(nv)

    for j in range(1, k):
        verts.append(centroid + (j / k) * (surface.vertices - centroid))
    vertices = np.concatenate(verts)

    tets = []
    f = surface.faces
    inner = layer_ids(1)
    for p, q, r in f:
        tets.append([cid, inner[p], inner[q], inner[r]])
    order = np.argsort(f, axis=1)
    fs = np.take_along_axis(f, order, axis=1)  # sorted columns p < q < r
    for j in range(1, k):
        lo, hi = layer_ids(j), layer_ids(j + 1)
        for p, q, r in fs:
            # index-sorted prism split keeps quad diagonals consistent
            # between prisms sharing a side quad
            tets.append([lo[p], lo[q], lo[r], hi[r]])
            tets.append([lo[p], lo[q], hi[r], hi[q]])
            tets.append([lo[p], hi[q], hi[r], hi[p]])
    tets = np.array(tets, dtype=np.int64)
    vol = _orient_positive(vertices, tets)
    if vol.min() <= MIN_TET_VOLUME:
        raise MeshError(
            "degenerate or inverted tet: surface is not star-shaped about "
            "its vertex centroid (or self-intersects)"
        )
    cav = TetCavity(surface, vertices, tets, surface.faces.copy())
    total = vol.sum()
    expect = signed_volume_mm3(surface.vertices, surface.faces)
    if abs(total - expect) > 1e-9 * max(abs(expect), 1.0):
        raise MeshError("tetrahedralization failed to conserve volume")
    return cav


def laplace_extend(cavity: TetCavity, boundary_values, tag=None) -> VolumetricField:
    """Harmonic (P1 finite element) extension of surface vertex values."""
    bvals = np.asarray(
        getattr(boundary_values, "values", boundary_values), dtype=np.float64
    )
    nb = cavity.n_boundary
    if bvals.shape != (nb,):
        raise MeshError("boundary field does not match surface vertex count")
    n = len(cavity.vertices)
    tag = tag or getattr(boundary_values, "source_tag", None)

    x = cavity.vertices[cavity.tets]
    e = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=1)
    vol6 = np.einsum("ij,ij->i", np.cross(e[:, 0], e[:, 1]), e[:, 2])
    # gradients of the barycentric hats: rows of the inverse edge matrix
    ginv = np.linalg.inv(e)  # (m, 3, 3): grad phi_i (i=1..3) = ginv[:, :, i-1]?
    g = np.empty((len(cavity.tets), 4, 3))
    g[:, 1:, :] = np.swapaxes(ginv, 1, 2)
    g[:, 0, :] = -g[:, 1:, :].sum(axis=1)
    w = np.abs(vol6) / 6.0
    K = np.einsum("t,tia,tja->tij", w, g, g)

    ii = np.repeat(cavity.tets, 4, axis=1).reshape(-1)
    jj = np.tile(cavity.tets, (1, 4)).reshape(-1)
    A = coo_matrix((K.reshape(-1), (ii, jj)), shape=(n, n)).tocsr()

    u = np.zeros(n)
    u[:nb] = bvals
    free = np.ones(n, dtype=bool)
    free[:nb] = False
    if free.any():
        Aff = csc_matrix(A[np.ix_(free, free)])
        rhs = -A[np.ix_(free, ~free)] @ u[~free]
        try:
            u[free] = splu(Aff).solve(rhs)
        except RuntimeError as exc:
            raise MeshError(f"singular interior system: {exc}") from None
        res = np.linalg.norm(Aff @ u[free] - rhs)
        scale = max(np.linalg.norm(rhs), np.abs(u).max(), 1e-30)
        if res / scale > 1e-10:
            raise MeshError(f"interior solve residual too large: {res / scale:.2e}")
    return VolumetricField(cavity, u, tag)


# -- exact clipping ----------------------------------------------------


def _cut_point(P, V, i, j, s):
    t = s[i] / (s[i] - s[j])
    return P[i] + t * (P[j] - P[i]), V[i] + t * (V[j] - V[i])


def _wedge(tri0, tri1):
    """3-tet split of a wedge given bottom and top vertex triples."""
    (a0, b0, c0), (a1, b1, c1) = tri0, tri1
    return [(a0, b0, c0, c1), (a0, b0, c1, b1), (a0, b1, c1, a1)]


def _clip_tet(P, V, comp):
    """Split one tet by the zero set of a linear combination of fields.

    P is (4, 3) coordinates, V (4, 3) the three field values per corner,
    and comp(V) the per-corner signed quantity whose sign partitions the
    tet. Returns a list of (P, V) fragments exactly tiling the input.
    """
    s = comp(V)
    neg = s < 0.0
    nn = int(neg.sum())
    if nn == 0 or nn == 4:
        return [(P, V)]
    out = []
    if nn == 1 or nn == 3:
        d = int(np.argmax(neg)) if nn == 1 else int(np.argmax(~neg))
        rest = [i for i in range(4) if i != d]
        cuts = [_cut_point(P, V, d, i, s) for i in rest]
        cp = np.array([c[0] for c in cuts])
        cv = np.array([c[1] for c in cuts])
        out.append((np.vstack([P[d], cp]), np.vstack([V[d], cv])))
        allp = np.vstack([P[rest], cp])
        allv = np.vstack([V[rest], cv])
        for t in _wedge((0, 1, 2), (3, 4, 5)):
            out.append((allp[list(t)], allv[list(t)]))
    else:
        pos = [i for i in range(4) if not neg[i]]
        ngt = [i for i in range(4) if neg[i]]
        (a, b), (c, d) = pos, ngt
        pac, vac = _cut_point(P, V, a, c, s)
        pad, vad = _cut_point(P, V, a, d, s)
        pbc, vbc = _cut_point(P, V, b, c, s)
        pbd, vbd = _cut_point(P, V, b, d, s)
        allp = np.vstack([P[a], P[b], P[c], P[d], pac, pad, pbc, pbd])
        allv = np.vstack([V[a], V[b], V[c], V[d], vac, vad, vbc, vbd])
        for t in _wedge((0, 4, 5), (1, 6, 7)):  # side of a, b
            out.append((allp[list(t)], allv[list(t)]))
        for t in _wedge((2, 4, 6), (3, 5, 7)):  # side of c, d
            out.append((allp[list(t)], allv[list(t)]))
    return out


def _tet_volume(P):
    return abs(
        float(np.dot(np.cross(P[1] - P[0], P[2] - P[0]), P[3] - P[0]))
    ) / 6.0


def _label(values):
    """Region of a point given (u_tricuspid, u_pulmonary, u_apex)."""
    ut, up, ua = values
    if ut <= up and ut <= ua:
        return 0  # inlet
    if up <= ua:
        return 1  # outflow
    return 2  # apical


def parcellate(u_t, u_p, u_a, keep_fragments=False) -> Parcellation:
    """Cut every tet by the field-difference planes and label the pieces.

    The three fields must share one TetCavity; order is (tricuspid,
    pulmonary, apex). Fragment geometry is returned only on request
    (export); volumes are always exact.
    """
    cav = u_t.cavity
    if u_p.cavity is not cav or u_a.cavity is not cav:
        raise MeshError("fields were extended on different cavities")
    V = np.stack([u_t.values, u_p.values, u_a.values], axis=1)
    P = cav.vertices

    vols = np.zeros(3)
    frag_p, frag_l = [], []
    comps = (
        lambda v: v[:, 0] - v[:, 1],  # tricuspid vs pulmonary
        lambda v: v[:, 0] - v[:, 2],  # tricuspid vs apex
        lambda v: v[:, 1] - v[:, 2],  # pulmonary vs apex
    )
    for tet in cav.tets:
        tv = V[tet]
        s1 = tv[:, 0] - tv[:, 1]
        s2 = tv[:, 0] - tv[:, 2]
        s3 = tv[:, 1] - tv[:, 2]
        if (
            (np.all(s1 > 0) or np.all(s1 < 0))
            and (np.all(s2 > 0) or np.all(s2 < 0))
            and (np.all(s3 > 0) or np.all(s3 < 0))
        ):
            lbl = _label(tv.mean(axis=0))
            vols[lbl] += _tet_volume(P[tet])
            if keep_fragments:
                frag_p.append(P[tet])
                frag_l.append(lbl)
            continue
        pieces = [(P[tet], tv)]
        for comp in comps:
            nxt = []
            for pp, vv in pieces:
                nxt.extend(_clip_tet(pp, vv, comp))
            pieces = nxt
        for pp, vv in pieces:
            vol = _tet_volume(pp)
            if vol <= 0.0:
                continue
            lbl = _label(vv.mean(axis=0))
            vols[lbl] += vol
            if keep_fragments:
                frag_p.append(pp)
                frag_l.append(lbl)

    volumes = {name: vols[i] / MM3_PER_ML for i, name in enumerate(REGIONS)}
    parc = Parcellation(cav, volumes)
    if keep_fragments:
        fp = np.array(frag_p)
        nfk = len(fp)
        parc.fragment_vertices = fp.reshape(-1, 3)
        parc.fragment_tets = np.arange(4 * nfk, dtype=np.int64).reshape(-1, 4)
        parc.fragment_labels = np.array(frag_l, dtype=np.int64)
    return parc


# -- pipeline ----------------------------------------------------------


def parcellate_surface(
    surface: TriSurface,
    landmarks: LandmarkSet,
    target_edge=None,
    boundary_fields=None,
    keep_fragments=False,
):
    """Full pipeline: geodesic fields, tet fill, extension, parcellation.

    ``boundary_fields`` (dict landmark->per-vertex values) may be given
    to reuse precomputed distances, e.g. when transporting an ED frame's
    fields onto other geometries of the same topology.
    """
    if boundary_fields is None:
        fields = landmark_distance_fields(surface, landmarks)
        boundary_fields = {k: f.values for k, f in fields.items()}
    cav = tetrahedralize(surface, target_edge)
    u_t = laplace_extend(cav, boundary_fields["tricuspid"], "tricuspid")
    u_p = laplace_extend(cav, boundary_fields["pulmonary"], "pulmonary")
    u_a = laplace_extend(cav, boundary_fields["apex"], "apex")
    return parcellate(u_t, u_p, u_a, keep_fragments=keep_fragments)


def transport_labels(
    pair: CorrespondencePair, ed_boundary_fields, target_edge=None
) -> Parcellation:
    """Parcellate the ES frame with ED boundary distances carried by index."""
    fields = {
        k: np.asarray(getattr(v, "values", v), dtype=np.float64)
        for k, v in ed_boundary_fields.items()
    }
    for k, v in fields.items():
        if v.shape != (pair.es.n_vertices,):
            raise MeshError(f"boundary field '{k}' does not match ES vertices")
    return parcellate_surface(
        pair.es, landmarks=None, target_edge=target_edge, boundary_fields=fields
    )


def regional_metrics(ed: Parcellation, es: Parcellation) -> dict:
    """EDV / ESV / ejection fraction per region and in total."""
    edv = dict(ed.volumes_ml)
    esv = dict(es.volumes_ml)
    edv["total"] = ed.total_ml
    esv["total"] = es.total_ml
    ef = {}
    for k in edv:
        if edv[k] <= 0.0:
            raise MeshError(f"EDV of '{k}' is zero; ejection fraction undefined")
        ef[k] = (edv[k] - esv[k]) / edv[k]
    return {"edv": edv, "esv": esv, "ef": ef}


def harmonic_parcellate(
    surface: TriSurface, landmarks: LandmarkSet, target_edge=None
) -> Parcellation:
    """Comparator pipeline: surface heat maps instead of geodesics.

    For each landmark M solve the surface Laplace problem with M held at
    1 and the other two landmarks at 0, then use 1 - u_M as the
    pseudo-distance (zero at M's own vertices, as a distance must be).
    """
    landmarks.check_valid_for(surface)
    pseudo = {}
    for name in LandmarkSet.REGIONS:
        dirichlet = {}
        for other in LandmarkSet.REGIONS:
            val = 1.0 if other == name else 0.0
            for v in landmarks[other]:
                dirichlet[int(v)] = val
        sol = cotan_laplace_solve(surface, dirichlet)
        pseudo[name] = 1.0 - sol.values
    return parcellate_surface(
        surface, landmarks, target_edge, boundary_fields=pseudo
    )


def midpoint(surface: TriSurface, boundary_fields):
    """Surface point where the three distance fields come closest to a
    three-way tie (minimizing the max pairwise difference under linear
    interpolation per face)."""
    dt = np.asarray(getattr(boundary_fields["tricuspid"], "values", boundary_fields["tricuspid"]))
    dp = np.asarray(getattr(boundary_fields["pulmonary"], "values", boundary_fields["pulmonary"]))
    da = np.asarray(getattr(boundary_fields["apex"], "values", boundary_fields["apex"]))

    best = (np.inf, None)
    grid = [
        (b1, b2, 1.0 - b1 - b2)
        for b1 in np.linspace(0, 1, 11)
        for b2 in np.linspace(0, 1, 11)
        if b1 + b2 <= 1.0 + 1e-12
    ]
    for fi, tri in enumerate(surface.faces):
        ft = dt[tri]
        fp = dp[tri]
        fa = da[tri]
        cands = list(grid)
        # analytic tie of the two independent differences, if inside
        M = np.array(
            [
                [ft[1] - fp[1] - (ft[0] - fp[0]), ft[2] - fp[2] - (ft[0] - fp[0])],
                [ft[1] - fa[1] - (ft[0] - fa[0]), ft[2] - fa[2] - (ft[0] - fa[0])],
            ]
        )
        rhs = -np.array([ft[0] - fp[0], ft[0] - fa[0]])
        det = np.linalg.det(M)
        if abs(det) > 1e-14:
            b1, b2 = np.linalg.solve(M, rhs)
            if b1 >= -1e-9 and b2 >= -1e-9 and b1 + b2 <= 1.0 + 1e-9:
                cands.append((b1, b2, 1.0 - b1 - b2))
        for b1, b2, b0 in cands:
            vt = ft[0] * b0 + ft[1] * b1 + ft[2] * b2
            vp = fp[0] * b0 + fp[1] * b1 + fp[2] * b2
            va = fa[0] * b0 + fa[1] * b1 + fa[2] * b2
            r = max(abs(vt - vp), abs(vt - va), abs(vp - va))
            if r < best[0]:
                pt = (
                    surface.vertices[tri[0]] * b0
                    + surface.vertices[tri[1]] * b1
                    + surface.vertices[tri[2]] * b2
                )
                best = (r, pt)
    return best[1], best[0]
