"""Local surface descriptors: edge lengths, dihedral angles, frame rotations.

A mesh is described up to rigid motion by its topology, the length of
every edge and the signed dihedral angle of every interior edge. The
canonical per-triangle 2D coordinates carry the lengths; the rotation
between adjacent frames factors as rot_z(theta') rot_x(psi) rot_z(theta)
where theta, theta' locate the shared edge inside each triangle, and
equals f_j^T f_i when the descriptors come from an embedded mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .mesh import MeshError, TriSurface
from .strain import triangle_coords

# local corner pairs of the three face edges, in halfedge order
_FACE_EDGE_CORNERS = np.array([[0, 1], [1, 2], [2, 0]])


@dataclass
class SurfaceDescriptors:
    """Rigid-motion-invariant description of a triangle mesh.

    Attributes
    ----------
    faces : ndarray, shape (n_faces, 3)
    n_vertices : int
    a : ndarray, shape (n_faces, 3, 2)
        Canonical in-triangle coordinates of the corners.
    edges : ndarray, shape (n_edges, 2)
        Sorted vertex pairs, lexicographic order.
    edge_lengths : ndarray, shape (n_edges,)
    face_edges : ndarray, shape (n_faces, 3)
        Row f lists the edge index of corner pairs (0,1), (1,2), (2,0).
    pair_faces : ndarray, shape (n_pairs, 2)
        Faces (i, j) with i < j adjacent across each interior edge.
    pair_edge : ndarray, shape (n_pairs,)
        Edge index shared by each face pair.
    pair_verts : ndarray, shape (n_pairs, 2)
        The shared edge as traversed by face i's winding; the common
        reference direction for psi and the frame rotations.
    psi : ndarray, shape (n_pairs,)
        Dihedral angle between the adjacent face normals, measured about
        the pair_verts direction: 0 when coplanar, positive where an
        outward-oriented surface is convex. Measuring about face i's own
        winding makes the value independent of the (i, j) ordering.
    closed : bool
        Whether every edge had two incident faces.
    """

    faces: np.ndarray
    n_vertices: int
    a: np.ndarray
    edges: np.ndarray
    edge_lengths: np.ndarray
    face_edges: np.ndarray
    pair_faces: np.ndarray
    pair_edge: np.ndarray
    pair_verts: np.ndarray
    psi: np.ndarray
    closed: bool
    metadata: dict = field(default_factory=dict)

    @property
    def n_faces(self):
        return len(self.faces)

    def replaced(self, **kw) -> "SurfaceDescriptors":
        return replace(self, **kw)

    def face_corner_lengths(self):
        """(n_faces, 3) edge lengths implied by ``a`` for corner pairs
        (0,1), (1,2), (2,0)."""
        d = self.a[:, _FACE_EDGE_CORNERS[:, 1]] - self.a[:, _FACE_EDGE_CORNERS[:, 0]]
        return np.linalg.norm(d, axis=2)

    def _edge_angles(self):
        """In-triangle angle of each pair's shared edge, both sides.

        Returns (alpha_i, alpha_j): the angle from the owning triangle's
        x-axis to the shared edge directed along pair_verts.
        """
        u = self.pair_verts[:, 0]
        v = self.pair_verts[:, 1]
        out = []
        for side in (0, 1):
            f = self.pair_faces[:, side]
            lu = (self.faces[f] == u[:, None]).argmax(axis=1)
            lv = (self.faces[f] == v[:, None]).argmax(axis=1)
            d = self.a[f, lv] - self.a[f, lu]
            out.append(np.arctan2(d[:, 1], d[:, 0]))
        return out[0], out[1]

    def rotations(self):
        """Frame-to-frame rotations rot_z(theta') rot_x(-psi) rot_z(theta).

        R_ij maps frame-i coordinates of a vector to frame-j coordinates
        and equals f_j^T f_i for descriptors measured on an embedding.
        theta = -alpha_i brings the shared edge onto the x-axis, the
        hinge folds about it (negated because psi is stored
        convex-positive), and theta' = alpha_j leaves frame j.

        Returns
        -------
        ndarray, shape (n_pairs, 3, 3)
        """
        alpha_i, alpha_j = self._edge_angles()
        r = _rot_z_batch(alpha_j) @ _rot_x_batch(-self.psi) @ _rot_z_batch(-alpha_i)
        return r

    def validate(self, tol=1e-9):
        """Check internal consistency; raises MeshError on violation."""
        if np.any(self.edge_lengths <= 0):
            raise MeshError("descriptor edge lengths must be positive")
        implied = self.face_corner_lengths()
        stored = self.edge_lengths[self.face_edges]
        scale = 1.0 + stored
        if np.any(np.abs(implied - stored) > tol * scale):
            raise MeshError(
                "per-triangle coordinates disagree with shared edge lengths"
            )
        r = self.rotations()
        rtr = np.einsum("nki,nkj->nij", r, r)
        if np.abs(rtr - np.eye(3)).max() > 1e-12 or np.any(
            np.abs(np.linalg.det(r) - 1.0) > 1e-12
        ):
            raise MeshError("pair rotations are not proper rotations")

    def wi_terms(self):
        """Flattened within-face edge terms for the fit energy.

        Returns (edge_face, edge_vi, edge_vj, da) where da is the
        canonical edge difference a_i' - a_j' padded to 3D.
        """
        nf = self.n_faces
        edge_face = np.repeat(np.arange(nf), 3)
        vi = self.faces[:, _FACE_EDGE_CORNERS[:, 0]].ravel()
        vj = self.faces[:, _FACE_EDGE_CORNERS[:, 1]].ravel()
        d2 = (
            self.a[:, _FACE_EDGE_CORNERS[:, 0]] - self.a[:, _FACE_EDGE_CORNERS[:, 1]]
        ).reshape(-1, 2)
        da = np.concatenate([d2, np.zeros((len(d2), 1))], axis=1)
        return edge_face, vi, vj, da


def _rot_x_batch(t):
    c, s = np.cos(t), np.sin(t)
    r = np.zeros((len(t), 3, 3))
    r[:, 0, 0] = 1.0
    r[:, 1, 1] = c
    r[:, 1, 2] = -s
    r[:, 2, 1] = s
    r[:, 2, 2] = c
    return r


def _rot_z_batch(t):
    c, s = np.cos(t), np.sin(t)
    r = np.zeros((len(t), 3, 3))
    r[:, 2, 2] = 1.0
    r[:, 0, 0] = c
    r[:, 0, 1] = -s
    r[:, 1, 0] = s
    r[:, 1, 1] = c
    return r


def extract_descriptors(s: TriSurface) -> SurfaceDescriptors:
    """Measure the local descriptors of an embedded mesh.

    Edge lengths come from the embedding, per-triangle coordinates from
    the law of cosines, and dihedral angles from adjacent-face normals.
    Both triangles incident to an edge see the same embedded length, so
    the extracted set is exactly consistent.

    Raises
    ------
    MeshError
        On degenerate triangles (the mesh constructor already rejects
        non-manifold edges).
    """
    tb = triangle_coords(s)
    edges = s.unique_edges()
    edge_lengths = np.linalg.norm(
        s.vertices[edges[:, 1]] - s.vertices[edges[:, 0]], axis=1
    )

    # edge index per (face, corner pair) via lexicographic search
    pairs = np.sort(
        np.stack(
            [
                s.faces[:, _FACE_EDGE_CORNERS[:, 0]],
                s.faces[:, _FACE_EDGE_CORNERS[:, 1]],
            ],
            axis=2,
        ).reshape(-1, 2),
        axis=1,
    )
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    flat_e = edges[order, 0].astype(np.int64) * s.n_vertices + edges[order, 1]
    flat_p = pairs[:, 0].astype(np.int64) * s.n_vertices + pairs[:, 1]
    face_edges = order[np.searchsorted(flat_e, flat_p)].reshape(-1, 3)

    # one interior pair per twin halfedge couple; keep the halfedge that
    # belongs to the lower-indexed face so psi's reference direction
    # follows face i's winding
    h = np.arange(3 * s.n_faces)
    twin = s.halfedge_twin
    keep = (twin >= 0) & (twin > h)
    hk = h[keep]
    tk = twin[keep]
    swap = hk // 3 > tk // 3
    hi = np.where(swap, tk, hk)
    pair_faces = np.stack([hi // 3, np.where(swap, hk, tk) // 3], axis=1)
    pair_verts = np.stack([s.halfedge_org[hi], s.halfedge_dst[hi]], axis=1)
    pe = np.sort(pair_verts, axis=1)
    flat_pe = pe[:, 0].astype(np.int64) * s.n_vertices + pe[:, 1]
    pair_edge = order[np.searchsorted(flat_e, flat_pe)]

    unit = s.vertices[pair_verts[:, 1]] - s.vertices[pair_verts[:, 0]]
    unit = unit / np.linalg.norm(unit, axis=1)[:, None]
    ni = s.face_normals[pair_faces[:, 0]]
    nj = s.face_normals[pair_faces[:, 1]]
    psi = np.arctan2(
        np.einsum("ei,ei->e", np.cross(ni, nj), unit), np.einsum("ei,ei->e", ni, nj)
    )

    return SurfaceDescriptors(
        faces=s.faces.copy(),
        n_vertices=s.n_vertices,
        a=tb.a,
        edges=edges,
        edge_lengths=edge_lengths,
        face_edges=face_edges,
        pair_faces=pair_faces,
        pair_edge=pair_edge,
        pair_verts=pair_verts,
        psi=psi,
        closed=bool(np.all(twin >= 0)),
    )
