"""Triangle surface meshes, landmark sets and basic geometric queries.

All coordinates are in millimetres; volumes are reported in millilitres
(1 ml = 1000 mm^3).
"""

from __future__ import annotations

import numpy as np

MM3_PER_ML = 1000.0

# Triangles thinner than this (mm^2) are rejected as degenerate.
MIN_FACE_AREA = 1e-12


class MeshError(ValueError):
    """Raised when a mesh violates a structural requirement."""


class TriSurface:
    """Closed, consistently oriented triangle mesh.

    Parameters
    ----------
    vertices : (n, 3) array_like
        Vertex positions in mm.
    faces : (m, 3) array_like
        Vertex index triples. All faces must wind the same way; for a
        closed surface the normals must point outward (positive signed
        volume). If the volume is negative the whole face list is
        flipped once, so a globally inside-out mesh is repaired while a
        locally inconsistent one is rejected.
    allow_boundary : bool
        Accept open surfaces (edges with a single incident face). The
        default requires a watertight mesh; open meshes are only used
        internally (e.g. tube test domains for the surface solvers) and
        skip the volume/orientation repair.
    metadata : dict, optional
        Free-form provenance information (e.g. source file details).
    """

    def __init__(self, vertices, faces, allow_boundary=False, metadata=None):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        f = np.ascontiguousarray(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must be (m, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        if len(np.unique(f, axis=0)) != len(f):
            raise MeshError("duplicate faces")
        for k in range(3):
            if np.any(f[:, k] == f[:, (k + 1) % 3]):
                raise MeshError("degenerate face: repeated vertex index")

        self.vertices = v
        self.faces = f
        self.metadata = dict(metadata) if metadata else {}
        self._check_topology(allow_boundary)

        if np.any(self.face_areas < MIN_FACE_AREA):
            bad = int(np.argmin(self.face_areas))
            raise MeshError(f"degenerate face {bad}: area < {MIN_FACE_AREA} mm^2")

        if not self.has_boundary and signed_volume_mm3(v, f) < 0.0:
            # global inside-out export; flip every face once
            self.faces = np.ascontiguousarray(f[:, ::-1])
            self._invalidate_cache()
            self._check_topology(allow_boundary)

    # -- topology -----------------------------------------------------

    def _check_topology(self, allow_boundary):
        f = self.faces
        org = f.ravel()
        dst = f[:, [1, 2, 0]].ravel()
        key = org * len(self.vertices) + dst
        if len(np.unique(key)) != len(key):
            raise MeshError("inconsistent orientation: directed edge appears twice")
        ukey = np.minimum(org, dst) * len(self.vertices) + np.maximum(org, dst)
        uniq, counts = np.unique(ukey, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge: shared by more than 2 faces")
        n_boundary = int(np.sum(counts == 1))
        if n_boundary and not allow_boundary:
            raise MeshError(f"not watertight: {n_boundary} boundary edges")
        self.has_boundary = n_boundary > 0

        # twin halfedge table: halfedge 3*f+k runs faces[f,k] -> faces[f,k+1]
        twin = np.full(3 * len(f), -1, dtype=np.int64)
        lookup = {}
        for h in range(3 * len(f)):
            lookup[(org[h], dst[h])] = h
        for h in range(3 * len(f)):
            twin[h] = lookup.get((dst[h], org[h]), -1)
        self.halfedge_org = org
        self.halfedge_dst = dst
        self.halfedge_twin = twin
        self._cache = {}

    def _invalidate_cache(self):
        self._cache = {}

    # -- derived geometry ---------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def face_corners(self):
        """(m, 3, 3) corner coordinates."""
        if "corners" not in self._cache:
            self._cache["corners"] = self.vertices[self.faces]
        return self._cache["corners"]

    @property
    def face_cross(self):
        if "cross" not in self._cache:
            c = self.face_corners
            self._cache["cross"] = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return self._cache["cross"]

    @property
    def face_areas(self):
        if "areas" not in self._cache:
            self._cache["areas"] = 0.5 * np.linalg.norm(self.face_cross, axis=1)
        return self._cache["areas"]

    @property
    def face_normals(self):
        if "normals" not in self._cache:
            n = self.face_cross / (2.0 * self.face_areas)[:, None]
            self._cache["normals"] = n
        return self._cache["normals"]

    @property
    def face_centroids(self):
        if "centroids" not in self._cache:
            self._cache["centroids"] = self.face_corners.mean(axis=1)
        return self._cache["centroids"]

    @property
    def edge_lengths_halfedge(self):
        """(3m,) length of each halfedge."""
        if "hlen" not in self._cache:
            d = self.vertices[self.halfedge_dst] - self.vertices[self.halfedge_org]
            self._cache["hlen"] = np.linalg.norm(d, axis=1)
        return self._cache["hlen"]

    def unique_edges(self):
        """(e, 2) sorted vertex pairs, one row per undirected edge."""
        if "edges" not in self._cache:
            pairs = np.sort(
                np.stack([self.halfedge_org, self.halfedge_dst], axis=1), axis=1
            )
            self._cache["edges"] = np.unique(pairs, axis=0)
        return self._cache["edges"]

    def vertex_neighbors(self):
        """list of neighbor index arrays, one per vertex."""
        if "vnbr" not in self._cache:
            nbr = [[] for _ in range(self.n_vertices)]
            for a, b in self.unique_edges():
                nbr[a].append(b)
                nbr[b].append(a)
            self._cache["vnbr"] = [np.array(sorted(x), dtype=np.int64) for x in nbr]
        return self._cache["vnbr"]

    def vertex_faces(self):
        """list of incident face index arrays, one per vertex."""
        if "vfaces" not in self._cache:
            vf = [[] for _ in range(self.n_vertices)]
            for fi, tri in enumerate(self.faces):
                for v in tri:
                    vf[v].append(fi)
            self._cache["vfaces"] = [np.array(x, dtype=np.int64) for x in vf]
        return self._cache["vfaces"]

    # -- transforms ----------------------------------------------------

    def transformed(self, matrix=None, translation=None):
        """Apply ``x -> matrix @ x + translation`` to every vertex."""
        v = self.vertices
        if matrix is not None:
            v = v @ np.asarray(matrix, dtype=np.float64).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return TriSurface(
            v, self.faces, allow_boundary=self.has_boundary, metadata=self.metadata
        )

    def scaled(self, factor, about=None):
        """Uniformly scale about a point (default: vertex centroid)."""
        c = self.vertices.mean(axis=0) if about is None else np.asarray(about)
        return TriSurface(
            (self.vertices - c) * float(factor) + c,
            self.faces,
            allow_boundary=self.has_boundary,
            metadata=self.metadata,
        )

    def same_topology(self, other):
        return self.n_vertices == other.n_vertices and np.array_equal(
            self.faces, other.faces
        )

    def __repr__(self):
        return f"TriSurface({self.n_vertices} vertices, {self.n_faces} faces)"


def signed_volume_mm3(vertices, faces):
    """Divergence-theorem volume of a closed oriented surface, in mm^3."""
    c = np.asarray(vertices)[np.asarray(faces)]
    return float(np.einsum("ij,ij->", c[:, 0], np.cross(c[:, 1], c[:, 2]))) / 6.0


def signed_volume(surface):
    """Enclosed volume of a closed TriSurface in ml (positive if outward)."""
    if surface.has_boundary:
        raise MeshError("signed_volume requires a closed surface")
    return signed_volume_mm3(surface.vertices, surface.faces) / MM3_PER_ML


class LandmarkSet:
    """Apex, tricuspid-valve and pulmonary-valve vertex index sets.

    The three sets must be non-empty, pairwise disjoint and valid for the
    surface they annotate.
    """

    REGIONS = ("apex", "tricuspid", "pulmonary")

    def __init__(self, apex, tricuspid, pulmonary, surface=None):
        self.apex = np.unique(np.asarray(apex, dtype=np.int64))
        self.tricuspid = np.unique(np.asarray(tricuspid, dtype=np.int64))
        self.pulmonary = np.unique(np.asarray(pulmonary, dtype=np.int64))
        for name in self.REGIONS:
            idx = getattr(self, name)
            if idx.size == 0:
                raise MeshError(f"landmark set '{name}' is empty")
            if idx.min() < 0:
                raise MeshError(f"landmark set '{name}' has negative index")
        a, t, p = set(self.apex), set(self.tricuspid), set(self.pulmonary)
        if a & t or a & p or t & p:
            raise MeshError("landmark sets overlap")
        if surface is not None:
            self.check_valid_for(surface)

    def check_valid_for(self, surface):
        hi = max(self.apex.max(), self.tricuspid.max(), self.pulmonary.max())
        if hi >= surface.n_vertices:
            raise MeshError("landmark index out of range for surface")

    def __getitem__(self, name):
        if name not in self.REGIONS:
            raise KeyError(name)
        return getattr(self, name)

    def valve_vertices(self):
        return np.union1d(self.tricuspid, self.pulmonary)

    def valve_face_mask(self, surface):
        """Faces whose three corners all lie in a valve patch."""
        valves = np.zeros(surface.n_vertices, dtype=bool)
        valves[self.valve_vertices()] = True
        return valves[surface.faces].all(axis=1)

    def __repr__(self):
        return (
            f"LandmarkSet(apex={len(self.apex)}, tricuspid={len(self.tricuspid)}, "
            f"pulmonary={len(self.pulmonary)})"
        )


class CorrespondencePair:
    """End-diastole / end-systole surface pair with shared topology."""

    def __init__(self, ed, es):
        if not ed.same_topology(es):
            raise MeshError("topology mismatch between ED and ES surfaces")
        self.ed = ed
        self.es = es
        self.shared_topology = True
