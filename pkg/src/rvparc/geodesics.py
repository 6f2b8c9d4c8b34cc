"""Exact polyhedral geodesic distance fields at mesh vertices.

The exact solver is a continuous-Dijkstra window propagation: each edge
carries intervals ("windows") that record the unfolded position of a
(pseudo)source illuminating that interval, a priority queue processes
windows and vertices in increasing distance order, and overlapping
windows on an edge are trimmed against each other so only the pointwise
minimum survives. Every settled vertex re-radiates as a pseudosource,
which covers saddle bending as well as edge-hugging paths and keeps the
vertex values exact for the polyhedral metric. Edge-restricted Dijkstra
is kept separately as an upper-bound oracle.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _graph_dijkstra

from .mesh import LandmarkSet, MeshError, TriSurface

__all__ = [
    "DistanceField",
    "exact_geodesic",
    "dijkstra_oracle",
    "distance_to_set",
    "landmark_distance_fields",
]


@dataclass
class DistanceField:
    """Per-vertex distance (mm) to a source vertex set."""

    surface: TriSurface
    values: np.ndarray
    source_tag: str | None = None
    sources: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.surface.n_vertices,):
            raise MeshError("distance field does not match vertex count")


def _check_sources(surface, sources):
    src = np.unique(np.asarray(list(sources), dtype=np.int64))
    if src.size == 0:
        raise MeshError("source set is empty")
    if src.min() < 0 or src.max() >= surface.n_vertices:
        raise MeshError("source vertex index out of range")
    return src


def dijkstra_oracle(surface, sources, tag=None):
    """Shortest paths restricted to mesh edges (upper bound on exact)."""
    src = _check_sources(surface, sources)
    edges = surface.unique_edges()
    w = np.linalg.norm(
        surface.vertices[edges[:, 0]] - surface.vertices[edges[:, 1]], axis=1
    )
    n = surface.n_vertices
    g = csr_matrix(
        (
            np.r_[w, w],
            (np.r_[edges[:, 0], edges[:, 1]], np.r_[edges[:, 1], edges[:, 0]]),
        ),
        shape=(n, n),
    )
    d = _graph_dijkstra(g, directed=False, indices=src, min_only=True)
    return DistanceField(surface, d, tag, src)


class _Window:
    """Interval [b0, b1] on an edge, lit by a source unfolded to (sx, sy).

    Coordinates live in the frame of the edge's canonical halfedge with
    sy stored non-negative; ``side`` says which adjacent face the window
    propagates into (0: the canonical halfedge's own face, 1: its twin's).
    ``sigma`` is the distance already accumulated at the pseudosource.
    """

    __slots__ = ("b0", "b1", "sx", "sy", "sigma", "side", "done")

    def __init__(self, b0, b1, sx, sy, sigma, side):
        self.b0 = b0
        self.b1 = b1
        self.sx = sx
        self.sy = sy
        self.sigma = sigma
        self.side = side
        self.done = False

    def dist(self, b):
        return self.sigma + math.hypot(b - self.sx, self.sy)

    def min_dist(self):
        if self.sx < self.b0:
            return self.dist(self.b0)
        if self.sx > self.b1:
            return self.dist(self.b1)
        return self.sigma + self.sy

    def key_tuple(self):
        return (self.b0, self.b1, self.sx, self.sy, self.sigma)


class _Propagator:
    # windows closer than this are considered tied and merged
    # deterministically (lexicographically smaller wins)
    TIE = 1e-12

    def __init__(self, surface: TriSurface, sources):
        self.s = surface
        self.pos = surface.vertices
        self.org = surface.halfedge_org
        self.dst = surface.halfedge_dst
        self.twin = surface.halfedge_twin
        self.hlen = surface.edge_lengths_halfedge
        self.faces = surface.faces

        scale = float(np.ptp(self.pos, axis=0).max())
        if scale <= 0:
            raise MeshError("degenerate mesh extent")
        self.len_eps = 1e-10 * scale
        self.end_tol = 1e-9 * scale
        self.val_eps = 1e-12 * scale

        nh = 3 * surface.n_faces
        # apex of the owning face in each halfedge's frame (+x org->dst)
        self.apex_x = np.empty(nh)
        self.apex_y = np.empty(nh)
        corners = surface.face_corners
        for k in range(3):
            a = corners[:, k]
            b = corners[:, (k + 1) % 3]
            c = corners[:, (k + 2) % 3]
            e = b - a
            L = np.linalg.norm(e, axis=1)
            ex = e / L[:, None]
            cx = np.einsum("ij,ij->i", c - a, ex)
            perp = (c - a) - cx[:, None] * ex
            idx = np.arange(k, nh, 3)
            self.apex_x[idx] = cx
            self.apex_y[idx] = np.linalg.norm(perp, axis=1)

        self.windows: dict[int, dict[int, _Window]] = {}
        self.dist = np.full(surface.n_vertices, np.inf)
        self.settled = np.zeros(surface.n_vertices, dtype=bool)
        self.heap = []
        self.counter = 0
        self.next_id = 0

        for v in sources:
            self.dist[v] = 0.0
            self._push_vertex(v, 0.0)

    # -- queue plumbing -------------------------------------------------

    def _push_vertex(self, v, key):
        self.counter += 1
        heapq.heappush(self.heap, (key, self.counter, -1, int(v)))

    def _push_window(self, edge, wid, key):
        self.counter += 1
        heapq.heappush(self.heap, (key, self.counter, edge, wid))

    def _relax(self, v, cand):
        if cand < self.dist[v] - self.val_eps:
            self.dist[v] = cand
            if not self.settled[v]:
                self._push_vertex(v, cand)

    # -- main loop ------------------------------------------------------

    def run(self):
        while self.heap:
            key, _, edge, payload = heapq.heappop(self.heap)
            if edge < 0:
                v = payload
                if self.settled[v] or key > self.dist[v] + self.val_eps:
                    continue
                self.settled[v] = True
                self._spawn_from_vertex(v)
            else:
                w = self.windows.get(edge, {}).get(payload)
                if w is None or w.done:
                    continue
                w.done = True
                self._propagate(edge, w)
        return self.dist

    def _spawn_from_vertex(self, v):
        dv = self.dist[v]
        for f in self.s.vertex_faces()[v]:
            tri = self.faces[f]
            kv = int(np.where(tri == v)[0][0])
            h_opp = 3 * int(f) + (kv + 1) % 3
            q, r = self.org[h_opp], self.dst[h_opp]
            self._relax(q, dv + np.linalg.norm(self.pos[v] - self.pos[q]))
            self._relax(r, dv + np.linalg.norm(self.pos[v] - self.pos[r]))
            t = self.twin[h_opp]
            if t < 0:
                continue
            # v below the opposite edge in the twin frame, full span lit
            L = self.hlen[t]
            a = np.linalg.norm(self.pos[v] - self.pos[self.org[t]])
            b = np.linalg.norm(self.pos[v] - self.pos[self.dst[t]])
            px = (L * L + a * a - b * b) / (2.0 * L)
            py = -math.sqrt(max(a * a - px * px, 0.0))
            self._submit(t, 0.0, L, px, py, dv)

    def _propagate(self, edge, w):
        h = edge if w.side == 0 else self.twin[edge]
        if h < 0:
            return
        L = self.hlen[edge]
        if w.side == 0:
            b0, b1, sx = w.b0, w.b1, w.sx
        else:
            b0, b1, sx = L - w.b1, L - w.b0, L - w.sx
        sy = -w.sy
        if sy > -self.len_eps:
            # tangential source: paths continue along the edge line and
            # are carried exactly by the vertex relaxations instead
            return

        f = h // 3
        cx, cy = self.apex_x[h], self.apex_y[h]
        A = (0.0, 0.0)
        B = (L, 0.0)
        C = (cx, cy)
        nxt = 3 * f + (h % 3 + 1) % 3
        nnx = 3 * f + (h % 3 + 2) % 3
        for h_exit, P0, P1, opp in ((nxt, B, C, A), (nnx, C, A, B)):
            self._cast(h_exit, P0, P1, opp, b0, b1, sx, sy, w.sigma)

    def _cast(self, h_exit, P0, P1, opp, b0, b1, sx, sy, sigma):
        """Project the lit interval through the face onto one exit edge."""
        dx = P1[0] - P0[0]
        dy = P1[1] - P0[1]
        # u-range on the exit segment whose back-cast ray crosses the
        # entry edge inside [b0, b1]; each bound is linear in u because
        # the denominator (height of the exit point above the source
        # line) is positive throughout
        u_lo, u_hi = 0.0, 1.0
        for bb, sense in ((b0, 1.0), (b1, -1.0)):
            alpha = sense * ((P0[0] - sx) * (-sy) - (bb - sx) * (P0[1] - sy))
            beta = sense * (dx * (-sy) - (bb - sx) * dy)
            # keep the region alpha + beta*u >= 0
            if abs(beta) < 1e-300:
                if alpha < 0.0:
                    return
            elif beta > 0.0:
                u_lo = max(u_lo, -alpha / beta)
            else:
                u_hi = min(u_hi, -alpha / beta)
        if u_hi <= u_lo:
            return

        Le = self.hlen[h_exit]
        if Le * (u_hi - u_lo) <= self.len_eps:
            return
        # endpoint candidates seen directly through this window
        if u_lo <= 1e-12:
            self._relax(self.org[h_exit], sigma + math.hypot(P0[0] - sx, P0[1] - sy))
        if u_hi >= 1.0 - 1e-12:
            self._relax(self.dst[h_exit], sigma + math.hypot(P1[0] - sx, P1[1] - sy))
        t = self.twin[h_exit]
        if t < 0:
            return

        # frame of the twin halfedge: origin P1, +x towards P0, +y away
        # from this face (the far vertex of this face must land at y < 0)
        ex = ((P0[0] - P1[0]) / Le, (P0[1] - P1[1]) / Le)
        pl = (-ex[1], ex[0])
        if (opp[0] - P1[0]) * pl[0] + (opp[1] - P1[1]) * pl[1] > 0.0:
            ey = (-pl[0], -pl[1])
        else:
            ey = pl
        ux = sx - P1[0]
        uy = sy - P1[1]
        nsx = ux * ex[0] + uy * ex[1]
        nsy = ux * ey[0] + uy * ey[1]
        if nsy > 0.0:
            if nsy > self.end_tol:
                return
            nsy = 0.0
        self._submit(t, Le * (1.0 - u_hi), Le * (1.0 - u_lo), nsx, nsy, sigma)

    # -- window bookkeeping ---------------------------------------------

    def _submit(self, h_prop, b0, b1, sx, sy, sigma):
        if b1 - b0 <= self.len_eps:
            return
        t = self.twin[h_prop]
        if 0 <= t < h_prop:
            edge, side = t, 1
            L = self.hlen[edge]
            b0, b1 = L - b1, L - b0
            sx = L - sx
        else:
            edge, side = h_prop, 0
            L = self.hlen[edge]
        w = _Window(b0, b1, sx, abs(sy), sigma, side)

        vo, vd = self.org[edge], self.dst[edge]
        if b0 <= self.end_tol:
            self._relax(vo, w.dist(0.0))
        if b1 >= L - self.end_tol:
            self._relax(vd, w.dist(L))

        if self._dominated_by_vertices(w, L, vo, vd):
            return

        live = self.windows.setdefault(edge, {})
        pieces = [(w.b0, w.b1)]
        for wid in list(live):
            u = live[wid]
            pieces, u_parts, changed = self._trim(w, u, pieces)
            if changed:
                del live[wid]
                for p0, p1 in u_parts:
                    if p1 - p0 <= self.len_eps:
                        continue
                    nu = _Window(p0, p1, u.sx, u.sy, u.sigma, u.side)
                    nu.done = u.done
                    self.next_id += 1
                    live[self.next_id] = nu
                    if not nu.done:
                        self._push_window(edge, self.next_id, nu.min_dist())
            if not pieces:
                break
        for p0, p1 in pieces:
            if p1 - p0 <= self.len_eps:
                continue
            nw = _Window(p0, p1, w.sx, w.sy, w.sigma, w.side)
            self.next_id += 1
            live[self.next_id] = nw
            self._push_window(edge, self.next_id, nw.min_dist())

    def _dominated_by_vertices(self, w, L, vo, vd):
        """True if walking in from an endpoint beats the window everywhere.

        Endpoint routes are themselves covered by the propagation of the
        settled endpoints, so such a window cannot contribute a strictly
        shorter path to any downstream point and may be dropped.
        """
        do, dd = self.dist[vo], self.dist[vd]
        if not (np.isfinite(do) or np.isfinite(dd)):
            return False
        margin = self.val_eps
        m = 0.5 * (dd - do + L)  # breakpoint between the endpoint routes
        if w.b0 <= m:
            pt = min(w.b1, m)
            if w.dist(pt) < do + pt + margin:
                return False
        if w.b1 >= m:
            pt = max(w.b0, m)
            if w.dist(pt) < dd + (L - pt) + margin:
                return False
        return True

    def _trim(self, w, u, pieces):
        """Resolve overlaps between candidate pieces of w and window u.

        Returns (surviving pieces of w, intervals of u to keep, whether
        u changed). Ties go to the lexicographically smaller window so
        the outcome does not depend on insertion order.
        """
        u_keep = [(u.b0, u.b1)]
        out = []
        changed = False
        w_wins_tie = w.key_tuple() < u.key_tuple()
        for p0, p1 in pieces:
            lo = max(p0, u.b0)
            hi = min(p1, u.b1)
            if hi - lo <= self.len_eps:
                out.append((p0, p1))
                continue
            if p0 < lo:
                out.append((p0, lo))
            left = lo
            segs = []
            for c in self._crossings(w, u, lo, hi):
                segs.append((left, c))
                left = c
            segs.append((left, hi))
            for s0, s1 in segs:
                if s1 - s0 <= self.len_eps:
                    continue
                mid = 0.5 * (s0 + s1)
                dw = w.dist(mid)
                du = u.dist(mid)
                if dw < du - self.TIE or (abs(dw - du) <= self.TIE and w_wins_tie):
                    out.append((s0, s1))
                    u_keep = _interval_subtract(u_keep, s0, s1, self.len_eps)
                    changed = True
            if p1 > hi:
                out.append((hi, p1))
        if not changed:
            u_keep = [(u.b0, u.b1)]
        return out, u_keep, changed

    def _crossings(self, wa, wb, lo, hi):
        """Parameters in (lo, hi) where the two window distances cross."""
        x1, y1, s1 = wa.sx, wa.sy, wa.sigma
        x2, y2, s2 = wb.sx, wb.sy, wb.sigma
        ds = s2 - s1
        p = 2.0 * (x2 - x1)
        q = x1 * x1 + y1 * y1 - x2 * x2 - y2 * y2
        if abs(ds) <= self.TIE:
            roots = [] if abs(p) < 1e-300 else [q / p]
        else:
            # double squaring of sigma1 + |b - s1| = sigma2 + |b - s2|;
            # spurious roots are filtered by re-checking the distances
            a2 = p * p - 4.0 * ds * ds
            a1 = 2.0 * p * (q - ds * ds) + 8.0 * ds * ds * x2
            a0 = (q - ds * ds) ** 2 - 4.0 * ds * ds * (x2 * x2 + y2 * y2)
            roots = _quad_roots(a2, a1, a0)
        good = []
        for r in roots:
            if lo + self.len_eps < r < hi - self.len_eps:
                if abs(wa.dist(r) - wb.dist(r)) <= 1e-7 * max(1.0, abs(wa.dist(r))):
                    good.append(r)
        good.sort()
        merged = []
        for r in good:
            if not merged or r - merged[-1] > self.len_eps:
                merged.append(r)
        return merged


def _quad_roots(a, b, c):
    if abs(a) < 1e-300:
        if abs(b) < 1e-300:
            return []
        return [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    sq = math.sqrt(disc)
    q = -0.5 * (b + sq) if b >= 0.0 else -0.5 * (b - sq)
    roots = [q / a]
    if abs(q) > 1e-300:
        roots.append(c / q)
    return roots


def _interval_subtract(keep, s0, s1, eps):
    out = []
    for a, b in keep:
        if s1 <= a + eps or s0 >= b - eps:
            out.append((a, b))
            continue
        if s0 > a + eps:
            out.append((a, s0))
        if s1 < b - eps:
            out.append((s1, b))
    return out


def exact_geodesic(surface, sources, tag=None):
    """Exact polyhedral geodesic distance from a vertex set, per vertex."""
    src = _check_sources(surface, sources)
    d = _Propagator(surface, src).run()
    return DistanceField(surface, d, tag, src)


def distance_to_set(surface, sources, tag=None, method="exact"):
    """Distance to the nearest vertex of a set (min over the set)."""
    if method == "exact":
        return exact_geodesic(surface, sources, tag)
    if method == "dijkstra":
        return dijkstra_oracle(surface, sources, tag)
    raise ValueError(f"unknown method '{method}'")


def landmark_distance_fields(surface, landmarks: LandmarkSet, method="exact"):
    """The three per-landmark distance fields keyed by landmark name."""
    landmarks.check_valid_for(surface)
    return {
        name: distance_to_set(surface, landmarks[name], name, method)
        for name in LandmarkSet.REGIONS
    }
