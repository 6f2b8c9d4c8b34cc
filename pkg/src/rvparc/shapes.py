"""Parametric test and template geometries.

All generators return index data suitable for TriSurface; closed shapes
are wound outward.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriSurface


def octahedron(radius=1.0):
    v = radius * np.array(
        [
            [1, 0, 0],
            [-1, 0, 0],
            [0, 1, 0],
            [0, -1, 0],
            [0, 0, 1],
            [0, 0, -1],
        ],
        dtype=np.float64,
    )
    f = np.array(
        [
            [0, 2, 4],
            [2, 1, 4],
            [1, 3, 4],
            [3, 0, 4],
            [2, 0, 5],
            [1, 2, 5],
            [3, 1, 5],
            [0, 3, 5],
        ]
    )
    return TriSurface(v, f)


def cube(edge=1.0):
    e = float(edge)
    v = np.array(
        [
            [0, 0, 0],
            [e, 0, 0],
            [e, e, 0],
            [0, e, 0],
            [0, 0, e],
            [e, 0, e],
            [e, e, e],
            [0, e, e],
        ],
        dtype=np.float64,
    )
    f = np.array(
        [
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ]
    )
    return TriSurface(v, f)


def icosphere(radius=1.0, subdivisions=0):
    """Icosahedron subdivided ``subdivisions`` times, projected to a sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0],
            [1, t, 0],
            [-1, -t, 0],
            [1, -t, 0],
            [0, -1, t],
            [0, 1, t],
            [0, -1, -t],
            [0, 1, -t],
            [t, 0, -1],
            [t, 0, 1],
            [-t, 0, -1],
            [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    f = np.array(
        [
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ]
    )
    for _ in range(subdivisions):
        mid = {}
        verts = [row for row in v]

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in mid:
                verts.append(0.5 * (verts[a] + verts[b]))
                mid[key] = len(verts) - 1
            return mid[key]

        nf = []
        for a, b, c in f:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            nf.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        v = np.array(verts)
        f = np.array(nf)
    v = v * (radius / np.linalg.norm(v, axis=1))[:, None]
    return TriSurface(v, f)


def planar_grid(nx, ny, width, height):
    """Open rectangular grid in the z=0 plane, (nx+1)*(ny+1) vertices."""
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    v = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)

    def vid(i, j):
        return i * (ny + 1) + j

    f = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            f.append([a, b, c])
            f.append([a, c, d])
    return TriSurface(v, np.array(f), allow_boundary=True)


def open_cylinder(radius, height, n_around, n_axial):
    """Tube (no caps) with rings at z = 0..height; boundary rings kept open."""
    ang = 2.0 * np.pi * np.arange(n_around) / n_around
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    zs = np.linspace(0.0, height, n_axial + 1)
    v = np.concatenate(
        [np.column_stack([ring, np.full(n_around, z)]) for z in zs]
    )

    def vid(k, i):
        return k * n_around + i % n_around

    f = []
    for k in range(n_axial):
        for i in range(n_around):
            a, b = vid(k, i), vid(k, i + 1)
            c, d = vid(k + 1, i + 1), vid(k + 1, i)
            f.append([a, b, c])
            f.append([a, c, d])
    return TriSurface(v, np.array(f), allow_boundary=True)


def fibonacci_sphere(n, radius=1.0):
    """Quasi-uniform sphere triangulation without polar fans.

    Places ``n`` points on a Fibonacci lattice and takes their convex
    hull, so valences stay near 6 everywhere and triangle shapes are
    close to equilateral; any closed genus-0 triangulation has exactly
    2n - 4 faces.
    """
    if n < 4:
        raise ValueError("need at least 4 points")
    from scipy.spatial import ConvexHull

    i = np.arange(n)
    # golden-angle spiral, offset keeps points away from the exact poles
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    v = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)

    faces = ConvexHull(v).simplices
    # hull simplices are not consistently wound; flip to outward per face
    c = v[faces].mean(axis=1)
    nrm = np.cross(v[faces[:, 1]] - v[faces[:, 0]], v[faces[:, 2]] - v[faces[:, 0]])
    flip = np.einsum("ij,ij->i", nrm, c) < 0.0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return TriSurface(radius * v, faces)


def uv_sphere(n_lon, n_lat, radius=1.0):
    """Longitude/latitude sphere with poles; n_lat counts interior rings.

    Vertex count is n_lon*n_lat + 2 and face count 2*n_lon*(n_lat - 1)
    + 2*n_lon; vertex 0 is the south pole (-z), vertex count-1 the north.
    """
    if n_lon < 3 or n_lat < 2:
        raise ValueError("need n_lon >= 3 and n_lat >= 2")
    lat = np.pi * (np.arange(1, n_lat + 1)) / (n_lat + 1) - np.pi / 2.0
    lon = 2.0 * np.pi * np.arange(n_lon) / n_lon
    verts = [np.array([0.0, 0.0, -radius])]
    for la in lat:
        cz = radius * np.sin(la)
        r = radius * np.cos(la)
        for lo in lon:
            verts.append(np.array([r * np.cos(lo), r * np.sin(lo), cz]))
    verts.append(np.array([0.0, 0.0, radius]))
    v = np.array(verts)

    def vid(k, i):
        return 1 + k * n_lon + i % n_lon

    f = []
    south, north = 0, len(verts) - 1
    for i in range(n_lon):
        f.append([south, vid(0, i + 1), vid(0, i)])
    for k in range(n_lat - 1):
        for i in range(n_lon):
            a, b = vid(k, i), vid(k, i + 1)
            c, d = vid(k + 1, i + 1), vid(k + 1, i)
            f.append([a, b, c])
            f.append([a, c, d])
    for i in range(n_lon):
        f.append([north, vid(n_lat - 1, i), vid(n_lat - 1, i + 1)])
    return TriSurface(v, np.array(f))
