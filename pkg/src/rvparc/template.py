"""Bundled ventricle-like template surface with landmark patches.

A star-shaped closed surface standing in for a population-mean right
ventricle: an anisotropic ellipsoid with a radial bulge on the inflow
side, an apex landmark at the lower pole and two valve patches (a
larger tricuspid one and a smaller pulmonary one) on opposite flanks
near the upper pole. The pulmonary orifice is flattened into a plate;
the tricuspid patch keeps the smooth dome, which leaves the wall around
it free of collar folds. Both orifices are encircled by shallow concave
sulci standing in for the atrioventricular groove, and a similar
indentation rings the apical cap, which is heavily trabeculated in a
real ventricle. All radii are
direction-dependent positive functions, so the shape is star-shaped
about the origin by construction and the centroid-fan
tetrahedralization applies. The triangulation is a Fibonacci-lattice
sphere, giving near-uniform valence with no polar fans, similar to a
clinical mesh export.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import LandmarkSet, MM3_PER_ML, TriSurface, signed_volume
from .shapes import fibonacci_sphere


@dataclass
class TemplateParams:
    """Shape and landmark layout of the bundled template.

    Angles are radians; the polar tilt is measured from the +z axis
    (the base); the apex sits at -z. Defaults give a total volume of
    ``total_ml`` exactly (rescaled) with regional volumes near the
    outflow/inlet/apex split of a population-mean ventricle.
    """

    n_vertices: int = 938
    semi_axes: tuple = (31.0, 27.0, 45.0)
    bulge: float = 0.13
    bulge_direction: tuple = (0.94, 0.0, 0.34)
    bulge_width: float = 0.9
    tricuspid_tilt: float = 0.68
    tricuspid_azimuth: float = 0.0
    tricuspid_radius: float = 0.50
    pulmonary_tilt: float = 0.50
    pulmonary_azimuth: float = np.pi
    pulmonary_radius: float = 0.28
    # annular sulci around the valve orifices and the apical cap; a
    # concave meridian can straighten under load, so the surrounding
    # band absorbs circumferential stretch by unfolding instead of
    # fighting the wall
    groove_depth: float = 0.10
    groove_center: float = 0.71
    groove_width: float = 0.18
    pulmonary_groove_depth: float = 0.08
    pulmonary_groove_center: float = 0.49
    apex_groove_depth: float = 0.07
    apex_groove_center: float = 0.45
    apex_groove_width: float = 0.22
    # toward the tip the cross-section flattens into a pouch (free
    # wall against septum); a flat pouch bows outward under
    # circumferential stretch, gaining volume without straining the
    # meridians, the same unfolding that the sulci provide
    apex_flatten: float = 0.0
    apex_widen: float = 0.0
    apex_flatten_width: float = 0.55
    # azimuthal scallops on the cap flanks stand in for the apical
    # trabeculations; their folds store circumference that unfurls
    # under circumferential stretch
    apex_scallop: float = 0.0
    apex_scallop_m: int = 8
    apex_scallop_center: float = 0.4
    apex_scallop_width: float = 0.25
    # below the lattice spacing: the apex landmark is the single vertex
    # nearest -z, so the heat potential has no constant patch around it
    apex_radius: float = 0.06
    # angular width of the crease blending the flat pulmonary plate
    # into the wall; that annulus is a planar orifice, not a dome cap
    valve_crease: float = 0.10
    total_ml: float = 144.0


def _cap_vertices(directions, center, angular_radius):
    center = np.asarray(center, dtype=np.float64)
    center = center / np.linalg.norm(center)
    ang = np.arccos(np.clip(directions @ center, -1.0, 1.0))
    cap = np.where(ang <= angular_radius)[0]
    if len(cap) == 0:
        cap = np.array([int(np.argmin(ang))])
    return cap


def _tilt_direction(tilt, azimuth):
    return np.array(
        [np.sin(tilt) * np.cos(azimuth), np.sin(tilt) * np.sin(azimuth), np.cos(tilt)]
    )


def _flatten_valve_plate(u, r, center, angular_radius, crease):
    """Press the radii inside a cap onto the plane through its rim.

    The rim plane is perpendicular to ``center``; directions inside the
    cap land exactly on it, and a smoothstep over ``crease`` radians
    just outside the rim blends back into the wall, leaving a collar
    fold there. Radial (star-shaped) by construction since the plane
    height is positive.
    """
    cosang = np.clip(u @ center, -1.0, 1.0)
    ang = np.arccos(cosang)
    ring = np.abs(ang - angular_radius) < 0.5 * crease
    if not ring.any():
        ring = np.abs(ang - angular_radius) < np.ptp(ang) / 40.0
    height = (r[ring] * cosang[ring]).mean()
    r_plate = height / np.maximum(cosang, 1e-9)

    t = np.clip((ang - angular_radius) / crease, 0.0, 1.0)
    blend = t * t * (3.0 - 2.0 * t)
    inside = ang < angular_radius + crease
    out = r.copy()
    out[inside] = (1.0 - blend[inside]) * r_plate[inside] + blend[inside] * r[inside]
    return out


def generate_template(params: TemplateParams = None):
    """Build the template surface and its landmark set.

    Returns
    -------
    (TriSurface, LandmarkSet)
        Watertight star-shaped surface rescaled to ``params.total_ml``
        exactly, and disjoint apex/tricuspid/pulmonary vertex patches.

    Raises
    ------
    MeshError
        If the parameters make the landmark patches overlap.
    """
    p = params or TemplateParams()
    unit = fibonacci_sphere(p.n_vertices, radius=1.0)
    u = unit.vertices / np.linalg.norm(unit.vertices, axis=1)[:, None]

    ax, ay, az = p.semi_axes
    if p.apex_flatten or p.apex_widen:
        ang_a = np.arccos(np.clip(-u[:, 2], -1.0, 1.0))
        g = np.exp(-((ang_a / p.apex_flatten_width) ** 2))
        ax = ax * (1.0 + p.apex_widen * g)
        ay = ay * (1.0 - p.apex_flatten * g)
    r_ell = 1.0 / np.sqrt(
        (u[:, 0] / ax) ** 2 + (u[:, 1] / ay) ** 2 + (u[:, 2] / az) ** 2
    )
    b = np.asarray(p.bulge_direction, dtype=np.float64)
    b = b / np.linalg.norm(b)
    ang = np.arccos(np.clip(u @ b, -1.0, 1.0))
    r = r_ell * (1.0 + p.bulge * np.exp(-((ang / p.bulge_width) ** 2)))

    for axis, depth, center, width in [
        (
            _tilt_direction(p.tricuspid_tilt, p.tricuspid_azimuth),
            p.groove_depth,
            p.groove_center,
            p.groove_width,
        ),
        (
            _tilt_direction(p.pulmonary_tilt, p.pulmonary_azimuth),
            p.pulmonary_groove_depth,
            p.pulmonary_groove_center,
            p.groove_width,
        ),
        (
            np.array([0.0, 0.0, -1.0]),
            p.apex_groove_depth,
            p.apex_groove_center,
            p.apex_groove_width,
        ),
    ]:
        if depth:
            ang_v = np.arccos(np.clip(u @ axis, -1.0, 1.0))
            r = r * (1.0 - depth * np.exp(-(((ang_v - center) / width) ** 2)))

    if p.apex_scallop:
        ang_a = np.arccos(np.clip(-u[:, 2], -1.0, 1.0))
        phi = np.arctan2(u[:, 1], u[:, 0])
        env = np.exp(-(((ang_a - p.apex_scallop_center) / p.apex_scallop_width) ** 2))
        r = r * (1.0 + p.apex_scallop * env * np.cos(p.apex_scallop_m * phi))

    r = _flatten_valve_plate(
        u,
        r,
        _tilt_direction(p.pulmonary_tilt, p.pulmonary_azimuth),
        p.pulmonary_radius,
        p.valve_crease,
    )

    surface = TriSurface(r[:, None] * u, unit.faces)
    scale = (p.total_ml / signed_volume(surface)) ** (1.0 / 3.0)
    surface = surface.scaled(scale, about=np.zeros(3))

    apex = _cap_vertices(u, [0.0, 0.0, -1.0], p.apex_radius)
    tric = _cap_vertices(
        u, _tilt_direction(p.tricuspid_tilt, p.tricuspid_azimuth), p.tricuspid_radius
    )
    pulm = _cap_vertices(
        u, _tilt_direction(p.pulmonary_tilt, p.pulmonary_azimuth), p.pulmonary_radius
    )
    lm = LandmarkSet(apex, tric, pulm, surface=surface)
    return surface, lm
