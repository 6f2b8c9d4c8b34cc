"""Reading and writing surface meshes (OBJ, legacy-ASCII VTK, AVS-UCD).

OBJ covers only ``v``/``f`` lines. VTK is the legacy ASCII POLYDATA
dialect with optional POINT_DATA / CELL_DATA scalars and vectors. UCD is
the AVS ascii format restricted to ``tri`` cells; node ids may be 0- or
1-based, they are remapped by id so either works (the detected base is
recorded in the mesh metadata).
"""

from __future__ import annotations

import json
import os

import numpy as np

from .mesh import LandmarkSet, MeshError, TriSurface

_EXT_FORMAT = {".obj": "obj", ".vtk": "vtk", ".ucd": "ucd", ".inp": "ucd"}


class ParseError(MeshError):
    """Raised when a mesh file cannot be parsed."""


def _detect_format(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
        aliases = {"vtk-legacy-ascii": "vtk", "avs-ucd": "ucd"}
        fmt = aliases.get(fmt, fmt)
        if fmt not in ("obj", "vtk", "ucd"):
            raise ParseError(f"unknown format '{fmt}'")
        return fmt
    ext = os.path.splitext(str(path))[1].lower()
    if ext not in _EXT_FORMAT:
        raise ParseError(f"cannot infer format from extension '{ext}'")
    return _EXT_FORMAT[ext]


def load_surface(path, fmt=None):
    """Load and validate a watertight TriSurface.

    A globally flipped mesh (negative volume) is repaired; non-manifold
    edges, locally inconsistent winding or open boundaries raise
    MeshError.
    """
    fmt = _detect_format(path, fmt)
    with open(path, "r") as fh:
        text = fh.read()
    if fmt == "obj":
        vertices, faces, meta = _parse_obj(text)
    elif fmt == "vtk":
        vertices, faces, _, _, meta = _parse_vtk(text)
    else:
        vertices, faces, meta = _parse_ucd(text)
    return TriSurface(vertices, faces, metadata=meta)


def save_surface(surface, path, fmt=None, point_data=None, cell_data=None):
    """Write a surface, optionally with named per-vertex / per-face fields.

    ``point_data`` and ``cell_data`` map names to scalar (n,) or vector
    (n, 3) arrays. OBJ ignores fields; UCD supports scalars only.
    """
    fmt = _detect_format(path, fmt)
    if fmt == "obj":
        if point_data or cell_data:
            raise ParseError("OBJ cannot carry data fields")
        text = _write_obj(surface)
    elif fmt == "vtk":
        text = _write_vtk(surface, point_data, cell_data)
    else:
        text = _write_ucd(surface, point_data, cell_data)
    with open(path, "w") as fh:
        fh.write(text)


def load_fields(path):
    """Return the POINT_DATA and CELL_DATA dicts of a legacy VTK file."""
    with open(path, "r") as fh:
        text = fh.read()
    _, _, pdata, cdata, _ = _parse_vtk(text)
    return pdata, cdata


# -- OBJ --------------------------------------------------------------


def _parse_obj(text):
    vertices, faces = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise ParseError(f"line {lineno}: malformed vertex")
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ParseError(f"line {lineno}: only triangle faces supported")
            faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if not vertices or not faces:
        raise ParseError("OBJ file has no vertices or no faces")
    return np.array(vertices), np.array(faces), {"source_format": "obj"}


def _write_obj(surface):
    lines = []
    for x, y, z in surface.vertices:
        lines.append(f"v {x:.17g} {y:.17g} {z:.17g}")
    for a, b, c in surface.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    return "\n".join(lines) + "\n"


# -- VTK legacy ASCII -------------------------------------------------


class _Tokens:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0
        self.buf = []

    def next_line(self):
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise ParseError("unexpected end of VTK file")

    def take(self, count, cast=float):
        out = []
        while len(out) < count:
            if not self.buf:
                self.buf = self.next_line().split()
            need = count - len(out)
            out.extend(cast(t) for t in self.buf[:need])
            self.buf = self.buf[need:]
        return out


def _parse_vtk(text):
    tok = _Tokens(text)
    header = tok.next_line()
    if not header.startswith("# vtk DataFile"):
        raise ParseError("missing VTK header")
    tok.next_line()  # title
    enc = tok.next_line().upper()
    if enc != "ASCII":
        raise ParseError("only ASCII VTK is supported")
    dataset = tok.next_line().split()
    if len(dataset) != 2 or dataset[0] != "DATASET" or dataset[1] != "POLYDATA":
        raise ParseError("only DATASET POLYDATA is supported")

    vertices = faces = None
    point_data, cell_data = {}, {}
    active = None
    while True:
        try:
            line = tok.next_line()
        except ParseError:
            break
        parts = line.split()
        kw = parts[0].upper()
        if kw == "POINTS":
            n = int(parts[1])
            vals = tok.take(3 * n)
            vertices = np.array(vals).reshape(n, 3)
        elif kw == "POLYGONS":
            m = int(parts[1])
            total = int(parts[2])
            vals = tok.take(total, cast=int)
            faces, i = [], 0
            while i < len(vals):
                k = vals[i]
                if k != 3:
                    raise ParseError("only triangle polygons supported")
                faces.append(vals[i + 1 : i + 4])
                i += k + 1
            if len(faces) != m:
                raise ParseError("POLYGONS count mismatch")
            faces = np.array(faces)
        elif kw == "POINT_DATA":
            active = ("point", int(parts[1]))
        elif kw == "CELL_DATA":
            active = ("cell", int(parts[1]))
        elif kw == "SCALARS":
            if active is None:
                raise ParseError("SCALARS outside POINT_DATA/CELL_DATA")
            name = parts[1]
            ncomp = int(parts[4]) if len(parts) > 4 else 1
            lookup = tok.next_line().split()
            if lookup[0].upper() != "LOOKUP_TABLE":
                raise ParseError("expected LOOKUP_TABLE after SCALARS")
            vals = np.array(tok.take(active[1] * ncomp))
            if ncomp > 1:
                vals = vals.reshape(active[1], ncomp)
            (point_data if active[0] == "point" else cell_data)[name] = vals
        elif kw == "VECTORS":
            if active is None:
                raise ParseError("VECTORS outside POINT_DATA/CELL_DATA")
            name = parts[1]
            vals = np.array(tok.take(active[1] * 3)).reshape(active[1], 3)
            (point_data if active[0] == "point" else cell_data)[name] = vals
        elif kw in ("FIELD", "NORMALS", "TEXTURE_COORDINATES"):
            raise ParseError(f"unsupported VTK attribute '{kw}'")
        else:
            raise ParseError(f"unsupported VTK section '{parts[0]}'")
    if vertices is None or faces is None:
        raise ParseError("VTK file lacks POINTS or POLYGONS")
    meta = {"source_format": "vtk"}
    return vertices, faces, point_data, cell_data, meta


def _fmt_row(row):
    return " ".join(f"{x:.17g}" for x in row)


def _vtk_data_block(fields, count, lines):
    for name, values in fields.items():
        values = np.asarray(values, dtype=np.float64)
        if values.shape == (count,):
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{x:.17g}" for x in values)
        elif values.shape == (count, 3):
            lines.append(f"VECTORS {name} double")
            lines.extend(_fmt_row(r) for r in values)
        else:
            raise ParseError(
                f"field '{name}' has shape {values.shape}, expected ({count},) or ({count}, 3)"
            )


def _write_vtk(surface, point_data=None, cell_data=None, title="rvparc surface"):
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {surface.n_vertices} double",
    ]
    lines.extend(_fmt_row(r) for r in surface.vertices)
    lines.append(f"POLYGONS {surface.n_faces} {4 * surface.n_faces}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in surface.faces)
    if point_data:
        lines.append(f"POINT_DATA {surface.n_vertices}")
        _vtk_data_block(point_data, surface.n_vertices, lines)
    if cell_data:
        lines.append(f"CELL_DATA {surface.n_faces}")
        _vtk_data_block(cell_data, surface.n_faces, lines)
    return "\n".join(lines) + "\n"


# -- AVS-UCD ----------------------------------------------------------


def _parse_ucd(text):
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty UCD file")
    head = lines[0].split()
    if len(head) < 5:
        raise ParseError("malformed UCD header")
    n_nodes, n_cells = int(head[0]), int(head[1])
    if len(lines) < 1 + n_nodes + n_cells:
        raise ParseError("truncated UCD file")

    node_ids, coords = [], []
    for ln in lines[1 : 1 + n_nodes]:
        parts = ln.split()
        node_ids.append(int(parts[0]))
        coords.append([float(x) for x in parts[1:4]])
    id_to_row = {nid: i for i, nid in enumerate(node_ids)}
    if len(id_to_row) != n_nodes:
        raise ParseError("duplicate UCD node id")

    faces = []
    for ln in lines[1 + n_nodes : 1 + n_nodes + n_cells]:
        parts = ln.split()
        if parts[2] != "tri":
            raise ParseError(f"unsupported UCD cell type '{parts[2]}' (only 'tri')")
        try:
            faces.append([id_to_row[int(p)] for p in parts[3:6]])
        except KeyError as exc:
            raise ParseError(f"UCD cell references unknown node id {exc}") from None
    meta = {"source_format": "ucd", "ucd_index_base": min(node_ids)}
    return np.array(coords), np.array(faces), meta


def _write_ucd(surface, point_data=None, cell_data=None):
    if cell_data:
        raise ParseError("UCD writer supports node data only")
    point_data = point_data or {}
    for name, values in point_data.items():
        if np.asarray(values).shape != (surface.n_vertices,):
            raise ParseError(f"UCD node data '{name}' must be scalar per vertex")
    lines = [f"{surface.n_vertices} {surface.n_faces} {len(point_data)} 0 0"]
    for i, (x, y, z) in enumerate(surface.vertices, 1):
        lines.append(f"{i} {x:.17g} {y:.17g} {z:.17g}")
    for i, (a, b, c) in enumerate(surface.faces, 1):
        lines.append(f"{i} 1 tri {a + 1} {b + 1} {c + 1}")
    if point_data:
        lines.append(f"{len(point_data)} " + " ".join("1" * len(point_data)))
        for name in point_data:
            lines.append(f"{name}, none")
        cols = np.column_stack([np.asarray(point_data[n]) for n in point_data])
        for i, row in enumerate(cols, 1):
            lines.append(f"{i} " + _fmt_row(row))
    return "\n".join(lines) + "\n"


# -- landmarks --------------------------------------------------------


def load_landmarks(path, surface=None):
    """Read the landmark sidecar JSON (0-based vertex indices)."""
    with open(path, "r") as fh:
        doc = json.load(fh)
    missing = [k for k in LandmarkSet.REGIONS if k not in doc]
    if missing:
        raise ParseError(f"landmark file missing keys: {missing}")
    return LandmarkSet(doc["apex"], doc["tricuspid"], doc["pulmonary"], surface)


def save_landmarks(landmarks, path):
    doc = {name: [int(i) for i in landmarks[name]] for name in LandmarkSet.REGIONS}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
