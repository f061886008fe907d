"""Density dumps and legacy-VTK exports.

Density dump layout (little-endian)::

    bytes 0-3    magic  b"MLBD"
    bytes 4-7    uint32 format version (1)
    bytes 8-11   uint32 nelx
    bytes 12-15  uint32 nely
    bytes 16-    float64 densities, element e = ex * nely + ey

VTK files are ASCII ``STRUCTURED_POINTS`` datasets with x varying fastest.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"MLBD"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def save_density(path, x, nelx: int, nely: int) -> None:
    x = np.asarray(x, dtype="<f8").ravel()
    if x.size != nelx * nely:
        raise FormatError(f"field has {x.size} values, grid has {nelx * nely} elements")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, nelx, nely))
        fh.write(x.tobytes())
    os.replace(tmp, path)


def load_density(path):
    """Returns ``(x, nelx, nely)``."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FormatError("truncated density header")
        magic, version, nelx, nely = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported density format version {version}")
        data = fh.read()
    if len(data) != 8 * nelx * nely:
        raise FormatError(f"expected {nelx * nely} float64 values, got {len(data) / 8:g}")
    return np.frombuffer(data, dtype="<f8").copy(), nelx, nely


def _cells_xfast(v, nelx, nely):
    return np.asarray(v).reshape(nelx, nely).T.ravel()


def _points_xfast(v, nelx, nely):
    return np.asarray(v).reshape(nelx + 1, nely + 1, *np.shape(v)[1:]).swapaxes(0, 1).reshape(
        (nelx + 1) * (nely + 1), *np.shape(v)[1:])


def _fmt(a):
    return "\n".join(" ".join(f"{v:.9e}" for v in row) for row in np.atleast_2d(a))


def export_vtk(path, nelx: int, nely: int, h: float, density=None, modes=None, energies=None,
               title: str = "mlbuckle export") -> None:
    """Write density (cell data), mode displacements (point vectors) and log10 strain energy.

    ``modes`` is ``(ndof, k)`` in the interleaved node layout; ``energies`` is
    ``(m, k)`` element strain-energy densities.
    """
    npts = (nelx + 1) * (nely + 1)
    lines = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nelx + 1} {nely + 1} 1",
        "ORIGIN 0 0 0",
        f"SPACING {h!r} {h!r} 1",
    ]
    cell = []
    if density is not None:
        cell.append(("density", _cells_xfast(density, nelx, nely)))
    if energies is not None:
        E = np.atleast_2d(np.asarray(energies, dtype=float).T).T
        for k in range(E.shape[1]):
            cell.append((f"log_strain_energy_{k + 1}",
                         _cells_xfast(np.log10(np.maximum(E[:, k], 1e-300)), nelx, nely)))
    if cell:
        lines.append(f"CELL_DATA {nelx * nely}")
        for name, v in cell:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(v[:, None])]
    if modes is not None:
        M = np.atleast_2d(np.asarray(modes, dtype=float).T).T
        if M.shape[0] != 2 * npts:
            raise FormatError("mode vectors do not match the grid")
        lines.append(f"POINT_DATA {npts}")
        for k in range(M.shape[1]):
            uv = _points_xfast(M[:, k].reshape(-1, 2), nelx, nely)
            vec = np.column_stack([uv, np.zeros(npts)])
            lines += [f"VECTORS mode_{k + 1} double", _fmt(vec)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path) -> dict:
    """Minimal reader for files written by :func:`export_vtk` (used for validation)."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    if not tokens[0].startswith("# vtk DataFile"):
        raise FormatError("not a legacy VTK file")
    if tokens[2].strip() != "ASCII" or tokens[3].strip() != "DATASET STRUCTURED_POINTS":
        raise FormatError("unsupported VTK dataset")
    out = {"dims": tuple(int(t) for t in tokens[4].split()[1:]), "cell": {}, "point": {}}
    i, where, count = 7, None, 0
    while i < len(tokens):
        line = tokens[i].strip()
        if not line:
            i += 1
            continue
        head = line.split()
        if head[0] == "CELL_DATA":
            where, count = "cell", int(head[1])
            i += 1
        elif head[0] == "POINT_DATA":
            where, count = "point", int(head[1])
            i += 1
        elif head[0] == "SCALARS":
            vals = np.array([float(t) for t in tokens[i + 2:i + 2 + count]])
            out[where][head[1]] = vals
            i += 2 + count
        elif head[0] == "VECTORS":
            vals = np.array([[float(v) for v in t.split()] for t in tokens[i + 1:i + 1 + count]])
            if vals.shape != (count, 3):
                raise FormatError(f"bad vector block {head[1]}")
            out[where][head[1]] = vals
            i += 1 + count
        else:
            raise FormatError(f"unexpected VTK line {line!r}")
    return out
