"""Benchmark geometries: supports, loads and passive regions on a structured grid."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridLevel

# Domain length of the two-bar frame. Load factors scale linearly with it;
# this value puts the compliance-optimal design near lam_1 = 0.9, so the
# bound lam_bar = 1 is active and reachable at volume fraction 0.16.
TWO_BAR_LX = 800.0


@dataclass(eq=False)
class Structure:
    """Boundary-value problem on an ``nelx x nely`` grid of square elements of side ``h``."""

    name: str
    nelx: int
    nely: int
    h: float
    fixed: np.ndarray
    f: np.ndarray
    passive_solid: np.ndarray
    passive_void: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def level(self) -> GridLevel:
        return GridLevel(self.nelx, self.nely, self.h, self.fixed)

    @property
    def num_elements(self) -> int:
        return self.nelx * self.nely

    @property
    def active(self) -> np.ndarray:
        return ~(self.passive_solid | self.passive_void)


def _node(nely, i, j):
    return np.asarray(i) * (nely + 1) + np.asarray(j)


def _edge_load(nely, nodes_ij, total, direction):
    """Consistent nodal loads of a uniform traction along a straight run of nodes."""
    i, j = nodes_ij
    k = len(i)
    w = np.ones(k)
    if k > 1:
        w[0] = w[-1] = 0.5
    w *= total / w.sum()
    dof = 2 * _node(nely, i, j) + (0 if direction == "x" else 1)
    return dof, w


def _element_box(nelx, nely, x0, x1, y0, y1):
    ex, ey = np.meshgrid(np.arange(nelx), np.arange(nely), indexing="ij")
    box = (ex >= x0) & (ex < x1) & (ey >= y0) & (ey < y1)
    return box.ravel()


def two_bar_frame(nelx: int = 168, nely: int = 72, Lx: float = TWO_BAR_LX, F: float = 2e-2) -> Structure:
    """Two hinges on the left edge (top and bottom), downward load at mid right edge.

    Square passive solid blocks of side ``Lx / 10`` sit at the two hinges and
    at the loaded point; the load ``F`` is spread uniformly over the block
    edge of length ``Lx / 10`` on the right boundary.
    """
    h = Lx / nelx
    s = max(1, int(round(nelx / 10)))
    nelx, nely = int(nelx), int(nely)
    # hinges: mid-height of the left face of each corner block
    ja = nely - max(1, s // 2)
    jb = max(1, s // 2)
    hinge = _node(nely, 0, np.array([ja, jb]))
    fixed = np.sort(np.concatenate([2 * hinge, 2 * hinge + 1]))
    jc0 = (nely - s) // 2
    jc = np.arange(jc0, jc0 + s + 1)
    dof, w = _edge_load(nely, (np.full(jc.size, nelx), jc), -F, "y")
    f = np.zeros(2 * (nelx + 1) * (nely + 1))
    np.add.at(f, dof, w)
    solid = (
        _element_box(nelx, nely, 0, s, nely - s, nely)
        | _element_box(nelx, nely, 0, s, 0, s)
        | _element_box(nelx, nely, nelx - s, nelx, jc0, jc0 + s)
    )
    return Structure("two_bar_frame", nelx, nely, h, fixed, f, solid, np.zeros_like(solid),
                     {"Lx": Lx, "F": F, "block": s})


def cantilever_column(nelx: int = 4, nely: int = 64, width: float = 1.0, P: float = 1.0,
                      E: float = 1.0) -> Structure:
    """Clamped-free column along y (clamped at y = 0), compressed by ``P`` at the top.

    ``meta["euler_blf"]`` holds ``pi^2 E I / (4 L^2) / P`` with ``I = width^3 / 12``.
    """
    h = width / nelx
    L = nely * h
    bottom = _node(nely, np.arange(nelx + 1), 0)
    fixed = np.sort(np.concatenate([2 * bottom, 2 * bottom + 1]))
    top_i = np.arange(nelx + 1)
    dof, w = _edge_load(nely, (top_i, np.full(top_i.size, nely)), -P, "y")
    f = np.zeros(2 * (nelx + 1) * (nely + 1))
    np.add.at(f, dof, w)
    I = width**3 / 12.0
    euler = np.pi**2 * E * I / (4.0 * L**2) / P
    m = nelx * nely
    return Structure("cantilever_column", nelx, nely, h, fixed, f, np.zeros(m, bool),
                     np.zeros(m, bool), {"euler_blf": euler, "L": L, "width": width})


def rectangle(nelx: int, nely: int, h: float = 1.0, clamp: str = "left", load: str = "tip",
              F: float = 1.0) -> Structure:
    """Generic rectangular domain with a clamped edge and a point load.

    ``clamp`` in {"left", "bottom"}; ``load`` in {"tip" (downward at the far
    mid-edge), "axial" (compressive along the clamp normal)}.
    """
    f = np.zeros(2 * (nelx + 1) * (nely + 1))
    if clamp == "left":
        nodes = _node(nely, 0, np.arange(nely + 1))
        far = _node(nely, nelx, nely // 2)
        if load == "tip":
            f[2 * far + 1] = -F
        else:
            f[2 * far] = -F
    elif clamp == "bottom":
        nodes = _node(nely, np.arange(nelx + 1), 0)
        far = _node(nely, nelx // 2, nely)
        if load == "tip":
            f[2 * far] = F
        else:
            f[2 * far + 1] = -F
    else:
        raise ValueError(f"unknown clamp {clamp!r}")
    fixed = np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))
    m = nelx * nely
    return Structure("rectangle", nelx, nely, h, fixed, f, np.zeros(m, bool), np.zeros(m, bool))


def bar_design(structure: Structure, segments, width: float, background: float = 0.0) -> np.ndarray:
    """Element densities of straight solid bars of ``width`` (in elements) on a void background.

    ``segments`` lists ``((x0, y0), (x1, y1))`` end points in element units.
    Passive solid elements stay solid.
    """
    nelx, nely = structure.nelx, structure.nely
    cx, cy = np.meshgrid(np.arange(nelx) + 0.5, np.arange(nely) + 0.5, indexing="ij")
    pts = np.stack([cx.ravel(), cy.ravel()], axis=1)
    x = np.full(nelx * nely, float(background))
    for a, b in segments:
        a, b = np.asarray(a, float), np.asarray(b, float)
        d = b - a
        t = np.clip((pts - a) @ d / (d @ d), 0.0, 1.0)
        dist = np.linalg.norm(pts - (a + t[:, None] * d), axis=1)
        x[dist <= 0.5 * width] = 1.0
    x[structure.passive_solid] = 1.0
    x[structure.passive_void] = 0.0
    return x


def two_bar_design(structure: Structure, width: float | None = None) -> np.ndarray:
    """Two straight bars joining the hinge blocks of :func:`two_bar_frame` to the load block."""
    s = structure.meta.get("block", max(1, round(structure.nelx / 10)))
    w = 0.75 * s if width is None else width
    nx, ny = structure.nelx, structure.nely
    c = (nx - 0.5 * s, 0.5 * ny)
    top = (0.5 * s, ny - 0.5 * s)
    bot = (0.5 * s, 0.5 * s)
    return bar_design(structure, [(top, c), (bot, c)], w)


def _compressed_plate(nelx, nely, F):
    """Clamped bottom edge, uniform downward traction of total ``F`` on the top edge."""
    bottom = _node(nely, np.arange(nelx + 1), 0)
    fixed = np.sort(np.concatenate([2 * bottom, 2 * bottom + 1]))
    top = np.arange(nelx + 1)
    dof, w = _edge_load(nely, (top, np.full(top.size, nely)), -F, "y")
    f = np.zeros(2 * (nelx + 1) * (nely + 1))
    np.add.at(f, dof, w)
    return fixed, f


def notched_plate(nelx: int = 64, nely: int = 256, F: float = 1.0, strip: int = 1, slot: int = 1,
                  slot_len: int | None = None) -> Structure:
    """Compressed plate with two vertical slots parallel to the long edges.

    Each slot (``slot`` elements wide, passive void) runs over the middle
    ``slot_len`` rows at a distance ``strip`` from its edge, which leaves a
    thin strip carrying the same strain as the plate. The slot ends are
    re-entrant corners.
    """
    slot_len = 10 if slot_len is None else slot_len
    fixed, f = _compressed_plate(nelx, nely, F)
    y0 = (nely - slot_len) // 2
    void = (_element_box(nelx, nely, strip, strip + slot, y0, y0 + slot_len)
            | _element_box(nelx, nely, nelx - strip - slot, nelx - strip, y0, y0 + slot_len))
    m = nelx * nely
    return Structure("notched_plate", nelx, nely, 1.0, fixed, f, np.zeros(m, bool), void,
                     {"strip": strip, "slot": slot, "slot_len": slot_len})


def thin_bar_frame(nelx: int = 64, nely: int = 256, F: float = 1.0, bar: int = 1, gap: int = 3,
                   length: int = 10) -> Structure:
    """Compressed plate with a thin bar along its left edge, split off by an empty slot.

    The bar is ``bar`` elements wide and ``length`` long at mid-height; the
    slot between bar and plate is ``gap`` wide. The slot is ordinary design
    space (see :func:`thin_bar_design`), so reinforcement may grow into it.
    """
    fixed, f = _compressed_plate(nelx, nely, F)
    m = nelx * nely
    return Structure("thin_bar_frame", nelx, nely, 1.0, fixed, f, np.zeros(m, bool), np.zeros(m, bool),
                     {"bar": bar, "gap": gap, "length": length})


def thin_bar_design(structure: Structure) -> np.ndarray:
    """Solid plate with the slot of :func:`thin_bar_frame` left empty."""
    b, g, n = (structure.meta[k] for k in ("bar", "gap", "length"))
    nelx, nely = structure.nelx, structure.nely
    y0 = (nely - n) // 2
    x = np.ones(nelx * nely)
    x[_element_box(nelx, nely, b, b + g, y0, y0 + n)] = 0.0
    return x
