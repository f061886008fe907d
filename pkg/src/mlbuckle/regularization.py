"""Three-field density regularization: filter, projection and their adjoint."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


def _offsets(radius: float):
    r = int(np.ceil(radius)) - 1
    d = np.arange(-r, r + 1)
    dx, dy = np.meshgrid(d, d, indexing="ij")
    dist = np.hypot(dx, dy).ravel()
    keep = dist < radius
    return dx.ravel()[keep], dy.ravel()[keep], dist[keep]


class DensityFilter:
    """Linear (cone) density filter ``w = max(0, r_min - dist)`` on an element grid.

    ``mode="renormalize"`` divides by the weight sum inside the domain;
    ``mode="pad"`` divides by the full-kernel sum, which is what extending the
    domain with void padding gives and keeps the filter mass-preserving.
    """

    def __init__(self, nelx: int, nely: int, r_min: float, mode: str = "renormalize"):
        if mode not in ("renormalize", "pad"):
            raise ValueError(f"unknown filter boundary mode {mode!r}")
        self.nelx, self.nely, self.r_min, self.mode = nelx, nely, float(r_min), mode
        m = nelx * nely
        if r_min <= 1.0:
            self.W = sp.identity(m, format="csr")
            self.Wt = self.W
            return
        dx, dy, dist = _offsets(r_min)
        ex, ey = np.meshgrid(np.arange(nelx), np.arange(nely), indexing="ij")
        ex, ey = ex.ravel(), ey.ravel()
        rows, cols, vals = [], [], []
        for ox, oy, d in zip(dx, dy, dist):
            kx, ky = ex + ox, ey + oy
            ok = (kx >= 0) & (kx < nelx) & (ky >= 0) & (ky < nely)
            rows.append((ex * nely + ey)[ok])
            cols.append((kx * nely + ky)[ok])
            vals.append(np.full(ok.sum(), r_min - d))
        H = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
        )
        if mode == "renormalize":
            s = np.asarray(H.sum(axis=1)).ravel()
        else:
            s = np.full(m, (r_min - dist).sum())
        self.W = sp.diags(1.0 / s) @ H
        self.W = self.W.tocsr()
        self.Wt = self.W.T.tocsr()

    def __call__(self, x):
        return self.W @ x

    def transpose(self, g):
        return self.Wt @ g


def density_filter(x_hat, r_min: float, shape, mode: str = "renormalize"):
    """Filter a flat element field of grid ``shape = (nelx, nely)``."""
    return DensityFilter(shape[0], shape[1], r_min, mode)(np.asarray(x_hat, dtype=float))


def project(x_tilde, eta: float, beta: float):
    """Relaxed Heaviside (tanh) projection; ``beta == 0`` disables it."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    if beta == 0:
        return x_tilde.copy()
    den = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return (np.tanh(beta * eta) + np.tanh(beta * (x_tilde - eta))) / den


def project_derivative(x_tilde, eta: float, beta: float):
    x_tilde = np.asarray(x_tilde, dtype=float)
    if beta == 0:
        return np.ones_like(x_tilde)
    den = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return beta * (1.0 - np.tanh(beta * (x_tilde - eta)) ** 2) / den


@dataclass(eq=False)
class DesignField:
    """Raw, filtered and physical densities plus the passive masks."""

    x_hat: np.ndarray
    x_tilde: np.ndarray
    x_phys: np.ndarray
    passive_solid: np.ndarray
    passive_void: np.ndarray
    r_min: float
    eta: float
    beta: float

    @property
    def active(self) -> np.ndarray:
        return ~(self.passive_solid | self.passive_void)


class Regularizer:
    """Maps raw design variables to physical densities and pulls gradients back."""

    def __init__(self, nelx, nely, r_min, passive_solid=None, passive_void=None, mode="renormalize"):
        m = nelx * nely
        self.shape = (nelx, nely)
        self.filter = DensityFilter(nelx, nely, r_min, mode)
        self.passive_solid = np.zeros(m, bool) if passive_solid is None else np.asarray(passive_solid, bool)
        self.passive_void = np.zeros(m, bool) if passive_void is None else np.asarray(passive_void, bool)
        self.active = ~(self.passive_solid | self.passive_void)

    def full(self, x_design):
        """Embed active-element variables into a full raw field."""
        x = np.where(self.passive_solid, 1.0, 0.0)
        x[self.active] = x_design
        return x

    def __call__(self, x_hat, eta: float = 0.5, beta: float = 6.0) -> DesignField:
        x_hat = np.asarray(x_hat, dtype=float).copy()
        if x_hat.size == self.active.sum() and x_hat.size != self.active.size:
            x_hat = self.full(x_hat)
        x_hat[self.passive_solid] = 1.0
        x_hat[self.passive_void] = 0.0
        x_tilde = self.filter(x_hat)
        x_phys = np.clip(project(x_tilde, eta, beta), 0.0, 1.0)
        x_phys[self.passive_solid] = 1.0
        x_phys[self.passive_void] = 0.0
        return DesignField(x_hat, x_tilde, x_phys, self.passive_solid, self.passive_void,
                           self.filter.r_min, eta, beta)

    def chain_rule(self, d_phys, field: DesignField, design_only: bool = False):
        return chain_rule(d_phys, field, self.filter, design_only)


def chain_rule(d_phys, field: DesignField, filt: DensityFilter, design_only: bool = False):
    """Pull ``d/dx_phys`` back to ``d/dx_hat`` (projection, then filter transpose).

    Works column-wise on ``(m, k)`` arrays.
    """
    d_phys = np.asarray(d_phys, dtype=float)
    dp = project_derivative(field.x_tilde, field.eta, field.beta)
    dp = np.where(field.active, dp, 0.0)
    scaled = d_phys * (dp[:, None] if d_phys.ndim == 2 else dp)
    d_hat = filt.transpose(scaled)
    if design_only:
        return d_hat[field.active]
    return d_hat


def non_discreteness(x_phys) -> float:
    x = np.asarray(x_phys, dtype=float)
    return float(4.0 * np.sum(x * (1.0 - x)) / x.size)


def dilate_local(x_phys, marked, r_th: float, shape):
    """Grow the densities of ``marked`` elements onto neighbours within ``r_th``.

    Each element takes the maximum of its own density and the densities of
    marked elements whose centre lies within ``r_th`` (element lengths).
    Returns the new field and the relative volume increase.
    """
    x = np.asarray(x_phys, dtype=float)
    marked = np.asarray(marked, dtype=bool)
    nelx, nely = shape
    src = np.where(marked, x, -np.inf).reshape(nelx, nely)
    out = x.reshape(nelx, nely).copy()
    r = int(np.floor(r_th))
    for ox in range(-r, r + 1):
        for oy in range(-r, r + 1):
            if np.hypot(ox, oy) > r_th:
                continue
            shifted = np.full_like(src, -np.inf)
            xs = slice(max(ox, 0), nelx + min(ox, 0))
            ys = slice(max(oy, 0), nely + min(oy, 0))
            xd = slice(max(-ox, 0), nelx + min(-ox, 0))
            yd = slice(max(-oy, 0), nely + min(-oy, 0))
            shifted[xd, yd] = src[xs, ys]
            out = np.maximum(out, shifted)
    out = out.ravel()
    v0 = x.sum()
    dv = (out.sum() - v0) / v0 if v0 > 0 else 0.0
    return out, float(dv)
