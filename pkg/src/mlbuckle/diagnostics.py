"""Post-processing of buckling analyses: mode pairing, error measures, locality and reinforcement."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NoLocalizedModes, NotNormalized
from .fem import FEModel
from .grid import GridHierarchy, constrain, galerkin_project
from .regularization import dilate_local

log = logging.getLogger(__name__)

RED_TIER = 0.95
BLUE_TIER = 0.85


@dataclass(eq=False)
class MacMatrix:
    """``c[j, r] = |phi_j^T K phi_r|`` between a set ``a`` (rows) and a reference set ``b`` (columns).

    ``pairs`` holds ``(j, r, c, tier)`` for the greedy injective matching
    with ``c >= BLUE_TIER``; ``second`` records, per reference column, a
    lower-confidence extra match when one exists.
    """

    c: np.ndarray
    pairs: list
    second: dict = field(default_factory=dict)

    def partner(self, j: int, min_c: float = RED_TIER):
        for a, r, c, _ in self.pairs:
            if a == j and c >= min_c:
                return r
        return None

    def partner_of_reference(self, r: int, min_c: float = RED_TIER):
        for a, b, c, _ in self.pairs:
            if b == r and c >= min_c:
                return a
        return None

    def count(self, min_c: float = RED_TIER) -> int:
        return sum(1 for p in self.pairs if p[2] >= min_c)


def _check_normalized(Phi, K, tol):
    d = np.einsum("ij,ij->j", Phi, K @ Phi)
    if np.any(np.abs(d - 1.0) > tol):
        raise NotNormalized(f"modes are not K-normalized (max |phi^T K phi - 1| = {np.abs(d - 1).max():.2e})")


def tier(c: float) -> str:
    if c >= RED_TIER:
        return "red"
    if c >= BLUE_TIER:
        return "blue"
    return "none"


def mac(modes_a, modes_b, K, tol: float = 1e-6) -> MacMatrix:
    """Stiffness-weighted modal assurance matrix with greedy descending pairing."""
    A = np.atleast_2d(np.asarray(modes_a, dtype=float).T).T
    B = np.atleast_2d(np.asarray(modes_b, dtype=float).T).T
    _check_normalized(A, K, tol)
    _check_normalized(B, K, tol)
    c = np.clip(np.abs(A.T @ (K @ B)), 0.0, 1.0)
    # descending coefficient, ties to the lower reference index, then lower row index
    js, rs = np.unravel_index(np.arange(c.size), c.shape)
    order = np.lexsort((js, rs, -c.ravel()))
    used_a, used_b = set(), set()
    pairs, second = [], {}
    for k in order:
        j, r = int(js[k]), int(rs[k])
        v = float(c[j, r])
        if v < BLUE_TIER:
            break
        if j in used_a:
            continue
        if r in used_b:
            if r not in second:
                second[r] = (j, v)
            continue
        used_a.add(j)
        used_b.add(r)
        pairs.append((j, r, v, tier(v)))
    pairs.sort(key=lambda p: p[1])
    return MacMatrix(c, pairs, second)


@dataclass
class BlfError:
    raw: np.ndarray
    paired: list

    def fundamental(self) -> float:
        return float(self.raw[0])


def blf_error(lam_tilde, lam, macm: MacMatrix | None = None, min_c: float = RED_TIER) -> BlfError:
    """``1 - lam_tilde / lam`` in index order and over MAC pairs with ``c >= min_c``.

    ``paired`` rows are ``(j, r, eps)`` sorted by reference index ``r``.
    """
    lt = np.asarray(lam_tilde, dtype=float)
    lr = np.asarray(lam, dtype=float)
    k = min(lt.size, lr.size)
    raw = 1.0 - lt[:k] / lr[:k]
    paired = []
    if macm is not None:
        for j, r, c, _ in macm.pairs:
            if c >= min_c and j < lt.size and r < lr.size:
                paired.append((j, r, float(1.0 - lt[j] / lr[r])))
    return BlfError(raw, paired)


def stress_scalar_field(G, K=None):
    """Nodal ``sqrt(G_xx^2 + G_yy^2)`` from the diagonal and ``zeta = max(G_node / K_node)``."""
    g = np.asarray(G.diagonal()).reshape(-1, 2)
    gn = np.hypot(g[:, 0], g[:, 1])
    if K is None:
        return gn, float("nan")
    k = np.asarray(K.diagonal()).reshape(-1, 2)
    kn = np.hypot(k[:, 0], k[:, 1])
    ratio = np.divide(gn, kn, out=np.zeros_like(gn), where=kn > 0)
    return gn, float(ratio.max()) if ratio.size else 0.0


def stress_measures(ops, hier: GridHierarchy, ell: int):
    """``zeta`` on levels ``0 .. ell-1`` from Galerkin-projected operators."""
    K, G = ops.K, ops.G
    out = []
    for j in range(ell):
        if j:
            K = constrain(galerkin_project(hier, j - 1, K), hier.levels[j].fixed, 1.0)
            G = galerkin_project(hier, j - 1, G)
        gk = G.copy().tolil()
        fixed = hier.levels[j].fixed
        kk = K.copy().tolil()
        # fixed DOFs carry artificial unit stiffness; exclude them
        for i in fixed:
            kk[i, i] = 0.0
            gk[i, i] = 0.0
        out.append(stress_scalar_field(gk.tocsr(), kk.tocsr())[1])
    return out


@dataclass(eq=False)
class LocalityReport:
    scores: np.ndarray            # raw TV per mode
    normalized: np.ndarray        # scores / scores[0]
    grad: np.ndarray              # (m, k) |grad pi| per element
    flagged: np.ndarray           # indices j*
    neighbourhood: np.ndarray     # bool mask N_e
    factor: float
    x_bar: float
    threshold: float = 1e-2


def strain_energy_density(model: FEModel, x_phys, Phi):
    """``pi_{j|e} = phi_e^T K_e phi_e`` per element and mode, modes rescaled to unit K-norm."""
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float).T).T
    Ek, _ = model.moduli(x_phys)
    pi = model.element_energy(Phi) * Ek[:, None]
    norms = pi.sum(axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    return pi / norms[None, :]


def total_variation(pi, shape, mask, h=1.0):
    """``sum_{mask} |grad pi| h^2`` with central differences inside, one-sided at the boundary.

    Returns ``(tv, |grad pi|)`` with the gradient magnitude flattened.
    """
    nelx, nely = shape
    P = np.asarray(pi, dtype=float).reshape(nelx, nely)
    gx = np.gradient(P, h, axis=0) if nelx > 1 else np.zeros_like(P)
    gy = np.gradient(P, h, axis=1) if nely > 1 else np.zeros_like(P)
    gm = np.hypot(gx, gy).ravel()
    return float(np.sum(gm[mask]) * h * h), gm


def locality_scores(model: FEModel, Phi, x_phys, x_bar: float = 0.9, factor: float = 10.0,
                    threshold: float = 1e-2) -> LocalityReport:
    """Total-variation locality of each mode's strain energy over ``{x >= x_bar}``."""
    if not 0.0 < x_bar <= 1.0:
        raise ValueError("x_bar must lie in (0, 1]")
    level = model.level
    shape = (level.nelx, level.nely)
    pi = strain_energy_density(model, x_phys, Phi)
    mask = np.asarray(x_phys) >= x_bar
    k = pi.shape[1]
    scores = np.zeros(k)
    grads = np.zeros((pi.shape[0], k))
    for j in range(k):
        scores[j], grads[:, j] = total_variation(pi[:, j], shape, mask, level.h)
    base = scores[0] if scores[0] > 0 else 1.0
    normalized = scores / base
    flagged = np.flatnonzero(normalized > factor)
    nb = np.zeros(pi.shape[0], bool)
    for j in flagged:
        g = np.where(mask, grads[:, j], 0.0)
        nb |= g >= threshold * g.max()
    return LocalityReport(scores, normalized, grads, flagged, nb & mask, factor, x_bar, threshold)


@dataclass
class ReinforceReport:
    volume_increase: float
    blf_before: np.ndarray
    blf_after: np.ndarray
    relative_change: np.ndarray
    mac_tracking: np.ndarray
    flagged: np.ndarray
    exited_window: list


def reinforce(x_phys, report: LocalityReport, r_th: float, shape, analyze=None, modes_before=None,
              blf_before=None, frozen=None):
    """Thicken the members implicated in localized modes and re-analyse.

    ``analyze(x_phys) -> (Phi, lam, K)`` runs the buckling analysis on the new
    field. Each original mode is followed to the new mode with the largest
    stiffness-weighted MAC. Elements in the boolean mask ``frozen`` (passive
    regions) keep their density. Raises :class:`NoLocalizedModes` when
    nothing is flagged.
    """
    if report.flagged.size == 0:
        raise NoLocalizedModes("no localized modes flagged")
    x_new, dv = dilate_local(x_phys, report.neighbourhood, r_th, shape)
    if frozen is not None:
        x_old = np.asarray(x_phys, dtype=float)
        x_new = np.where(frozen, x_old, x_new)
        dv = float(x_new.sum() / x_old.sum() - 1.0)
    if analyze is None:
        return x_new, dv, None
    Phi1, lam1, K1 = analyze(x_new)
    B = np.asarray(modes_before, dtype=float)
    nrm = np.sqrt(np.einsum("ij,ij->j", B, K1 @ B))
    c = np.abs((B / nrm).T @ (K1 @ Phi1))
    best = np.argmax(c, axis=1)
    after = np.asarray(lam1)[best]
    before = np.asarray(blf_before, dtype=float)
    rel = after / before - 1.0
    window = np.max(before)
    exited = [int(j) for j in report.flagged if np.min(lam1) > 0 and after[j] > window]
    rep = ReinforceReport(dv, before, after, rel, c[np.arange(c.shape[0]), best], report.flagged, exited)
    return x_new, dv, rep


def write_report(path, sections: dict):
    """Structured text report: ``[name]`` headers followed by CSV rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for name, rows in sections.items():
        buf.write(f"[{name}]\n")
        for row in rows:
            w.writerow(row)
        buf.write("\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())
    return buf.getvalue()


def read_report(path) -> dict:
    out, cur = {}, None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("[") and line.endswith("]"):
                cur = line[1:-1]
                out[cur] = []
            elif line and cur is not None:
                out[cur].append(next(csv.reader([line])))
    return out
