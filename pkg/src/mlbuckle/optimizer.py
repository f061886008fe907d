"""Outer optimization loop: compliance (P1) or volume (P2) with buckling bounds.

Buckling constraints use the bound formulation with spacing ``alpha``::

    g_i = lam_bar / (alpha**(i-1) * lam_i) - 1 <= 0,   i = 1..|B|

which keeps the constrained load factors from coalescing exactly.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonPositiveBlf
from .fem import FEModel, MaterialModel
from .grid import GridHierarchy, build_hierarchy
from .mma import MMAState, mma_step
from .pipeline import LbaResult, eig_residual, lba
from .problems import Structure
from .regularization import DesignField, Regularizer, non_discreteness
from .sensitivity import blf_gradients, compliance_gradient, volume_fraction, volume_gradient

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class Continuation:
    """Penalization ramp followed by projection sharpening.

    ``p`` grows by ``p_step`` every ``p_every`` steps up to ``p_max``; after
    that ``beta`` doubles every ``beta_every`` steps up to ``beta_max``.
    """

    p_start: float = 3.0
    p_step: float = 0.25
    p_every: int = 25
    p_max: float = 6.0
    beta_start: float = 1.0
    beta_every: int = 50
    beta_max: float = 32.0
    eta: float = 0.5

    def __post_init__(self):
        if not 1.0 <= self.p_start <= self.p_max <= 6.0:
            raise ConfigError("need 1 <= p_start <= p_max <= 6")
        if self.p_every < 1 or self.beta_every < 1:
            raise ConfigError("continuation intervals must be positive")
        if self.beta_start < 0 or self.beta_max < self.beta_start:
            raise ConfigError("need 0 <= beta_start <= beta_max")

    def bump(self, p, beta, steps_since):
        """New ``(p, beta, bumped)`` after ``steps_since`` steps at the current values."""
        if p < self.p_max:
            if steps_since >= self.p_every:
                return min(p + self.p_step, self.p_max), beta, True
            return p, beta, False
        if beta < self.beta_max and steps_since >= self.beta_every:
            nb = min(max(2.0 * beta, 1.0), self.beta_max)
            return p, nb, True
        return p, beta, False

    def final(self, p, beta) -> bool:
        return p >= self.p_max and beta >= self.beta_max


@dataclass
class ProblemSpec:
    """Optimization problem.

    ``kind`` is ``"P1"`` (min compliance, volume bound ``vol_bound``) or
    ``"P2"`` (min volume, compliance bound ``compliance_factor * J(x = 1)``).
    ``blf_bound = 0`` switches the buckling constraints off. The MMA move
    limit is ``move * min(1, move_beta / beta)``: with a sharp projection,
    raw variables in saturated regions drift without changing the design
    until a group of them crosses the threshold at once.
    """

    kind: str = "P1"
    vol_bound: float = 0.16
    blf_bound: float = 1.0
    compliance_factor: float = 6.0
    n_constrained: int = 12
    q: int = 24
    alpha: float = 0.99
    max_iters: int = 700
    ell: int = 2
    sweeps: int = 3
    r_min: float = 3.0
    filter_mode: str = "renormalize"
    move: float = 0.2
    move_beta: float = 1.0
    stagnation_tol: float = 1e-4
    stagnation_steps: int = 20
    continuation: Continuation = field(default_factory=Continuation)

    def __post_init__(self):
        if self.kind not in ("P1", "P2"):
            raise ConfigError(f"unknown problem kind {self.kind!r}")
        if not 0.0 < self.vol_bound < 1.0:
            raise ConfigError("vol_bound must lie in (0, 1)")
        if self.blf_bound < 0:
            raise ConfigError("blf_bound must be non-negative")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if not 1 <= self.n_constrained <= self.q:
            raise ConfigError("need 1 <= n_constrained <= q")
        if self.ell < 1:
            raise ConfigError("ell must be at least 1")
        if self.compliance_factor <= 0:
            raise ConfigError("compliance_factor must be positive")
        if not 0.0 < self.move <= 1.0 or self.move_beta <= 0:
            raise ConfigError("move must lie in (0, 1] and move_beta be positive")

    @property
    def buckling(self) -> bool:
        return self.blf_bound > 0


def bound_constraints(lambdas, lambda_bar: float, alpha: float):
    """Values and ``dg/dlam`` of the spaced lower bounds; input is sorted internally.

    Returns ``(g, dg, order)`` where ``order`` maps constraint ``i`` to the
    input position of the ``i``-th smallest load factor.
    """
    lam = np.asarray(lambdas, dtype=float)
    if np.any(~(lam > 0)):
        raise NonPositiveBlf("buckling load factors must be positive")
    order = np.argsort(lam, kind="stable")
    ls = lam[order]
    scale = alpha ** np.arange(ls.size)
    g = lambda_bar / (scale * ls) - 1.0
    dg = -lambda_bar / (scale * ls**2)
    return g, dg, order


def coalescence_measure(lambdas, alpha: float):
    """``delta_i = lam_i / lam_1 - alpha**(i-1)`` for ``i = 2..``."""
    lam = np.sort(np.asarray(lambdas, dtype=float))
    i = np.arange(1, lam.size)
    return lam[1:] / lam[0] - alpha**i


@dataclass
class OptState:
    iteration: int
    x_hat: np.ndarray
    p: float
    beta: float
    steps_since_bump: int
    mma: MMAState
    stagnant: int = 0
    J_ref: float = 1.0
    J_bound: float = np.inf
    history: dict = field(default_factory=lambda: {k: [] for k in ("J", "f", "lam", "m_nd", "delta", "res",
                                                                      "p", "beta", "change")})
    timings: list = field(default_factory=list)
    converged: bool = False

    def record(self, **row):
        for k, v in row.items():
            self.history[k].append(v)


@dataclass(eq=False)
class OptResult:
    state: OptState
    field: DesignField
    analysis: LbaResult
    spec: ProblemSpec


class Optimizer:
    """Drives :func:`run`; holds the model, regularizer and output sinks."""

    def __init__(self, spec: ProblemSpec, structure: Structure, material: MaterialModel | None = None,
                 hier: GridHierarchy | None = None, mg_levels: int | None = None):
        self.spec = spec
        self.structure = structure
        self.material = material or MaterialModel(p=spec.continuation.p_start)
        levels = max(spec.ell, mg_levels or 1)
        self.hier = hier or build_hierarchy((structure.nelx, structure.nely), levels, structure.h,
                                            structure.fixed)
        self.mg_levels = mg_levels
        self.model = FEModel(structure.level, self.material, structure.passive_solid)
        self.reg = Regularizer(structure.nelx, structure.nely, spec.r_min, structure.passive_solid,
                               structure.passive_void, spec.filter_mode)
        self.n = int(self.reg.active.sum())

    # evaluation

    def set_penalty(self, p):
        self.model.material = dataclasses.replace(self.model.material, p=p)

    def analyze(self, x_hat, p, beta, q=None):
        self.set_penalty(p)
        fld = self.reg(x_hat, self.spec.continuation.eta, beta)
        q = self.spec.q if q is None else q
        res = lba(self.model, fld.x_phys, self.structure.f, self.hier, q, ell=self.spec.ell,
                  sweeps=self.spec.sweeps, mg_levels=self.mg_levels)
        return fld, res

    def initial_state(self) -> OptState:
        spec = self.spec
        x0 = np.full(self.n, spec.vol_bound if spec.kind == "P1" else 1.0)
        c = spec.continuation
        m = 1 + (spec.n_constrained if spec.buckling else 0)
        mma = MMAState(self.n, m, move=spec.move)
        state = OptState(0, x0, c.p_start, c.beta_start, 0, mma)
        if spec.kind == "P2":
            self.set_penalty(c.p_start)
            solid = self.reg(np.ones(self.n), c.eta, c.beta_start)
            res = lba(self.model, solid.x_phys, self.structure.f, self.hier, 1, ell=1)
            state.J_bound = spec.compliance_factor * res.compliance
            state.J_ref = state.J_bound
        return state

    def step(self, state: OptState):
        """One design update; returns the analysis of the current iterate."""
        spec = self.spec
        t0 = time.perf_counter()
        fld, res = self.analyze(state.x_hat, state.p, state.beta)
        t1 = time.perf_counter()
        J = res.compliance
        if state.iteration == 0 and spec.kind == "P1":
            state.J_ref = J
        f = volume_fraction(fld)
        lam = res.modes.blf
        nB = spec.n_constrained
        dV = volume_gradient(fld, self.reg.filter)
        dJ = compliance_gradient(self.model, fld, self.reg.filter, res.u)
        if spec.kind == "P1":
            f0, df0 = J / state.J_ref, dJ / state.J_ref
            g = [f / spec.vol_bound - 1.0]
            dg = [dV / spec.vol_bound]
        else:
            f0, df0 = f, dV
            g = [J / state.J_bound - 1.0]
            dg = [dJ / state.J_bound]
        if spec.buckling:
            # modes without a finite positive load factor cannot bind
            ok = np.flatnonzero(np.isfinite(lam[:nB]) & (lam[:nB] > 0))
            gb, dgl, order = bound_constraints(lam[ok], spec.blf_bound, spec.alpha)
            dlam, _ = blf_gradients(self.model, fld, self.reg.filter, res.u, res.modes.modes[:, ok],
                                    lam[ok], res.ops.G, res.solver)
            g.extend(gb)
            dg.extend((dgl[None, :] * dlam[:, order]).T)
            g.extend([-1.0] * (nB - ok.size))
            dg.extend([np.zeros(self.n)] * (nB - ok.size))
        t2 = time.perf_counter()
        state.mma.move = spec.move * min(1.0, spec.move_beta / max(state.beta, 1e-12))
        x_new = mma_step(state.mma, state.x_hat, np.zeros(self.n), np.ones(self.n), f0, df0,
                         np.array(g), np.vstack(dg))
        x_new = np.clip(x_new, 0.0, 1.0)
        t3 = time.perf_counter()
        change = float(np.max(np.abs(x_new - state.x_hat)))
        fin = np.flatnonzero(np.isfinite(lam[:nB]))
        y = eig_residual(res.modes.modes[:, fin], lam[fin], res.ops)
        state.record(J=J, f=f, lam=lam[:nB].copy(), m_nd=non_discreteness(fld.x_phys[fld.active]),
                     delta=coalescence_measure(lam[:nB], spec.alpha), res=float(np.abs(y).max()) if fin.size else float("nan"),
                     p=state.p, beta=state.beta, change=change)
        tm = dict(res.timing)
        tm.update(iteration=state.iteration, t_sens=t2 - t1, t_mma=t3 - t2, t_step=t3 - t0)
        state.timings.append(tm)
        state.x_hat = x_new
        state.iteration += 1
        state.steps_since_bump += 1
        cont = spec.continuation
        if cont.final(state.p, state.beta):
            state.stagnant = state.stagnant + 1 if change < spec.stagnation_tol else 0
        p, beta, bumped = cont.bump(state.p, state.beta, state.steps_since_bump)
        if bumped:
            state.p, state.beta, state.steps_since_bump = p, beta, 0
        return fld, res


def run(spec: ProblemSpec, structure: Structure, out_dir=None, material=None, resume=None,
        checkpoint_every: int = 25, callback=None, mg_levels=None) -> OptResult:
    """Run the optimization to ``max_iters`` or stagnation at the final continuation stage.

    ``out_dir`` receives ``convergence.csv``, ``timing.csv`` and checkpoints;
    ``resume`` is a checkpoint path to continue from.
    """
    opt = Optimizer(spec, structure, material, mg_levels=mg_levels)
    state = opt.initial_state() if resume is None else load_checkpoint(resume, opt)
    conv = ConvergenceLog(spec.n_constrained)
    for i in range(state.iteration):
        conv.add(state, i)
    fld = res = None
    try:
        while state.iteration < spec.max_iters:
            fld, res = opt.step(state)
            conv.add(state, state.iteration - 1)
            if callback is not None:
                callback(state, fld, res)
            if out_dir is not None and checkpoint_every and state.iteration % checkpoint_every == 0:
                save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), state)
            if state.stagnant >= spec.stagnation_steps:
                state.converged = True
                break
    except Exception:
        if out_dir is not None:
            save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), state)
            conv.write(out_dir)
        raise
    fld, res = opt.analyze(state.x_hat, state.p, state.beta)
    if out_dir is not None:
        save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), state)
        conv.write(out_dir)
    return OptResult(state, fld, res, spec)


class ConvergenceLog:
    """Deterministic per-iteration rows; wall-clock timings go to a separate file."""

    def __init__(self, n_constrained: int):
        self.nB = n_constrained
        self.rows: list[list[str]] = []
        self.timing_rows: list[list[str]] = []

    def header(self):
        return (["iteration", "J", "f"] + [f"lam{i + 1}" for i in range(self.nB)]
                + ["m_nd", "res_inf", "p", "beta", "change"])

    def add(self, state: OptState, i: int):
        h = state.history
        lam = list(h["lam"][i]) + [float("nan")] * (self.nB - len(h["lam"][i]))
        self.rows.append([str(i), f"{h['J'][i]:.10e}", f"{h['f'][i]:.10e}"]
                         + [f"{v:.10e}" for v in lam]
                         + [f"{h['m_nd'][i]:.10e}", f"{h['res'][i]:.6e}", f"{h['p'][i]:.4f}",
                            f"{h['beta'][i]:.4f}", f"{h['change'][i]:.6e}"])
        t = next((t for t in reversed(state.timings) if t["iteration"] == i), None)
        if t is not None:
            self.timing_rows.append([str(i)] + [f"{t[k]:.6f}" for k in ("tLA", "tEA", "tLBA", "eR",
                                                                          "t_sens", "t_mma")])

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        w.writerows(self.rows)
        return buf.getvalue()

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        _atomic_write(os.path.join(out_dir, "convergence.csv"), self.csv_text().encode())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "tLA", "tEA", "tLBA", "eR", "t_sens", "t_mma"])
        w.writerows(self.timing_rows)
        _atomic_write(os.path.join(out_dir, "timing.csv"), buf.getvalue().encode())


def _atomic_write(path, data: bytes):
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_checkpoint(path, state: OptState):
    """Atomic ``.npz`` dump of the design, continuation stage, MMA memory and histories."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    h = state.history
    n_it = len(h["J"])
    nB = max((len(v) for v in h["lam"]), default=0)
    lam = np.full((n_it, nB), np.nan)
    for i, v in enumerate(h["lam"]):
        lam[i, :len(v)] = v
    data = dict(
        version=np.array(CHECKPOINT_VERSION),
        iteration=np.array(state.iteration), x_hat=state.x_hat, p=np.array(state.p),
        beta=np.array(state.beta), steps_since_bump=np.array(state.steps_since_bump),
        stagnant=np.array(state.stagnant), J_ref=np.array(state.J_ref), J_bound=np.array(state.J_bound),
        h_J=np.array(h["J"]), h_f=np.array(h["f"]), h_lam=lam, h_m_nd=np.array(h["m_nd"]),
        h_res=np.array(h["res"]), h_p=np.array(h["p"]), h_beta=np.array(h["beta"]),
        h_change=np.array(h["change"]), **state.mma.to_arrays(),
    )
    buf = io.BytesIO()
    np.savez(buf, **data)
    _atomic_write(path, buf.getvalue())


def load_checkpoint(path, opt: Optimizer) -> OptState:
    with np.load(path) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {int(data['version'])}")
        x = np.array(data["x_hat"])
        if x.size != opt.n:
            raise ConfigError(f"checkpoint has {x.size} design variables, problem has {opt.n}")
        spec = opt.spec
        m = 1 + (spec.n_constrained if spec.buckling else 0)
        mma = MMAState(opt.n, m, move=spec.move)
        mma.load_arrays(data)
        state = OptState(int(data["iteration"]), x, float(data["p"]), float(data["beta"]),
                         int(data["steps_since_bump"]), mma, int(data["stagnant"]), float(data["J_ref"]),
                         float(data["J_bound"]))
        lam = np.array(data["h_lam"])
        state.history = {
            "J": list(data["h_J"]), "f": list(data["h_f"]),
            "lam": [row[~np.isnan(row)] for row in lam], "m_nd": list(data["h_m_nd"]),
            "res": list(data["h_res"]), "p": list(data["h_p"]), "beta": list(data["h_beta"]),
            "change": list(data["h_change"]),
            "delta": [coalescence_measure(row[~np.isnan(row)], spec.alpha) for row in lam],
        }
    opt.set_penalty(state.p)
    return state
