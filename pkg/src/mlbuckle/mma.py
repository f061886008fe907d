"""Method of Moving Asymptotes (Svanberg 1987/2007 formulation).

Solves, one iteration at a time,

    min f0(x) + a0 z + sum(c_i y_i + 0.5 d_i y_i^2)
    s.t. f_i(x) - a_i z - y_i <= 0,  xmin <= x <= xmax,  y, z >= 0,

where large ``c`` makes the elastic variables ``y`` vanish whenever the
original problem is feasible. The convex separable subproblem is solved by
a primal-dual interior point method.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import SubproblemInfeasible

log = logging.getLogger(__name__)


@dataclass
class MMAState:
    """History carried between MMA iterations."""

    n: int
    m: int
    iteration: int = 0
    xold1: np.ndarray | None = None
    xold2: np.ndarray | None = None
    low: np.ndarray | None = None
    upp: np.ndarray | None = None
    asyinit: float = 0.5
    asyincr: float = 1.2
    asydecr: float = 0.7
    move: float = 0.2
    a0: float = 1.0
    a: np.ndarray = field(default=None)
    c: np.ndarray = field(default=None)
    d: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.a is None:
            self.a = np.zeros(self.m)
        if self.c is None:
            self.c = np.full(self.m, 1000.0)
        if self.d is None:
            self.d = np.ones(self.m)

    def to_arrays(self) -> dict:
        out = {"mma_iteration": np.array(self.iteration)}
        for k in ("xold1", "xold2", "low", "upp"):
            v = getattr(self, k)
            if v is not None:
                out[f"mma_{k}"] = v
        return out

    def load_arrays(self, data) -> None:
        self.iteration = int(data["mma_iteration"])
        for k in ("xold1", "xold2", "low", "upp"):
            key = f"mma_{k}"
            setattr(self, k, np.array(data[key]) if key in data else None)


def update_asymptotes(state: MMAState, x, xmin, xmax):
    """Asymptote rule: init at ``asyinit`` times the range, then shrink/grow on sign changes."""
    span = xmax - xmin
    if state.iteration <= 2 or state.xold2 is None:
        low = x - state.asyinit * span
        upp = x + state.asyinit * span
    else:
        zz = (x - state.xold1) * (state.xold1 - state.xold2)
        factor = np.ones_like(x)
        factor[zz > 0] = state.asyincr
        factor[zz < 0] = state.asydecr
        low = x - factor * (state.xold1 - state.low)
        upp = x + factor * (state.upp - state.xold1)
        # floor tracks small move limits so oscillations inside the move box still damp
        amin = min(0.01, 0.05 * state.move) * span
        low = np.clip(low, x - 10.0 * span, x - amin)
        upp = np.clip(upp, x + amin, x + 10.0 * span)
    return low, upp


def mma_step(state: MMAState, x, xmin, xmax, f0val, df0dx, fval, dfdx):
    """One MMA update; returns the new ``x`` and advances ``state``.

    ``dfdx`` has shape ``(m, n)``.
    """
    x = np.asarray(x, dtype=float)
    df0dx = np.asarray(df0dx, dtype=float)
    fval = np.atleast_1d(np.asarray(fval, dtype=float))
    dfdx = np.atleast_2d(np.asarray(dfdx, dtype=float))
    if dfdx.shape != (state.m, state.n):
        raise ValueError(f"constraint gradients have shape {dfdx.shape}, expected {(state.m, state.n)}")
    state.iteration += 1
    low, upp = update_asymptotes(state, x, xmin, xmax)
    albefa, raa0 = 0.1, 1e-5
    span = xmax - xmin
    alfa = np.maximum.reduce([low + albefa * (x - low), x - state.move * span, xmin])
    beta = np.minimum.reduce([upp - albefa * (upp - x), x + state.move * span, xmax])

    ux1 = upp - x
    xl1 = x - low
    ux2, xl2 = ux1**2, xl1**2
    uxinv, xlinv = 1.0 / ux1, 1.0 / xl1
    inv_span = 1.0 / np.maximum(span, 1e-5)

    p0 = np.maximum(df0dx, 0.0)
    q0 = np.maximum(-df0dx, 0.0)
    pq0 = 0.001 * (p0 + q0) + raa0 * inv_span
    p0 = (p0 + pq0) * ux2
    q0 = (q0 + pq0) * xl2

    P = np.maximum(dfdx, 0.0)
    Q = np.maximum(-dfdx, 0.0)
    PQ = 0.001 * (P + Q) + raa0 * inv_span[None, :]
    P = (P + PQ) * ux2[None, :]
    Q = (Q + PQ) * xl2[None, :]
    b = P @ uxinv + Q @ xlinv - fval

    xnew, y, z = subsolve(state.m, state.n, low, upp, alfa, beta, p0, q0, P, Q, state.a0,
                          state.a, b, state.c, state.d)
    if np.any(y > 1e-6):
        log.info("MMA elastic variables active (max y = %.2e)", float(y.max()))
    state.xold2 = state.xold1
    state.xold1 = x.copy()
    state.low, state.upp = low, upp
    return xnew


def subsolve(m, n, low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d, epsimin=1e-9, max_outer=200):
    """Primal-dual Newton solve of the MMA subproblem; returns ``(x, y, z)``."""
    een = np.ones(n)
    eem = np.ones(m)
    epsi = 1.0
    x = 0.5 * (alfa + beta)
    y = eem.copy()
    z = 1.0
    lam = eem.copy()
    xsi = np.maximum(een / (x - alfa), een)
    eta = np.maximum(een / (beta - x), een)
    mu = np.maximum(eem, 0.5 * c)
    zet = 1.0
    s = eem.copy()
    outer = 0
    while epsi > epsimin:
        outer += 1
        if outer > max_outer:
            raise SubproblemInfeasible("MMA subproblem interior point did not converge")
        epsvecn = epsi * een
        epsvecm = epsi * eem
        residunorm, residumax = _kkt_residual(x, y, z, lam, xsi, eta, mu, zet, s, low, upp, alfa, beta,
                                              p0, q0, P, Q, a0, a, b, c, d, epsi)
        ittt = 0
        while residumax > 0.9 * epsi and ittt < 200:
            ittt += 1
            ux1 = upp - x
            xl1 = x - low
            ux2, xl2 = ux1**2, xl1**2
            ux3, xl3 = ux1 * ux2, xl1 * xl2
            uxinv1, xlinv1 = een / ux1, een / xl1
            uxinv2, xlinv2 = een / ux2, een / xl2
            plam = p0 + P.T @ lam
            qlam = q0 + Q.T @ lam
            gvec = P @ uxinv1 + Q @ xlinv1
            GG = P * uxinv2[None, :] - Q * xlinv2[None, :]
            dpsidx = plam / ux2 - qlam / xl2
            delx = dpsidx - epsvecn / (x - alfa) + epsvecn / (beta - x)
            dely = c + d * y - lam - epsvecm / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsvecm / lam
            diagx = 2.0 * (plam / ux3 + qlam / xl3) + xsi / (x - alfa) + eta / (beta - x)
            diagxinv = een / diagx
            diagy = d + mu / y
            diagyinv = eem / diagy
            diaglam = s / lam
            diaglamyi = diaglam + diagyinv
            # reduced system in (dlam, dz); m is small
            blam = dellam + dely / diagy - GG @ (delx / diagx)
            bb = np.concatenate([blam, [delz]])
            Alam = np.diag(diaglamyi) + (GG * diagxinv[None, :]) @ GG.T
            AA = np.zeros((m + 1, m + 1))
            AA[:m, :m] = Alam
            AA[:m, m] = a
            AA[m, :m] = a
            AA[m, m] = -zet / z
            solut = np.linalg.solve(AA, bb)
            dlam = solut[:m]
            dz = solut[m]
            dx = -delx / diagx - (GG.T @ dlam) / diagx
            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsvecn / (x - alfa) - (xsi * dx) / (x - alfa)
            deta = -eta + epsvecn / (beta - x) + (eta * dx) / (beta - x)
            dmu = -mu + epsvecm / y - (mu * dy) / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsvecm / lam - (s * dlam) / lam
            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            stepxx = -1.01 * dxx / xx
            stmxx = np.max(stepxx)
            stepalfa = -1.01 * dx / (x - alfa)
            stmalfa = np.max(stepalfa)
            stepbeta = 1.01 * dx / (beta - x)
            stmbeta = np.max(stepbeta)
            steg = 1.0 / max(stmalfa, stmbeta, stmxx, 1.0)
            xold, yold, zold = x, y, z
            lamold, xsiold, etaold, muold, zetold, sold = lam, xsi, eta, mu, zet, s
            itto = 0
            resinew = 2.0 * residunorm
            while resinew > residunorm and itto < 50:
                itto += 1
                x = xold + steg * dx
                y = yold + steg * dy
                z = zold + steg * dz
                lam = lamold + steg * dlam
                xsi = xsiold + steg * dxsi
                eta = etaold + steg * deta
                mu = muold + steg * dmu
                zet = zetold + steg * dzet
                s = sold + steg * ds
                resinew, _ = _kkt_residual(x, y, z, lam, xsi, eta, mu, zet, s, low, upp, alfa, beta,
                                           p0, q0, P, Q, a0, a, b, c, d, epsi)
                steg *= 0.5
            residunorm = resinew
            _, residumax = _kkt_residual(x, y, z, lam, xsi, eta, mu, zet, s, low, upp, alfa, beta,
                                         p0, q0, P, Q, a0, a, b, c, d, epsi)
        epsi *= 0.1
    return x, y, z


def _kkt_residual(x, y, z, lam, xsi, eta, mu, zet, s, low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c,
                  d, epsi):
    ux1 = upp - x
    xl1 = x - low
    plam = p0 + P.T @ lam
    qlam = q0 + Q.T @ lam
    gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
    dpsidx = plam / ux1**2 - qlam / xl1**2
    rex = dpsidx - xsi + eta
    rey = c + d * y - mu - lam
    rez = a0 - zet - a @ lam
    relam = gvec - a * z - y + s - b
    rexsi = xsi * (x - alfa) - epsi
    reeta = eta * (beta - x) - epsi
    remu = mu * y - epsi
    rezet = zet * z - epsi
    res = s * lam - epsi
    residu = np.concatenate([rex, rey, [rez], relam, rexsi, reeta, remu, [rezet], res])
    return float(np.linalg.norm(residu)), float(np.max(np.abs(residu)))
