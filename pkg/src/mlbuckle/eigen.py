"""Generalized buckling eigenproblem ``(K + lam G) psi = 0`` for the lowest positive ``lam``.

Both solvers work on ``nu = 1 / lam`` of the definite pencil ``-G psi = nu K psi``
(``K`` is SPD), so the smallest positive load factors are the largest ``nu``
and DOFs carrying no stress (``nu = 0``) can never be returned.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .errors import FewerPositiveModes, NotConverged, TooLarge

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
CLUSTER_GAP = 1e-10
ORACLE_MAX_DOF = 5000


@dataclass(eq=False)
class EigenPairs:
    """Ascending load factors with ``K``-orthonormal vectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    tol: float
    clusters: list

    def __len__(self):
        return self.values.size

    def take(self, q: int) -> "EigenPairs":
        clusters = [c for c in self.clusters if max(c) < q]
        return EigenPairs(self.values[:q], self.vectors[:, :q], self.residuals[:q], self.tol, clusters)


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def _k_orthonormalize(V, K):
    """Cholesky-based Gram-Schmidt in the ``K`` inner product (column order kept)."""
    M = V.T @ (K @ V)
    M = 0.5 * (M + M.T)
    L = np.linalg.cholesky(M)
    return sla.solve_triangular(L, V.T, lower=True).T


def _clusters(values):
    out = []
    start = 0
    for i in range(1, values.size + 1):
        if i == values.size or abs(values[i] - values[i - 1]) > CLUSTER_GAP * abs(values[i]):
            if i - start > 1:
                out.append(list(range(start, i)))
            start = i
    return out


def _finalize(nu, V, K, G, q, tol, n_free):
    order = np.argsort(-nu)
    nu, V = nu[order], V[:, order]
    scale = np.abs(nu).max() if nu.size else 1.0
    pos = nu > 1e-12 * max(scale, 1e-300)
    nu, V = nu[pos], V[:, pos]
    lam = 1.0 / nu
    V = _k_orthonormalize(V, K) if V.shape[1] else V
    clusters = _clusters(lam)
    V = _fix_signs(V)
    KV = K @ V
    res = np.linalg.norm(KV + (G @ V) * lam, axis=0) / np.maximum(np.linalg.norm(KV, axis=0), 1e-300)
    pairs = EigenPairs(lam, V, res, tol, clusters)
    if lam.size < q:
        raise FewerPositiveModes(
            f"pencil has only {lam.size} positive load factors (asked for {q}, {n_free} free DOFs)",
            pairs,
        )
    return pairs.take(q)


def _free_dofs(K, G, fixed):
    n = K.shape[0]
    mask = np.ones(n, bool)
    if fixed is not None:
        mask[np.asarray(fixed, dtype=np.int64)] = False
    return np.flatnonzero(mask)


def solve_coarse(Kc, Gc, q: int, tol: float = RESIDUAL_TOL, fixed=None, buffer: bool = True,
                 k_solve=None) -> EigenPairs:
    """Lowest ``q`` positive buckling pairs by shift-invert Lanczos (ARPACK).

    ``k_solve`` optionally supplies an existing ``K^{-1}`` action on the full
    DOF space (e.g. a factorization already used for the linear analysis).
    """
    Kc, Gc = sp.csr_matrix(Kc), sp.csr_matrix(Gc)
    free = _free_dofs(Kc, Gc, fixed)
    nf = free.size
    if q > nf:
        raise ValueError(f"q = {q} exceeds the {nf} free DOFs")
    nb = q + max(4, q // 4) if buffer else q
    if nf <= max(3 * nb, 200):
        return dense_oracle(Kc, Gc, q, fixed=fixed)
    nb = min(nb, nf - 2)
    K = Kc[free][:, free].tocsc()
    G = Gc[free][:, free].tocsr()
    if k_solve is not None and fixed is None:
        solve = k_solve
    else:
        lu = splu(K)
        solve = lu.solve
    Minv = LinearOperator(K.shape, matvec=solve, matmat=solve, dtype=float)
    v0 = np.cos(np.arange(nf) * 0.7) + 1.5
    try:
        nu, V = eigsh(-G, k=nb, M=K, Minv=Minv, which="LA", tol=tol * 1e-4, v0=v0,
                      maxiter=max(1000, 20 * nb))
    except ArpackNoConvergence as exc:
        nu, V = exc.eigenvalues, exc.eigenvectors
        pairs = _finalize(nu, V, K, G, min(q, int(np.sum(nu > 0))), tol, nf)
        raise NotConverged(f"only {len(pairs)} eigenpairs converged", _embed(pairs, free, Kc.shape[0]))
    pairs = _finalize(nu, V, K, G, q, tol, nf)
    out = _embed(pairs, free, Kc.shape[0])
    if np.any(out.residuals > 100 * tol):
        log.warning("coarse eigenpairs: max residual %.2e above %.0e", out.residuals.max(), tol)
    return out


def _embed(pairs: EigenPairs, free, n):
    V = np.zeros((n, pairs.vectors.shape[1]))
    V[free] = pairs.vectors
    return EigenPairs(pairs.values, V, pairs.residuals, pairs.tol, pairs.clusters)


def dense_oracle(K, G, q: int, fixed=None) -> EigenPairs:
    """Full dense generalized symmetric solve; reference for the iterative paths."""
    free = _free_dofs(K, G, fixed)
    if free.size > ORACLE_MAX_DOF:
        raise TooLarge(f"dense oracle limited to {ORACLE_MAX_DOF} DOFs, got {free.size}")
    K = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    G = G.toarray() if sp.issparse(G) else np.asarray(G, dtype=float)
    Kf = K[np.ix_(free, free)]
    Gf = G[np.ix_(free, free)]
    nu, V = sla.eigh(-Gf, Kf)
    pairs = _finalize(nu, V, Kf, Gf, q, RESIDUAL_TOL, free.size)
    return _embed(pairs, free, K.shape[0])
