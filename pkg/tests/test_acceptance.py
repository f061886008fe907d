"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed in the summary.

The full module takes roughly 15 minutes on one core (the P1 run and the
P2 sweep dominate). Select with ``pytest tests/test_acceptance.py``.
"""
import filecmp
import time

import numpy as np
import pytest

from mlbuckle.cli import main
from mlbuckle.diagnostics import locality_scores, mac, read_report
from mlbuckle.eigen import solve_coarse
from mlbuckle.fem import FEModel, MaterialModel
from mlbuckle.io import save_density
from mlbuckle.optimizer import Continuation, ProblemSpec, run
from mlbuckle.pipeline import default_mg_levels, lba, make_hierarchy
from mlbuckle.problems import (cantilever_column, notched_plate, thin_bar_design, two_bar_frame)
from mlbuckle.selftest import gauss_seidel_sweep
from mlbuckle.sensitivity import finite_difference_check
from mlbuckle.solvers import MgPreconditioner, kaczmarz_smooth, mg_pcg

from helpers import GradientProblem

pytestmark = pytest.mark.slow

RESULTS = {}

# desk continuation: p 3 -> 6 in steps of 0.5 every 20, beta 1 -> 32 doubling every 25
DESK_SCHEDULE = Continuation(p_start=3, p_step=0.5, p_every=20, p_max=6, beta_start=1, beta_every=25,
                             beta_max=32)


def record(n, ok, detail):
    line = f"acceptance {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def p1_spec(max_iters=300, r_min=2.5, **kw):
    return ProblemSpec("P1", vol_bound=0.16, blf_bound=1.0, n_constrained=6, q=12, ell=2, r_min=r_min,
                       max_iters=max_iters, continuation=DESK_SCHEDULE, **kw)


@pytest.fixture(scope="module")
def p1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("p1")
    structure = two_bar_frame(84, 36)
    res = run(p1_spec(), structure, out_dir=str(out))
    return structure, res, out


@pytest.fixture(scope="module")
def fine_frame(p1_run):
    """The optimized frame refined to 168 x 72 (each element split into 2 x 2)."""
    _, res, _ = p1_run
    x = res.field.x_phys.reshape(84, 36).repeat(2, axis=0).repeat(2, axis=1).ravel()
    s = two_bar_frame(168, 72)
    model = FEModel(s.level, MaterialModel(p=DESK_SCHEDULE.p_max), s.passive_solid)
    return s, model, x


def test_1_multilevel_accuracy(fine_frame):
    rows = []
    s, model, x = fine_frame
    col = cantilever_column(16, 256, width=16.0, P=1.0)
    col_model = FEModel(col.level, MaterialModel(), col.passive_solid)
    for name, st, mdl, xx in (("two-bar 168x72", s, model, x),
                              ("column 16x256", col, col_model, np.ones(col.num_elements))):
        t = time.perf_counter()
        res = lba(mdl, xx, st.f, make_hierarchy(st, 2), 6, ell=2)
        elapsed = time.perf_counter() - t
        ref = solve_coarse(res.ops.K, res.ops.G, 1, fixed=st.fixed).values[0]
        rows.append((name, abs(1 - res.modes.blf[0] / ref), elapsed))
    ok = all(e <= 0.02 and t <= 60 for _, e, t in rows)
    record(1, ok, "; ".join(f"{n}: |1-lam~/lam| = {e:.2e} in {t:.1f}s" for n, e, t in rows))


def test_2_euler_column():
    # Richardson extrapolation over h, h/2, h/4 (Q6 error ~ h^2)
    lams = []
    for k in (1, 2, 4):
        s = cantilever_column(2 * k, 48 * k, width=1.0, P=1.0)
        model = FEModel(s.level, MaterialModel(), s.passive_solid)
        res = lba(model, np.ones(s.num_elements), s.f, make_hierarchy(s, 1), 1, ell=1)
        lams.append(res.modes.blf[0])
        euler = s.meta["euler_blf"]
    extrap = (4 * lams[2] - lams[1]) / 3
    rel = extrap / euler - 1
    record(2, abs(rel) <= 0.03, f"extrapolated lam_1 / Euler - 1 = {rel:+.2e}")


def test_3_gradients_fd():
    t = time.perf_counter()
    gp = GradientProblem(12, 6, ell=1, q=4)
    dJ, dlam, res = gp.gradients(gp.x0, k=2)
    lam = res.modes.blf
    assert lam[1] / lam[0] > 1.05, "fixture modes must be simple for a gradient check"
    idx = range(gp.s.num_elements)
    worst = {}
    worst["J"] = max(r.rel_error for r in finite_difference_check(gp.compliance, gp.x0, dJ, idx))
    for i in range(2):
        rows = finite_difference_check(lambda x: gp.blf(x, i), gp.x0, dlam[:, i], idx)
        worst[f"lam_{i + 1}"] = max(r.rel_error for r in rows)
    elapsed = time.perf_counter() - t
    ok = len(idx) >= 50 and max(worst.values()) <= 1e-4 and elapsed <= 300
    record(3, ok, f"{len(idx)} variables, worst relative errors "
                  + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {elapsed:.0f}s")


def test_4_cost_scaling(fine_frame):
    s, model, x = fine_frame
    hier = make_hierarchy(s, 3)
    mg = default_mg_levels(s.nelx, s.nely)
    eR, tLBA = {}, {}
    for ell in (1, 2, 3):
        # best of two runs to suppress scheduler noise
        runs = [lba(model, x, s.f, hier, 12, ell=ell, mg_levels=mg).timing for _ in range(2)]
        best = min(runs, key=lambda t: t["tLBA"])
        eR[ell], tLBA[ell] = best["eR"], best["tLBA"]
    ok = eR[1] > eR[2] > eR[3] and tLBA[3] <= tLBA[1] / 3
    record(4, ok, "eR " + " > ".join(f"{eR[k]:.3f}" for k in (1, 2, 3))
           + f"; tLBA(1) = {tLBA[1]:.2f}s, tLBA(3) = {tLBA[3]:.2f}s")


def test_5_localized_modes_filtered():
    s = notched_plate()
    model = FEModel(s.level, MaterialModel(), s.passive_solid)
    x = np.where(s.passive_void, 0.0, 1.0)
    hier = make_hierarchy(s, 3)
    r1 = lba(model, x, s.f, hier, 12, ell=1)
    r3 = lba(model, x, s.f, hier, 12, ell=3)
    f1 = locality_scores(model, r1.modes.modes, x).flagged
    f3 = locality_scores(model, r3.modes.modes, x).flagged
    m = mac(r3.modes.modes, r1.modes.modes[:, f1], r1.ops.K) if f1.size else None
    matched = m.count(0.95) if m is not None else 0
    ok = f3.size < f1.size and matched == 0
    record(5, ok, f"flagged modes ell=1: {f1.size}, ell=3: {f3.size}; "
                  f"ell=3 modes matching a flagged ell=1 mode (MAC >= 0.95): {matched}")


def test_6_p1_and_p2(p1_run):
    structure, res, _ = p1_run
    st = res.state
    lam1 = float(res.analysis.modes.blf[0])
    f = st.history["f"][-1]
    mnd = st.history["m_nd"][-1]
    done = st.p == DESK_SCHEDULE.p_max and st.beta == DESK_SCHEDULE.beta_max
    ok1 = done and lam1 >= 0.98 and abs(f - 0.16) <= 1e-3 and mnd <= 0.05
    # P2 sweep on a clamped-free column
    col = cantilever_column(16, 48, width=16.0, P=0.09)
    fixed_p = Continuation(p_start=3, p_step=0.0, p_every=10**6, p_max=3, beta_start=1, beta_every=10**6,
                           beta_max=1)
    vols = []
    for lb in (0.25, 0.5, 0.75, 1.0):
        spec = ProblemSpec("P2", vol_bound=0.16, blf_bound=lb, n_constrained=6, q=12, ell=2, r_min=1.5,
                           max_iters=80, continuation=fixed_p)
        vols.append(run(spec, col).state.history["f"][-1])
    ok2 = all(a <= b for a, b in zip(vols, vols[1:]))
    record(6, ok1 and ok2, f"P1: lam~_1 = {lam1:.4f}, f = {f:.4f}, m_nd = {100 * mnd:.2f}% at "
                           f"p = {st.p:g}, beta = {st.beta:g}; P2 volume fractions "
                           + " <= ".join(f"{v:.4f}" for v in vols))


def test_7_solvers(p1_run, fine_frame):
    structure, res, _ = p1_run
    s2, model2, x2 = fine_frame
    col = cantilever_column(16, 256, width=16.0, P=1.0)
    notch = notched_plate()
    systems = [
        ("frame uniform", structure, np.full(structure.num_elements, 0.16), 3.0),
        ("frame optimized", structure, res.field.x_phys, 6.0),
        ("frame 168x72", s2, x2, 6.0),
        ("column", col, np.ones(col.num_elements), 3.0),
        ("notched plate", notch, np.where(notch.passive_void, 0.0, 1.0), 3.0),
    ]
    worst_it, worst_ratio = 0, 0.0
    from scipy.sparse.linalg import splu

    for name, s, x, p in systems:
        model = FEModel(s.level, MaterialModel(p=p), s.passive_solid)
        K = model.stiffness(x)
        hier = make_hierarchy(s, default_mg_levels(s.nelx, s.nely))
        u, rep = mg_pcg(K, s.f, MgPreconditioner(hier, K), tol=1e-5)
        e = u - splu(K.tocsc()).solve(s.f)
        err = float(np.sqrt(e @ (K @ e)))
        worst_it = max(worst_it, rep.iterations)
        worst_ratio = max(worst_ratio, err / rep.energy_error_estimate)
    rng = np.random.default_rng(0)
    A = rng.standard_normal((10, 10))
    A = A + A.T
    b, y0 = rng.standard_normal(10), rng.standard_normal(10)
    v = kaczmarz_smooth(A, A.T @ y0, sweeps=1, B=b, symmetric=False)
    kz = float(np.abs(v - A.T @ gauss_seidel_sweep(A @ A.T, y0, b)).max())
    ok = worst_it <= 30 and worst_ratio <= 2.0 and kz <= 1e-12
    record(7, ok, f"{len(systems)} systems: max {worst_it} PCG iterations, max true/estimated energy "
                  f"error {worst_ratio:.2f}; Kaczmarz vs Gauss-Seidel on AA^T {kz:.1e}")


def test_8_reinforce(tmp_path):
    ini = tmp_path / "thin_bar.ini"
    ini.write_text("[geometry]\nkind = thin_bar\nnelx = 64\nnely = 256\nF = 1.0\n"
                   "[analysis]\nq = 12\nr_th = 1.5\n")
    from mlbuckle.config import load_config

    s = load_config(ini).geometry.build()
    design = tmp_path / "thin_bar.mlbd"
    save_density(design, thin_bar_design(s), s.nelx, s.nely)
    assert main(["reinforce", str(design), "--config", str(ini), "--level", "1", "--out", str(tmp_path)]) == 0
    rep = read_report(tmp_path / "reinforce.txt")
    dv = float(dict(rep["summary"][1:])["volume_increase"])
    rows = [(int(r[0]), float(r[3]), r[5] == "1") for r in rep["blf_change"][1:]]
    flagged = [c for _, c, fl in rows if fl]
    other = [abs(c) for _, c, fl in rows if not fl]
    ok = (len(flagged) > 0 and min(flagged) >= 0.05 and dv <= 0.02
          and all(c < min(flagged) for c in other))
    record(8, ok, f"{len(flagged)} flagged modes rise {100 * min(flagged):.1f}%..{100 * max(flagged):.1f}%, "
                  f"volume +{100 * dv:.3f}%, max unflagged change {100 * max(other, default=0):.2f}%")


def test_9_reproducible(tmp_path):
    s = two_bar_frame(42, 18)
    spec = p1_spec(max_iters=40, r_min=1.25)
    for name in ("a", "b"):
        run(spec, s, out_dir=str(tmp_path / name))
    same = filecmp.cmp(tmp_path / "a" / "convergence.csv", tmp_path / "b" / "convergence.csv", shallow=False)
    record(9, same, "two 40-iteration P1 runs on the 42x18 frame: convergence.csv "
                    + ("byte-identical" if same else "differs"))
