"""Command-line front end: ``mlbuckle optimize | analyze | reinforce | export | selftest``.

Exit codes: 0 success, 1 analysis/runtime failure, 2 usage or validation
error. Failures print ``error: <ErrorClass>: <message>`` on stderr.
``MLBUCKLE_THREADS`` caps the BLAS thread count.
"""
from __future__ import annotations

import os

_threads = os.environ.get("MLBUCKLE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import dataclasses  # noqa: E402
import sys  # noqa: E402

import numpy as np  # noqa: E402

from . import diagnostics as dg  # noqa: E402
from .config import RunConfig, load_config  # noqa: E402
from .errors import ConfigError, FormatError, MlbuckleError, NoLocalizedModes  # noqa: E402
from .fem import FEModel  # noqa: E402
from .io import export_vtk, load_density, save_density  # noqa: E402
from .optimizer import coalescence_measure, run  # noqa: E402
from .pipeline import LbaResult, lba  # noqa: E402
from .grid import build_hierarchy  # noqa: E402
from .regularization import non_discreteness  # noqa: E402


class UsageError(Exception):
    pass


def _parser():
    p = argparse.ArgumentParser(prog="mlbuckle", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, design=True):
        if design:
            sp.add_argument("design", help="density dump (.mlbd)")
        sp.add_argument("--config", required=not design or None, help="run configuration (INI)")
        sp.add_argument("--out", help="output directory")

    o = sub.add_parser("optimize", help="run the topology optimization")
    o.add_argument("--config", required=True)
    o.add_argument("--out")
    o.add_argument("--resume", help="checkpoint to continue from")

    a = sub.add_parser("analyze", help="buckling analysis and diagnostics of a design")
    common(a)
    a.add_argument("--level", type=int, help="coarse level ell (1 = direct fine solve)")
    a.add_argument("--bw", action="store_true", help="sharp 0/1 projection at 0.5 first")

    r = sub.add_parser("reinforce", help="thicken members of localized modes")
    common(r)
    r.add_argument("--level", type=int)
    r.add_argument("--bw", action="store_true")

    e = sub.add_parser("export", help="write a VTK image of a design (and modes with --config)")
    common(e)
    e.add_argument("--level", type=int)
    e.add_argument("--bw", action="store_true")

    s = sub.add_parser("selftest", help="run the built-in oracle checks")
    s.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"optimize": cmd_optimize, "analyze": cmd_analyze, "reinforce": cmd_reinforce,
                "export": cmd_export, "selftest": cmd_selftest}
    try:
        return handlers[args.command](args)
    except (ConfigError, FormatError, UsageError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except MlbuckleError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


# shared helpers


def _load_design(path, cfg: RunConfig | None, bw: bool):
    if not os.path.exists(path):
        raise UsageError(f"design file {path} not found")
    x, nelx, nely = load_density(path)
    if cfg is not None and (nelx, nely) != (cfg.geometry.nelx, cfg.geometry.nely):
        raise FormatError(f"design is {nelx}x{nely}, config grid is {cfg.geometry.nelx}x{cfg.geometry.nely}")
    if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
        raise FormatError("densities must lie in [0, 1]")
    if bw:
        x = (x >= 0.5).astype(float)
    return x, nelx, nely


def _out_dir(args, cfg: RunConfig | None, default="out"):
    d = args.out or (cfg.output.dir if cfg is not None else default)
    os.makedirs(d, exist_ok=True)
    return d


def _levels_for(cfg: RunConfig, ell: int) -> int:
    return max(ell, cfg.analysis.mg_levels or 1)


def analysis_setup(cfg: RunConfig, ell: int):
    structure = cfg.geometry.build()
    model = FEModel(structure.level, cfg.material, structure.passive_solid)
    hier = build_hierarchy((structure.nelx, structure.nely), _levels_for(cfg, ell), structure.h,
                           structure.fixed)
    return structure, model, hier


def run_lba(cfg: RunConfig, structure, model, hier, x, ell, q=None) -> LbaResult:
    a = cfg.analysis
    return lba(model, x, structure.f, hier, q or a.q, ell=ell, sweeps=a.sweeps, tol=a.tol,
               mg_levels=a.mg_levels or None, final=a.final)


def _fmt(v):
    return f"{v:.10e}" if np.isfinite(v) else str(v)


def analysis_sections(cfg, structure, model, hier, x, ell, with_reference=True):
    """Run the analysis (plus the ``ell = 1`` reference) and build the report sections."""
    res = run_lba(cfg, structure, model, hier, x, ell)
    ref = run_lba(cfg, structure, model, hier, x, 1) if with_reference and ell > 1 else res
    lam = res.modes.blf
    sections = {
        "summary": [["key", "value"], ["nelx", structure.nelx], ["nely", structure.nely], ["ell", ell],
                    ["compliance", _fmt(res.compliance)], ["m_nd", _fmt(non_discreteness(x))],
                    ["volume_fraction", _fmt(float(x[structure.active].mean()))]],
        "blf": [["mode", "lambda", "residual_norm"]]
        + [[i + 1, _fmt(l), _fmt(r)] for i, (l, r) in enumerate(zip(lam, res.modes.residual_norms))],
    }
    m = dg.mac(res.modes.modes, ref.modes.modes, ref.ops.K, tol=1e-4)
    sections["mac"] = [["mode"] + [f"ref{r + 1}" for r in range(m.c.shape[1])]] + [
        [j + 1] + [f"{v:.4f}" for v in row] for j, row in enumerate(m.c)]
    sections["pairing"] = [["mode", "reference", "c", "tier"]] + [
        [j + 1, r + 1, f"{c:.4f}", t] for j, r, c, t in m.pairs]
    err = dg.blf_error(lam, ref.modes.blf, m)
    sections["blf_error"] = [["kind", "mode", "reference", "eps"]] + [
        ["raw", i + 1, i + 1, _fmt(e)] for i, e in enumerate(err.raw)] + [
        ["paired", j + 1, r + 1, _fmt(e)] for j, r, e in err.paired]
    fin = lam[np.isfinite(lam)]
    delta = coalescence_measure(fin, cfg.problem.alpha) if fin.size > 1 else []
    sections["delta"] = [["i", "delta"]] + [[i + 2, _fmt(d)] for i, d in enumerate(delta)]
    loc = dg.locality_scores(model, res.modes.modes, x, cfg.analysis.x_bar, cfg.analysis.locality_factor)
    sections["locality"] = [["mode", "tv", "normalized", "flagged"]] + [
        [j + 1, _fmt(s), f"{n:.4f}", int(j in loc.flagged)] for j, (s, n) in enumerate(zip(loc.scores,
                                                                                         loc.normalized))]
    zeta = dg.stress_measures(res.ops, hier, hier.num_levels)
    sections["zeta"] = [["level", "zeta"]] + [[j + 1, _fmt(z)] for j, z in enumerate(zeta)]
    t, t1 = res.timing, ref.timing
    sf = t1["tLBA"] / t["tLBA"] if t["tLBA"] > 0 else float("nan")
    sections["timing"] = [["ell", "tLA", "tEA", "tLBA", "sF", "eR"],
                          [ell, f"{t['tLA']:.4f}", f"{t['tEA']:.4f}", f"{t['tLBA']:.4f}", f"{sf:.3f}",
                           f"{t['eR']:.4f}"]]
    return res, ref, loc, sections


# subcommands


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    structure = cfg.geometry.build()
    if args.resume and not os.path.exists(args.resume):
        raise UsageError(f"checkpoint {args.resume} not found")
    out = _out_dir(args, cfg)
    snap = cfg.output.snapshot_every

    def callback(state, fld, res):
        if snap and state.iteration % snap == 0:
            save_density(os.path.join(out, f"design_{state.iteration:05d}.mlbd"), fld.x_phys,
                         structure.nelx, structure.nely)

    result = run(cfg.problem, structure, out_dir=out, material=cfg.material, resume=args.resume,
                 checkpoint_every=cfg.output.checkpoint_every, callback=callback,
                 mg_levels=cfg.analysis.mg_levels or None)
    x = result.field.x_phys
    save_density(os.path.join(out, "design.mlbd"), x, structure.nelx, structure.nely)
    model = FEModel(structure.level, _final_material(cfg, result), structure.passive_solid)
    hier = build_hierarchy((structure.nelx, structure.nely), _levels_for(cfg, cfg.problem.ell), structure.h,
                           structure.fixed)
    _, _, _, sections = analysis_sections(cfg, structure, model, hier, x, cfg.problem.ell)
    dg.write_report(os.path.join(out, "report.txt"), sections)
    energies = dg.strain_energy_density(model, x, result.analysis.modes.modes)
    export_vtk(os.path.join(out, "design.vtk"), structure.nelx, structure.nely, structure.h, x,
               result.analysis.modes.modes, energies)
    print(f"optimize: {result.state.iteration} iterations, J = {result.analysis.compliance:.6e}, "
          f"lambda_1 = {result.analysis.modes.blf[0]:.6f}, output in {out}")
    return 0


def _final_material(cfg, result):
    return dataclasses.replace(cfg.material, p=result.state.p)


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    x, *_ = _load_design(args.design, cfg, args.bw)
    ell = args.level or cfg.analysis.ell
    if ell < 1:
        raise UsageError("--level must be at least 1")
    structure, model, hier = analysis_setup(cfg, ell)
    out = _out_dir(args, cfg)
    res, ref, loc, sections = analysis_sections(cfg, structure, model, hier, x, ell)
    dg.write_report(os.path.join(out, "report.txt"), sections)
    energies = dg.strain_energy_density(model, x, res.modes.modes)
    export_vtk(os.path.join(out, "modes.vtk"), structure.nelx, structure.nely, structure.h, x,
               res.modes.modes, energies)
    print(f"analyze: lambda_1 = {res.modes.blf[0]:.6f} (ell = {ell}), report in {out}")
    return 0


def cmd_reinforce(args) -> int:
    cfg = load_config(args.config)
    x, nelx, nely = _load_design(args.design, cfg, args.bw)
    ell = args.level or cfg.analysis.ell
    structure, model, hier = analysis_setup(cfg, ell)
    out = _out_dir(args, cfg)
    res = run_lba(cfg, structure, model, hier, x, ell)
    loc = dg.locality_scores(model, res.modes.modes, x, cfg.analysis.x_bar, cfg.analysis.locality_factor)

    def analyze(xn):
        r = run_lba(cfg, structure, model, hier, xn, ell, q=2 * cfg.analysis.q)
        return r.modes.modes, r.modes.blf, r.ops.K

    try:
        xn, dv, rep = dg.reinforce(x, loc, cfg.analysis.r_th, (nelx, nely), analyze, res.modes.modes,
                                   res.modes.blf, frozen=~structure.active)
    except NoLocalizedModes:
        print("reinforce: no localized modes flagged; design unchanged")
        return 0
    save_density(os.path.join(out, "reinforced.mlbd"), xn, nelx, nely)
    sections = {
        "summary": [["key", "value"], ["volume_increase", _fmt(dv)], ["r_th", cfg.analysis.r_th],
                    ["flagged", " ".join(str(j + 1) for j in rep.flagged)]],
        "blf_change": [["mode", "before", "after", "relative_change", "mac", "flagged"]] + [
            [j + 1, _fmt(b), _fmt(a), _fmt(c), f"{m:.4f}", int(j in rep.flagged)]
            for j, (b, a, c, m) in enumerate(zip(rep.blf_before, rep.blf_after, rep.relative_change,
                                                 rep.mac_tracking))],
    }
    dg.write_report(os.path.join(out, "reinforce.txt"), sections)
    print(f"reinforce: {len(rep.flagged)} flagged modes, volume +{100 * dv:.2f}%, output in {out}")
    return 0


def cmd_export(args) -> int:
    cfg = load_config(args.config) if args.config else None
    x, nelx, nely = _load_design(args.design, cfg, args.bw)
    path = args.out or os.path.splitext(args.design)[0] + ".vtk"
    if os.path.isdir(path):
        path = os.path.join(path, "design.vtk")
    modes = energies = None
    h = 1.0
    if cfg is not None:
        ell = args.level or cfg.analysis.ell
        structure, model, hier = analysis_setup(cfg, ell)
        res = run_lba(cfg, structure, model, hier, x, ell)
        modes = res.modes.modes
        energies = dg.strain_energy_density(model, x, modes)
        h = structure.h
    export_vtk(path, nelx, nely, h, x, modes, energies)
    print(f"export: wrote {path}")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all()
    ok = True
    for name, passed, detail in results:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
