"""Command-line surface: build examples, run the solver, analyze, report.

    stefanlab example NAME [--out DIR] [overrides]
    stefanlab solve (--w0-file F | --w0-const C | --w0-expr E) [--force]
    stefanlab analyze KIND FIELD [--center x,y,t | --center auto-extinction]
    stefanlab report FIELD [--no-figures]

Exit codes: 0 success, 1 hard error, 2 success with non-convergence flags.
Every output file gets a JSON sidecar naming the exact configuration used.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import blowup as bl
from . import examples as ex
from . import freeboundary as fb
from . import functionals as fn
from . import reporting as rp
from .config import ConfigError, RunConfig
from .field import Field, SpaceTimeGrid, SpaceTimePoint, read_field, write_field
from .solver import SolverConfig, run

EXAMPLE_NAMES = ("planar", "tychonoff", "radial", "glued")
ANALYZE_KINDS = ("freeze", "frequency", "blowup", "classify", "taylor",
                 "cleaning", "dimension", "nucleation", "jumps")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stefanlab",
                                 description="supercooled-freezing obstacle-problem laboratory")
    ap.add_argument("--config", type=Path, help="run configuration file")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized analyses")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker threads (recorded; current kernels are sequential)")
    sub = ap.add_subparsers(dest="command", required=True)

    p_ex = sub.add_parser("example", help="build a reference field")
    p_ex.add_argument("name")
    p_ex.add_argument("--t0", type=float)
    p_ex.add_argument("--eps", type=float)
    p_ex.add_argument("--order", type=int)
    p_ex.add_argument("--d", type=int)
    p_ex.add_argument("--amp", type=float)
    p_ex.add_argument("--nmax", type=int)

    p_solve = sub.add_parser("solve", help="run the solver on initial data")
    src = p_solve.add_mutually_exclusive_group(required=True)
    src.add_argument("--w0-file", type=Path, help="SSTF1 field; slice 0 is the initial data")
    src.add_argument("--w0-const", type=float)
    src.add_argument("--w0-expr", type=str, help="expression in x1[,x2,r], e.g. '0.1*(1-r**2)**2'")
    p_solve.add_argument("--force", action="store_true",
                         help="run even when initial-data validation fails")

    p_an = sub.add_parser("analyze", help="run one analysis on a field file")
    p_an.add_argument("kind")
    p_an.add_argument("field", type=Path)
    p_an.add_argument("--center", default="auto-extinction",
                      help="'auto-extinction' or comma-separated x[,y],t")
    p_an.add_argument("--gamma", type=float)
    p_an.add_argument("--global-mode", action="store_true",
                      help="cutoff-free frequency (global solutions)")
    p_an.add_argument("--radii", type=str, help="comma-separated radii")
    p_an.add_argument("--k", type=int, help="taylor degree")
    p_an.add_argument("--beta", type=float)
    p_an.add_argument("--threshold", type=float, help="jump threshold fraction")
    p_an.add_argument("--all-extinction-maxima", action="store_true")
    p_an.add_argument("--points-file", type=Path,
                      help="CSV of x[,y],t rows for dimension estimates")

    p_rep = sub.add_parser("report", help="one-page summary with figures")
    p_rep.add_argument("field", type=Path)
    p_rep.add_argument("--no-figures", action="store_true")
    return ap


def load_config(args) -> RunConfig:
    if args.config is not None:
        cfg = RunConfig.parse(Path(args.config).read_text())
    else:
        cfg = RunConfig()
    return cfg


def grid_from_config(cfg: RunConfig) -> SpaceTimeGrid:
    dim = cfg.get("grid", "dim")
    n1 = cfg.get("grid", "n1")
    n2 = cfg.get("grid", "n2")
    shape = (n1,) if dim == 1 else (n1, n2 if n2 else n1)
    dx = cfg.get("grid", "dx")
    if dx == 0.0:
        dx = cfg.get("grid", "extent") / (n1 - 1)
    dt = cfg.get("grid", "dt")
    if dt == 0.0:
        dt = dx * dx / 2.0
    origin = (cfg.get("grid", "origin_x1"),)
    if dim == 2:
        origin = origin + (cfg.get("grid", "origin_x2"),)
    return SpaceTimeGrid(dim, shape, cfg.get("grid", "nt"), dx, dt, origin,
                         cfg.get("grid", "origin_t"))


def solver_config(cfg: RunConfig, grid: SpaceTimeGrid) -> SolverConfig:
    rd = cfg.get("solver", "radial_dim")
    return SolverConfig(
        grid=grid,
        boundary=cfg.get("solver", "boundary"),
        psor_omega=cfg.get("solver", "psor_omega"),
        psor_tol=cfg.get("solver", "psor_tol"),
        psor_max_iter=cfg.get("solver", "psor_max_iter"),
        enforce_monotone=cfg.get("solver", "enforce_monotone"),
        radial_dim=rd if rd > 0 else None,
    )


def _parse_center(spec: str, fld: Field) -> SpaceTimePoint:
    if spec == "auto-extinction":
        freezing = fb.freezing_time(fld)
        maxima = fb.extinction_maxima(freezing)
        if not maxima:
            raise ValueError("no extinction maxima found for auto-extinction center")
        best = max(maxima, key=lambda m: m["s"])
        return SpaceTimePoint(tuple(best["x"]),
                              fb.refine_vanish_time(fld, best["x"], best["s"]))
    parts = [float(v) for v in spec.split(",")]
    if len(parts) != fld.grid.dim + 1:
        raise ValueError(f"--center needs {fld.grid.dim + 1} comma-separated values")
    return SpaceTimePoint(tuple(parts[:-1]), parts[-1])


def _default_radii(fld: Field, pt: SpaceTimePoint) -> np.ndarray:
    g = fld.grid
    avail = min(
        min(pt.x[a] - g.origin_x[a], g.origin_x[a] + g.extent[a] - pt.x[a])
        for a in range(g.dim)
    )
    r_min = max(3 * g.dx, np.sqrt(4 * g.dt))
    r_max = min(g.domain_radius() / 2, avail / 3.001,
                0.95 * np.sqrt(max(pt.t - g.origin_t, r_min**2 * 1.3)))
    if r_max <= r_min:
        raise ValueError("no resolvable radius range at this center")
    return np.geomspace(r_min, r_max, 8)


def cmd_example(args, cfg: RunConfig, out: Path) -> int:
    name = args.name
    if name not in EXAMPLE_NAMES:
        print(f"unknown example '{name}'; valid names: {', '.join(EXAMPLE_NAMES)}",
              file=sys.stderr)
        return 1
    for key, arg in (("t0", args.t0), ("eps", args.eps), ("order", args.order),
                     ("d", args.d), ("amp", args.amp), ("n_max", args.nmax)):
        if arg is not None:
            cfg.set("example", key, arg)
    cfg.set("example", "name", name)

    if name == "planar":
        grid = _planar_grid(cfg)
        made = ex.make_planar(cfg.get("example", "t0"), grid)
    elif name == "tychonoff":
        grid = _tychonoff_grid(cfg)
        made = ex.make_tychonoff(cfg.get("example", "eps"), cfg.get("example", "order"), grid)
    elif name == "radial":
        grid = _radial_grid(cfg)
        amp = cfg.get("example", "amp")
        sup = cfg.get("example", "support")
        made = ex.make_radial(
            cfg.get("example", "d"),
            lambda r: amp * np.maximum(1.0 - (r / sup) ** 2, 0.0) ** 2,
            grid, embed_box_radius=0.75 * grid.extent[0],
        )
    else:
        grid = _glued_grid(cfg)
        made = ex.make_glued(ex.GluingPlan(cfg.get("example", "n_max")), grid,
                             base_nodes=513)

    path = out / f"{name}.sstf"
    write_field(made.field, path)
    rp.write_sidecar(path, cfg.to_text(), f"example {name}",
                     {"provenance": made.provenance})
    if made.radial_field is not None:
        rpath = out / f"{name}_radial.sstf"
        write_field(made.radial_field, rpath)
        rp.write_sidecar(rpath, cfg.to_text(), f"example {name} (radial coordinates)")
    print(f"wrote {path}")
    return 0


def _planar_grid(cfg: RunConfig) -> SpaceTimeGrid:
    g = grid_from_config(cfg)
    t0 = cfg.get("example", "t0")
    if g.origin_t <= t0 <= g.t_final:
        return g
    # closed-form sampling does not need a parabolic dt; span past t0
    dt = 2.0 * (t0 - g.origin_t) / (g.nt - 1)
    return SpaceTimeGrid(g.dim, g.shape, g.nt, g.dx, dt, g.origin_x, g.origin_t)


def _tychonoff_grid(cfg: RunConfig) -> SpaceTimeGrid:
    g = grid_from_config(cfg)
    ok = (-1 <= g.origin_x[0] and g.origin_x[0] + g.extent[0] <= 1
          and -1 <= g.origin_t and g.t_final <= 1)
    if ok and g.origin_t < 0 < g.t_final:
        return g
    n1 = cfg.get("grid", "n1")
    nt = max(cfg.get("grid", "nt"), 129)
    return SpaceTimeGrid(1, (n1,), nt, 1.0 / (n1 - 1), 0.5 / (nt - 1), (-0.5,), -0.25)


def _radial_grid(cfg: RunConfig) -> SpaceTimeGrid:
    n1 = cfg.get("grid", "n1")
    dx = 1.0 / (n1 - 1)
    dt = dx * dx / 2.0
    amp = cfg.get("example", "amp")
    nt = int(np.ceil(3.0 * amp / dt)) + 2
    return SpaceTimeGrid(1, (n1,), nt, dx, dt, (0.0,), 0.0)


def _glued_grid(cfg: RunConfig) -> SpaceTimeGrid:
    nx = 2201
    dx = 1.6 / (nx - 1)
    dt = 1.2e-6
    nt = int(np.ceil(2.6e-3 / dt))
    return SpaceTimeGrid(1, (nx,), nt, dx, dt, (-0.2,), 0.0)


def _eval_w0_expr(expr: str, grid: SpaceTimeGrid) -> np.ndarray:
    names = {"np": np, "pi": np.pi, "abs": np.abs, "maximum": np.maximum,
             "exp": np.exp, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt}
    if grid.dim == 1:
        x1 = grid.axis_coords(0)
        names.update(x1=x1, x=x1, r=np.abs(x1))
    else:
        x1 = grid.axis_coords(0)[:, None]
        x2 = grid.axis_coords(1)[None, :]
        names.update(x1=x1, x2=x2, r=np.sqrt(x1**2 + x2**2))
    vals = eval(expr, {"__builtins__": {}}, names)  # restricted namespace
    return np.broadcast_to(np.asarray(vals, dtype=float), grid.shape).copy()


def cmd_solve(args, cfg: RunConfig, out: Path) -> int:
    grid = grid_from_config(cfg)
    scfg = solver_config(cfg, grid)
    if args.w0_file is not None:
        src = read_field(args.w0_file)
        if src.grid.shape != grid.shape:
            grid = src.grid
            scfg = solver_config(cfg, grid)
        w0 = src.values[0]
    elif args.w0_const is not None:
        w0 = np.full(grid.shape, args.w0_const)
    else:
        w0 = _eval_w0_expr(args.w0_expr, grid)

    from .solver import validate_initial

    report = validate_initial(w0, grid, d_eff=scfg.radial_dim, boundary=scfg.boundary)
    if not report.passed and not args.force:
        print(f"initial data fails validation: min(w0)={report.min_w0:.6g}, "
              f"laplacian excess={report.max_laplacian_excess:.6g} (tol {report.tol}); "
              "use --force to run anyway", file=sys.stderr)
        return 1
    result = run(w0, scfg, force=True)
    path = out / "solution.sstf"
    write_field(result.field, path)
    rp.write_sidecar(path, cfg.to_text(), "solve", {
        "validation": {"min_w0": report.min_w0,
                       "max_laplacian_excess": report.max_laplacian_excess,
                       "passed": report.passed},
        "extinction_time": result.extinction_time,
        "steps": len(result.reports),
        "nonconverged_steps": int(sum(not r.converged for r in result.reports)),
        "max_residual": max((r.residual for r in result.reports), default=0.0),
    })
    print(f"wrote {path}; extinction: {result.extinction_time}")
    return 2 if result.any_nonconverged else 0


def cmd_analyze(args, cfg: RunConfig, out: Path) -> int:
    kind = args.kind
    if kind not in ANALYZE_KINDS:
        print(f"unknown analysis '{kind}'; valid kinds: {', '.join(ANALYZE_KINDS)}",
              file=sys.stderr)
        return 1
    fld = read_field(args.field)
    g = fld.grid
    gamma = args.gamma if args.gamma is not None else cfg.get("analysis", "gamma")

    if kind == "freeze":
        freezing = fb.freezing_time(fld)
        path = out / "freeze.csv"
        path.write_text(freezing.to_csv())
        rp.write_sidecar(path, cfg.to_text(), "analyze freeze")
        print(f"wrote {path}")
        return 0

    if kind == "nucleation":
        freezing = fb.freezing_time(fld)
        pts = fb.nucleation_scan(fld, freezing)
        path = out / "nucleation.json"
        path.write_text(json.dumps(pts, sort_keys=True, indent=1,
                                   default=rp._json_default) + "\n")
        rp.write_sidecar(path, cfg.to_text(), "analyze nucleation",
                         {"count": len(pts)})
        print(f"wrote {path} ({len(pts)} flags)")
        return 0

    if kind == "jumps":
        freezing = fb.freezing_time(fld)
        thr = args.threshold if args.threshold is not None else cfg.get("analysis", "jump_threshold")
        times = fb.jump_scan(freezing, thr)
        path = out / "jumps.csv"
        path.write_text("t\n" + "".join(f"{t:.17g}\n" for t in times))
        rp.write_sidecar(path, cfg.to_text(), "analyze jumps", {"count": len(times)})
        print(f"wrote {path} ({len(times)} jump times)")
        return 0

    if kind == "dimension":
        if args.points_file is not None:
            pts = np.loadtxt(args.points_file, delimiter=",", ndmin=2)
        else:
            freezing = fb.freezing_time(fld)
            sel = freezing.defined
            coords = [g.axis_coords(a) for a in range(g.dim)]
            cols = np.argwhere(sel)
            pts = np.array([[coords[a][i[a]] for a in range(g.dim)] + [freezing.s[tuple(i)]]
                            for i in cols])
        r_hi = g.domain_radius() / 2
        scales = np.geomspace(max(2 * g.dx, r_hi / 32), r_hi, 6)
        est = fb.parabolic_dimension(pts, scales)
        path = out / "dimension.csv"
        path.write_text(est.to_csv())
        rp.write_sidecar(path, cfg.to_text(), "analyze dimension",
                         {"slope": est.slope, "ci95": list(est.ci95)})
        print(f"wrote {path}; slope = {est.slope:.4f}")
        return 0

    pt = _parse_center(args.center, fld)

    if kind == "frequency":
        radii = (_default_radii(fld, pt) if args.radii is None
                 else np.array([float(v) for v in args.radii.split(",")]))
        p = bl.minus_t_profile(g.dim)
        tr = fn.frequency_trace(fld, pt, p, radii, gamma=gamma,
                                use_cutoff=not args.global_mode)
        path = out / "frequency.csv"
        path.write_text(tr.to_csv())
        audit = fn.monotonicity_audit(tr)
        rp.write_sidecar(path, cfg.to_text(), "analyze frequency", {
            "center": {"x": list(pt.x), "t": pt.t},
            "gamma": gamma, "cutoff": not args.global_mode,
            "lambda": tr.lam, "violations": audit.violations,
            "degenerate": audit.degenerate, "min_phi": audit.min_phi,
        })
        print(f"wrote {path}; lambda = {tr.lam:.4f}")
        return 0

    if kind == "blowup":
        radii = (_default_radii(fld, pt)[:4] if args.radii is None
                 else [float(v) for v in args.radii.split(",")])
        prof = bl.fit_profile(bl.rescale(fld, pt, float(np.max(radii))))
        path = out / "blowup.json"
        rec = {"center": {"x": list(pt.x), "t": pt.t}, "kind": prof.kind,
               "m": prof.m, "e": None if prof.e is None else list(prof.e),
               "A": None if prof.A is None else prof.A.tolist(),
               "residual": prof.residual, "ambiguous": prof.ambiguous}
        path.write_text(json.dumps(rec, sort_keys=True, indent=1,
                                   default=rp._json_default) + "\n")
        rp.write_sidecar(path, cfg.to_text(), "analyze blowup")
        print(f"wrote {path}; kind = {prof.kind}")
        return 0

    if kind == "classify":
        freezing = fb.freezing_time(fld)
        if args.all_extinction_maxima:
            centers = [SpaceTimePoint(tuple(m["x"]),
                                      fb.refine_vanish_time(fld, m["x"], m["s"]))
                       for m in fb.extinction_maxima(freezing)]
        else:
            centers = [pt]
        nucl = fb.nucleation_scan(fld, freezing)
        records = []
        for c in centers:
            rmin = 3 * g.dx
            rmax = min(g.domain_radius() / 2,
                       0.95 * np.sqrt(max(c.t - g.origin_t, 0.0)))
            ladder = [r for r in (rmin, 2 * rmin, 4 * rmin, 8 * rmin) if r <= rmax]
            if not ladder:
                records.append({"point": {"x": list(c.x), "t": c.t},
                                "kind": "undetermined", "notes": ["no resolvable radius"]})
                continue
            avail = min(
                min(c.x[a] - g.origin_x[a], g.origin_x[a] + g.extent[a] - c.x[a])
                for a in range(g.dim)
            )
            fr_min = max(6 * g.dx, np.sqrt(12 * g.dt))
            fr_max = min(rmax, avail / 3.1)
            fr = np.geomspace(fr_min, fr_max, 6) if fr_max > fr_min else None
            cls = bl.classify(fld, c, ladder, nucleation_points=nucl, freq_radii=fr,
                              rank_tol=cfg.get("analysis", "rank_tol"),
                              m_tol=cfg.get("analysis", "m_tol"),
                              residual_tol=cfg.get("analysis", "residual_tol"),
                              drift_tol=cfg.get("analysis", "drift_tol"))
            records.append(json.loads(cls.to_json()))
        path = out / "classify.json"
        path.write_text(json.dumps(records, sort_keys=True, indent=1) + "\n")
        rp.write_sidecar(path, cfg.to_text(), "analyze classify",
                         {"count": len(records)})
        print(f"wrote {path} ({len(records)} points)")
        return 0

    if kind == "taylor":
        k = args.k if args.k is not None else cfg.get("analysis", "taylor_k")
        beta = args.beta if args.beta is not None else cfg.get("analysis", "beta")
        tf = bl.taylor_fit(fld, pt, k, beta)
        from .calpoly import poly_dumps

        path = out / "taylor.json"
        rec = {"center": {"x": list(pt.x), "t": pt.t}, "k": k, "beta": beta,
               "r0": tf.r0, "slope": tf.slope,
               "radii": tf.radii.tolist(), "residuals": tf.residuals.tolist(),
               "dropped_degrees": tf.dropped_degrees,
               "polynomial": poly_dumps(tf.poly)}
        path.write_text(json.dumps(rec, sort_keys=True, indent=1,
                                   default=rp._json_default) + "\n")
        rp.write_sidecar(path, cfg.to_text(), "analyze taylor")
        print(f"wrote {path}; slope = {tf.slope}")
        return 0

    if kind == "cleaning":
        radii = ([float(v) for v in args.radii.split(",")] if args.radii
                 else list(np.geomspace(4 * g.dx, g.domain_radius() / 4, 5)))
        rep_obj = fb.cleaning_check(fld, pt, radii)
        path = out / "cleaning.json"
        rec = {"center": {"x": list(pt.x), "t": pt.t},
               "applicable": rep_obj.applicable, "reason": rep_obj.reason,
               "rows": rep_obj.rows, "all_pass": rep_obj.all_pass}
        path.write_text(json.dumps(rec, sort_keys=True, indent=1,
                                   default=rp._json_default) + "\n")
        rp.write_sidecar(path, cfg.to_text(), "analyze cleaning")
        print(f"wrote {path}; all_pass = {rep_obj.all_pass}")
        return 0

    raise AssertionError(f"unhandled kind {kind}")


def cmd_report(args, cfg: RunConfig, out: Path) -> int:
    fld = read_field(args.field)
    summary = rp.field_report(fld, out, figures=not args.no_figures)
    rp.write_sidecar(out / "report.txt", cfg.to_text(), "report", {"summary": summary})
    print(f"wrote {out / 'report.txt'}")
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "example":
            return cmd_example(args, cfg, out)
        if args.command == "solve":
            return cmd_solve(args, cfg, out)
        if args.command == "analyze":
            return cmd_analyze(args, cfg, out)
        if args.command == "report":
            return cmd_report(args, cfg, out)
        raise AssertionError("unreachable")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
