"""One-page field reports: text summary, delimited data, and figures.

The report path renders matplotlib figures to files next to the CSV
output: the freezing-time graph, a mid-evolution temperature slice, and
the boundary-speed map.  All floats in delimited output carry 17
significant digits so reruns are byte-identical.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import blowup as bl
from . import freeboundary as fb
from .field import Field, SpaceTimePoint, eta_slice


def fmt(v) -> str:
    return f"{float(v):.17g}"


def write_sidecar(path: Path, config_text: str, command: str, extra: dict | None = None) -> None:
    rec = {"command": command, "config": config_text}
    if extra:
        rec.update(extra)
    Path(str(path) + ".json").write_text(json.dumps(rec, sort_keys=True, indent=1,
                                                    default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def field_report(fld: Field, out_dir: Path, stem: str = "report",
                 figures: bool = True, classify_cap: int = 8) -> dict:
    """Summarize a field: extinction, boundary stats, classified maxima.

    Writes ``<stem>.txt``, ``<stem>_freeze.csv``, and (unless disabled)
    PNG figures alongside.  Returns the summary dictionary.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    g = fld.grid
    freezing = fb.freezing_time(fld)
    stats = fb.boundary_stats(fld, freezing)
    maxima = fb.extinction_maxima(freezing)
    jumps = fb.jump_scan(freezing)
    nucl = fb.nucleation_scan(fld, freezing)

    all_frozen_k = None
    for k in range(g.nt):
        if not (fld.values[k] > 0).any():
            all_frozen_k = k
            break
    extinction = g.origin_t + all_frozen_k * g.dt if all_frozen_k is not None else None

    kinds: dict[str, int] = {}
    classified = []
    for m in maxima[:classify_cap]:
        t0 = fb.refine_vanish_time(fld, m["x"], m["s"])
        pt = SpaceTimePoint(tuple(m["x"]), t0)
        rmin = max(3 * g.dx, np.sqrt(4 * g.dt))
        rmax = min(g.domain_radius() / 2, 0.95 * np.sqrt(max(m["s"] - g.origin_t, 0.0)))
        if rmax < rmin * 1.5:
            continue
        ladder = [r for r in (rmin, 2 * rmin, 4 * rmin, 8 * rmin) if r <= rmax]
        try:
            cls = bl.classify(fld, pt, ladder)
        except Exception as exc:  # report-only path: record, don't fail
            kinds["error"] = kinds.get("error", 0) + 1
            classified.append({"x": m["x"], "s": m["s"], "error": str(exc)})
            continue
        key = cls.kind if cls.kind != "singular" else f"singular(freq={cls.frequency})"
        kinds[key] = kinds.get(key, 0) + 1
        classified.append(json.loads(cls.to_json()))

    summary = {
        "grid": {"dim": g.dim, "shape": list(g.shape), "nt": g.nt,
                 "dx": g.dx, "dt": g.dt},
        "sup_norm": fld.sup_norm(),
        "monotone_ok": fld.monotone_ok,
        "max_mono_violation": fld.max_mono_violation,
        "extinction_time": extinction,
        "nondegeneracy_c": stats.nondegeneracy_c,
        "lipschitz_global": stats.lipschitz_global,
        "speed_ratio_sup": stats.speed_ratio_sup,
        "speed_ratio_exceedances": stats.speed_ratio_exceedances,
        "n_extinction_maxima": len(maxima),
        "jump_times": jumps,
        "n_nucleation_flags": len(nucl),
        "classified_kinds": kinds,
        "classified_points": classified,
    }

    lines = [
        "field report",
        "============",
        f"grid: dim={g.dim} shape={g.shape} nt={g.nt} dx={fmt(g.dx)} dt={fmt(g.dt)}",
        f"sup |w| = {fmt(fld.sup_norm())}",
        f"monotone: {'ok' if fld.monotone_ok else 'VIOLATED'} "
        f"(max violation {fmt(fld.max_mono_violation)})",
        f"extinction time: {fmt(extinction) if extinction is not None else 'not reached'}",
        f"nondegeneracy constant estimate: {fmt(stats.nondegeneracy_c)}",
        f"freezing-time Lipschitz constant: {fmt(stats.lipschitz_global)}",
        f"speed ratio sup |grad w|/eta: {fmt(stats.speed_ratio_sup)} "
        f"({stats.speed_ratio_exceedances} exceedances)",
        f"jump times: {', '.join(fmt(t) for t in jumps) if jumps else 'none'}",
        f"nucleation flags: {len(nucl)}",
        "classified extinction maxima:",
    ]
    for rec in classified:
        if "error" in rec:
            lines.append(f"  x={rec['x']} s={fmt(rec['s'])}: error {rec['error']}")
        else:
            lines.append(
                f"  x={rec['point']['x']} t={fmt(rec['point']['t'])}: {rec['kind']}"
                + (f" stratum={rec['stratum']} family={rec['family']}"
                   f" frequency={rec['frequency']}" if rec["kind"] == "singular" else "")
            )
    (out_dir / f"{stem}.txt").write_text("\n".join(lines) + "\n")
    (out_dir / f"{stem}_freeze.csv").write_text(freezing.to_csv())

    if figures:
        render_figures(fld, freezing, stats, out_dir, stem)
    return summary


def render_figures(fld: Field, freezing: fb.FreezingTime, stats: fb.BoundaryStats,
                   out_dir: Path, stem: str) -> list[str]:
    g = fld.grid
    written = []

    fig, ax = plt.subplots(figsize=(5.0, 3.4), dpi=120)
    if g.dim == 1:
        ax.plot(g.axis_coords(0), freezing.s, lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel("freezing time s(x)")
    else:
        im = ax.imshow(freezing.s.T, origin="lower",
                       extent=[g.origin_x[0], g.origin_x[0] + g.extent[0],
                               g.origin_x[1], g.origin_x[1] + g.extent[1]])
        fig.colorbar(im, ax=ax, label="s(x)")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    ax.set_title("freezing time")
    fig.tight_layout()
    p = out_dir / f"{stem}_freezing.png"
    fig.savefig(p)
    plt.close(fig)
    written.append(p.name)

    k_mid = max(1, g.nt // 3)
    eta = eta_slice(fld, k_mid)
    fig, ax = plt.subplots(figsize=(5.0, 3.4), dpi=120)
    if g.dim == 1:
        ax.plot(g.axis_coords(0), eta, lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel("eta")
    else:
        im = ax.imshow(eta.T, origin="lower",
                       extent=[g.origin_x[0], g.origin_x[0] + g.extent[0],
                               g.origin_x[1], g.origin_x[1] + g.extent[1]])
        fig.colorbar(im, ax=ax, label="eta")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    ax.set_title(f"temperature eta at t = {g.origin_t + k_mid * g.dt:.4g}")
    fig.tight_layout()
    p = out_dir / f"{stem}_eta.png"
    fig.savefig(p)
    plt.close(fig)
    written.append(p.name)

    fig, ax = plt.subplots(figsize=(5.0, 3.4), dpi=120)
    if g.dim == 1:
        ax.plot(g.axis_coords(0), stats.grad_s, lw=1.2)
        ax.set_xlabel("x")
        ax.set_ylabel("|grad s|")
    else:
        im = ax.imshow(stats.grad_s.T, origin="lower",
                       extent=[g.origin_x[0], g.origin_x[0] + g.extent[0],
                               g.origin_x[1], g.origin_x[1] + g.extent[1]])
        fig.colorbar(im, ax=ax, label="|grad s|")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    ax.set_title("boundary slowness |grad s| (0 = infinite speed)")
    fig.tight_layout()
    p = out_dir / f"{stem}_grad_s.png"
    fig.savefig(p)
    plt.close(fig)
    written.append(p.name)
    return written
