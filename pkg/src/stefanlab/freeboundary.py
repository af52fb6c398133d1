"""Free-boundary extraction and quantitative boundary measurements.

The liquid set of a monotone field is {t < s(x)}; this module extracts the
freezing-time graph s, measures nondegeneracy / Lipschitz / speed-ratio
statistics, detects nucleation and whole-slab jumps, runs the two-sided
cleaning check near top-stratum candidates, and estimates parabolic
box-counting dimension of point sets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import Field, SpaceTimePoint, interpolate_slice


@dataclass
class FreezingTime:
    """First-vanishing-time map s(x) with sub-dt linear refinement.

    ``s`` is NaN where undefined; the masks explain why (column positive
    for the whole run, or frozen from the first slice).
    """

    grid: object
    s: np.ndarray
    never_freezes: np.ndarray
    frozen_from_start: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return ~(self.never_freezes | self.frozen_from_start)

    def to_csv(self) -> str:
        g = self.grid
        header = ["x1"] + (["x2"] if g.dim == 2 else []) + ["s", "never_freezes", "frozen_from_start"]
        lines = [",".join(header)]
        it = np.ndindex(*self.s.shape)
        for idx in it:
            coords = [g.origin_x[a] + g.dx * idx[a] for a in range(g.dim)]
            row = [f"{c:.17g}" for c in coords]
            row.append(f"{self.s[idx]:.17g}")
            row.append(str(int(self.never_freezes[idx])))
            row.append(str(int(self.frozen_from_start[idx])))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


@dataclass
class BoundaryStats:
    grad_s: np.ndarray
    lipschitz_global: float
    lipschitz_local: np.ndarray
    nondegeneracy_c: float
    nondegeneracy_samples: list
    speed_ratio_sup: float
    speed_ratio_exceedances: int
    eps_div: float


@dataclass
class DimensionEstimate:
    scales: np.ndarray
    counts: np.ndarray
    slope: float
    intercept: float
    stderr: float
    ci95: tuple[float, float]
    residuals: np.ndarray

    def to_csv(self) -> str:
        lines = ["r,N"]
        for r, n in zip(self.scales, self.counts):
            lines.append(f"{r:.17g},{n}")
        lines.append(f"# slope={self.slope:.17g} ci95=({self.ci95[0]:.17g},{self.ci95[1]:.17g})")
        return "\n".join(lines) + "\n"


def freezing_time(fld: Field) -> FreezingTime:
    """Per-column scan for the first time w reaches 0, with linear refinement.

    Uses the structure w_t <= 0: the first k with w[k] <= 0 and w[k-1] > 0
    gives s = t_{k-1} + dt * w_{k-1} / (w_{k-1} - max(w_k, 0)).
    """
    g = fld.grid
    vals = fld.values
    pos = vals > 0.0
    never = pos.all(axis=0)
    frozen0 = ~pos[0]
    s = np.full(g.shape, np.nan)
    # first nonpositive index along time for columns that start positive
    nonpos = ~pos
    k_first = np.argmax(nonpos, axis=0)  # 0 where column all-positive, but masked
    it = np.ndindex(*g.shape)
    for idx in it:
        if never[idx] or frozen0[idx]:
            continue
        k = int(k_first[idx])
        w_prev = vals[(k - 1,) + idx]
        w_k = max(float(vals[(k,) + idx]), 0.0)
        t_prev = g.origin_t + (k - 1) * g.dt
        s[idx] = t_prev + g.dt * w_prev / (w_prev - w_k) if w_prev > w_k else t_prev
    return FreezingTime(grid=g, s=s, never_freezes=never, frozen_from_start=frozen0)


def _grad_centered(s: np.ndarray, dx: float) -> np.ndarray:
    """|grad s| by centered differences; NaN where neighbors are undefined."""
    if s.ndim == 1:
        g = np.full_like(s, np.nan)
        g[1:-1] = np.abs(s[2:] - s[:-2]) / (2 * dx)
        return g
    gx = np.full_like(s, np.nan)
    gy = np.full_like(s, np.nan)
    gx[1:-1, :] = (s[2:, :] - s[:-2, :]) / (2 * dx)
    gy[:, 1:-1] = (s[:, 2:] - s[:, :-2]) / (2 * dx)
    return np.sqrt(gx**2 + gy**2)


def boundary_stats(fld: Field, freezing: FreezingTime,
                   window_radii=None, max_points: int = 4000) -> BoundaryStats:
    """Nondegeneracy, Lipschitz, and speed-ratio measurements.

    The nondegeneracy constant is the minimum over boundary points x0 and
    window radii r of sup_{B_r(x0)} w(., s(x0) - r^2) / r^2, using radii up
    to the largest one whose backward slice and ball stay inside the domain;
    on large grids the points are subsampled with a deterministic stride
    (at most ``max_points``).  Speed ratios |grad w| / max(eta, eps_div)
    are sampled on the liquid side just below the boundary; eta below the
    floor with |grad w| > 0 counts as an exceedance (the temperature is
    genuinely discontinuous at dynamic singular points, so infinities there
    are signal).
    """
    g = fld.grid
    s = freezing.s
    grad_s = _grad_centered(s, g.dx)

    # Lipschitz constants from axis-neighbor difference quotients
    quotients = []
    local = np.zeros_like(s)
    for axis in range(g.dim):
        d = np.abs(np.diff(s, axis=axis)) / g.dx
        quotients.append(d)
        pad_lo = [(0, 0)] * g.dim
        pad_hi = [(0, 0)] * g.dim
        pad_lo[axis] = (1, 0)
        pad_hi[axis] = (0, 1)
        with np.errstate(invalid="ignore"):
            local = np.fmax(local, np.pad(d, pad_lo, constant_values=np.nan))
            local = np.fmax(local, np.pad(d, pad_hi, constant_values=np.nan))
    allq = np.concatenate([q.ravel() for q in quotients])
    allq = allq[np.isfinite(allq)]
    lip_global = float(allq.max()) if allq.size else np.nan

    # nondegeneracy estimate
    defined = freezing.defined
    c_best = np.inf
    samples = []
    axes = [g.axis_coords(a) for a in range(g.dim)]
    idx_list = [tuple(i) for i in np.argwhere(defined)]
    if len(idx_list) > max_points:
        stride = int(np.ceil(len(idx_list) / max_points))
        idx_list = idx_list[::stride]
    for idx in idx_list:
        x0 = np.array([axes[a][idx[a]] for a in range(g.dim)])
        s0 = float(s[idx])
        dist_edge = min(
            min(x0[a] - g.origin_x[a], g.origin_x[a] + g.extent[a] - x0[a])
            for a in range(g.dim)
        )
        r_cap = min(dist_edge, np.sqrt(max(s0 - g.origin_t, 0.0)))
        if window_radii is None:
            radii = []
            r = 4 * g.dx
            while r <= r_cap:
                radii.append(r)
                r *= 2.0
            if radii and radii[-1] < r_cap * 0.999:
                radii.append(r_cap)
            if not radii and r_cap >= 2 * g.dx:
                radii = [r_cap]  # short-lived columns: one snug window
        else:
            radii = [r for r in window_radii if r <= r_cap]
        for r in radii:
            t_slice = s0 - r * r
            k = int(np.floor(r / g.dx))
            offs = g.dx * np.arange(-k, k + 1)
            if g.dim == 1:
                xs = [x0[0] + offs]
                inside = np.abs(offs) <= r
            else:
                o1, o2 = np.meshgrid(offs, offs, indexing="ij")
                xs = [x0[0] + o1, x0[1] + o2]
                inside = o1**2 + o2**2 <= r * r
            wvals = interpolate_slice(fld, t_slice, xs)
            sup_w = float(wvals[inside].max())
            ratio = sup_w / (r * r)
            samples.append({"x": x0.tolist(), "s": s0, "r": float(r), "ratio": ratio})
            if ratio < c_best:
                c_best = ratio

    # speed ratios near the boundary on the liquid side
    eps_div = 1e-12 * fld.sup_norm() / g.dt
    sup_ratio = 0.0
    exceed = 0
    for k in range(1, g.nt):
        w_now = fld.values[k]
        eta = (fld.values[k - 1] - w_now) / g.dt
        liquid = w_now > 0
        if not liquid.any():
            break
        # near-boundary: liquid now, frozen within a couple of steps ahead
        ahead = min(k + 2, g.nt - 1)
        near = liquid & (fld.values[ahead] <= 0)
        if not near.any():
            continue
        if g.dim == 1:
            gw = np.zeros_like(w_now)
            gw[1:-1] = np.abs(w_now[2:] - w_now[:-2]) / (2 * g.dx)
        else:
            gx = np.zeros_like(w_now)
            gy = np.zeros_like(w_now)
            gx[1:-1, :] = (w_now[2:, :] - w_now[:-2, :]) / (2 * g.dx)
            gy[:, 1:-1] = (w_now[:, 2:] - w_now[:, :-2]) / (2 * g.dx)
            gw = np.sqrt(gx**2 + gy**2)
        ratio = gw[near] / np.maximum(eta[near], eps_div)
        if ratio.size:
            sup_ratio = max(sup_ratio, float(ratio.max()))
            exceed += int(np.count_nonzero((eta[near] < eps_div) & (gw[near] > 0)))

    return BoundaryStats(
        grad_s=grad_s,
        lipschitz_global=lip_global,
        lipschitz_local=local,
        nondegeneracy_c=float(c_best) if np.isfinite(c_best) else np.nan,
        nondegeneracy_samples=samples,
        speed_ratio_sup=sup_ratio,
        speed_ratio_exceedances=exceed,
        eps_div=eps_div,
    )


def nucleation_scan(fld: Field, freezing: FreezingTime,
                    radii_cells=(4, 8)) -> list[dict]:
    """Boundary points whose full backward cylinder is liquid.

    A point (x0, s(x0)) is flagged when, for some tested r in
    ``radii_cells`` (units of dx), every grid node of
    B_r(x0) x [s(x0) - r^2, s(x0)) carries w > 0.  Points without room for
    any tested cylinder are skipped, not flagged.
    """
    g = fld.grid
    s = freezing.s
    out = []
    axes = [g.axis_coords(a) for a in range(g.dim)]
    times = g.times()
    # vectorized prefilter: a flagged point is (up to refinement slack) a
    # local minimum of s over its cylinder base.  Checked on a square window
    # inscribed in the smallest testable ball so the condition is necessary
    # (a flag at any tested radius implies one at the smallest).
    from scipy.ndimage import minimum_filter

    testable = [m for m in radii_cells if (m * g.dx) ** 2 >= g.dt]
    if testable:
        s_inf = np.where(np.isfinite(s), s, np.inf)
        m_min = min(testable)
        half = max(int(m_min / np.sqrt(2)) if g.dim == 2 else m_min, 1)
        smin = minimum_filter(s_inf, size=2 * half + 1, mode="nearest")
        candidates = freezing.defined & (smin >= s_inf - max(2 * g.dt, 1e-12))
    else:
        candidates = freezing.defined
    for idx in map(tuple, np.argwhere(candidates)):
        x0 = np.array([axes[a][idx[a]] for a in range(g.dim)])
        s0 = float(s[idx])
        flagged = False
        tested = False
        for m in radii_cells:
            r = m * g.dx
            dist_edge = min(
                min(x0[a] - g.origin_x[a], g.origin_x[a] + g.extent[a] - x0[a])
                for a in range(g.dim)
            )
            # r^2 < dt: the backward cylinder holds no grid slice, untestable
            if r > dist_edge or s0 - r * r < g.origin_t or r * r < g.dt:
                continue
            tested = True
            lo = [max(idx[a] - m, 0) for a in range(g.dim)]
            hi = [min(idx[a] + m, g.shape[a] - 1) for a in range(g.dim)]
            k_lo = int(np.searchsorted(times, s0 - r * r - 1e-15, side="left"))
            k_hi = int(np.searchsorted(times, s0 - 1e-15, side="right")) - 1
            if k_hi < k_lo:
                continue
            if g.dim == 1:
                block = fld.values[k_lo : k_hi + 1, lo[0] : hi[0] + 1]
                offs = axes[0][lo[0] : hi[0] + 1] - x0[0]
                inside = np.abs(offs) <= r + 1e-12
                ok = bool((block[:, inside] > 0).all())
            else:
                block = fld.values[k_lo : k_hi + 1, lo[0] : hi[0] + 1, lo[1] : hi[1] + 1]
                o1 = axes[0][lo[0] : hi[0] + 1] - x0[0]
                o2 = axes[1][lo[1] : hi[1] + 1] - x0[1]
                inside = o1[:, None] ** 2 + o2[None, :] ** 2 <= r * r + 1e-12
                ok = bool((block[:, inside] > 0).all())
            if ok:
                flagged = True
                break
        if flagged and tested:
            out.append({"x": x0.tolist(), "s": s0, "index": tuple(int(i) for i in idx)})
    return out


def jump_scan(freezing: FreezingTime, threshold: float = 0.1) -> list[float]:
    """Times where a whole discrete ball of the domain freezes within one dt.

    Returns grid times t_k such that {x : s(x) in [t_k, t_k + dt)} contains
    a ball of radius >= threshold * domain_radius.
    """
    g = freezing.grid
    s = freezing.s
    R = threshold * g.domain_radius()
    m = max(int(np.ceil(R / g.dx)), 1)
    times = g.times()
    out = []
    for k in range(g.nt):
        t_k = times[k]
        in_band = np.isfinite(s) & (s >= t_k) & (s < t_k + g.dt)
        if not in_band.any():
            continue
        if _contains_ball(in_band, m, g.dim):
            out.append(float(t_k))
    return out


def _contains_ball(mask: np.ndarray, m: int, dim: int) -> bool:
    """True when some lattice ball of radius m cells lies inside the mask."""
    if dim == 1:
        window = 2 * m + 1
        if mask.size < window:
            return bool(mask.all())
        csum = np.convolve(mask.astype(int), np.ones(window, dtype=int), mode="valid")
        return bool((csum == window).any())
    offs = np.arange(-m, m + 1)
    disk = offs[:, None] ** 2 + offs[None, :] ** 2 <= m * m
    n1, n2 = mask.shape
    if n1 < 2 * m + 1 or n2 < 2 * m + 1:
        return bool(mask.all())
    needed = int(disk.sum())
    mi = mask.astype(int)
    slid = np.zeros((n1 - 2 * m, n2 - 2 * m), dtype=int)
    for i, j in zip(*np.nonzero(disk)):
        slid += mi[i : i + n1 - 2 * m, j : j + n2 - 2 * m]
    return bool((slid == needed).any())


def refine_vanish_time(fld: Field, x, s_grid: float) -> float:
    """Sub-dt vanish time at x by extrapolating the terminal slope.

    On solver output the stored slice hits 0 exactly, so the freezing-time
    refinement degenerates to the first zero slice (late by up to dt).
    Extrapolating through the last two positive column values recovers the
    vanish time to a few percent of dt, which blow-up analysis windows at
    coarse embedded dt need.  Falls back to ``s_grid`` when the slope is
    unresolved.
    """
    g = fld.grid
    xs = [np.atleast_1d(np.asarray(x[a], dtype=float)) for a in range(g.dim)]
    k = int(round((s_grid - g.origin_t) / g.dt))
    k = min(max(k, 0), g.nt - 1)
    times = g.times()

    def w_at(kk):
        return float(interpolate_slice(fld, times[kk], xs).ravel()[0])

    # locate the first nonpositive slice near the graph value
    while k > 1 and w_at(k - 1) <= 0:
        k -= 1
    while k < g.nt - 1 and w_at(k) > 0:
        k += 1
    if k < 2 or w_at(k) > 0:
        return s_grid
    w1 = w_at(k - 1)
    w2 = w_at(k - 2)
    slope = (w2 - w1) / g.dt
    if slope <= 0 or w1 <= 0:
        return s_grid
    t0 = times[k - 1] + w1 / slope
    return float(min(max(t0, times[k - 1]), times[k]))


def extinction_maxima(freezing: FreezingTime, window_cells: int = 5) -> list[dict]:
    """Local maxima of the freezing time, one representative per plateau.

    A node is a candidate when s comes within a quarter time step of the
    maximum of its ``window_cells``-neighborhood (sub-dt refinement noise
    would otherwise shatter a simultaneous collapse into satellites);
    connected candidates merge into one record at the plateau centroid, so
    a symmetric collapse reports its center.  Records are sorted by
    decreasing s, and a record within 3 * window_cells cells of a higher
    one is suppressed: maxima that close are not separable at grid scale.
    """
    g = freezing.grid
    s = freezing.s
    tol = 0.25 * g.dt
    sm = np.where(np.isfinite(s), s, -np.inf)
    out = []
    if g.dim == 1:
        n = len(sm)
        cand = []
        for i in range(n):
            lo, hi = max(0, i - window_cells), min(n, i + window_cells + 1)
            if np.isfinite(s[i]) and sm[i] >= sm[lo:hi].max() - tol:
                cand.append(i)
        groups: list[list[int]] = []
        for i in cand:
            if groups and i - groups[-1][-1] <= window_cells:
                groups[-1].append(i)
            else:
                groups.append([i])
        for gr in groups:
            smax = sm[gr].max()
            members = [i for i in gr if sm[i] >= smax - tol]
            best = int(round(np.mean(members)))
            out.append({"x": [float(g.axis_coords(0)[best])], "s": float(s[best]),
                        "index": (best,)})
    else:
        from scipy.ndimage import label, maximum_filter

        local_max = np.isfinite(s) & (
            sm >= maximum_filter(sm, size=2 * window_cells + 1) - tol)
        lab, n_lab = label(local_max)
        for li in range(1, n_lab + 1):
            idxs = np.argwhere(lab == li)
            centroid = idxs.mean(axis=0)
            best = idxs[int(np.argmin(np.abs(idxs - centroid).sum(axis=1)))]
            out.append({
                "x": [float(g.axis_coords(a)[best[a]]) for a in range(2)],
                "s": float(s[tuple(best)]),
                "index": tuple(int(v) for v in best),
            })
    out.sort(key=lambda rec: -rec["s"])
    kept: list[dict] = []
    for rec in out:
        near = any(
            max(abs(a - b) for a, b in zip(rec["index"], k["index"])) <= 3 * window_cells
            for k in kept
        )
        if not near:
            kept.append(rec)
    return kept


@dataclass
class CleaningReport:
    applicable: bool
    reason: str
    rows: list[dict]
    first_failure: dict | None

    @property
    def all_pass(self) -> bool:
        return self.applicable and self.first_failure is None


def cleaning_check(fld: Field, point: SpaceTimePoint, radii,
                   c_d: float | None = None,
                   profile_m: float | None = None,
                   m_threshold: float = 0.9) -> CleaningReport:
    """Two-sided cleaning around a top-stratum candidate.

    For each radius r, measures delta(r) = r^-2 sup_{Q_2r^-} |w - (t0 - t)|
    and verifies the two inclusions

        B_r x [t0 - r^2, t0 - delta r^2 / c] subset {w > 0},
        B_r x [t0 + delta r^2 / c, t0 + r^2] subset {w = 0},

    with c the measured nondegeneracy constant.  Not applicable unless the
    blow-up profile at the point has m >= m_threshold (fitted on demand
    when ``profile_m`` is not given).
    """
    g = fld.grid
    if profile_m is None:
        from .blowup import fit_profile, rescale  # lazy: blowup imports this module

        r_fit = max(4 * g.dx, min(radii))
        prof = fit_profile(rescale(fld, point, r_fit))
        profile_m = prof.m if prof.kind == "singular" else 0.0
    if profile_m < m_threshold:
        return CleaningReport(False, f"profile m={profile_m:.3g} below {m_threshold}", [], None)
    if c_d is None:
        stats = boundary_stats(fld, freezing_time(fld))
        c_d = stats.nondegeneracy_c
    if not np.isfinite(c_d) or c_d <= 0:
        return CleaningReport(False, "no usable nondegeneracy constant", [], None)

    t0 = point.t
    rows = []
    failure = None
    axes = [g.axis_coords(a) for a in range(g.dim)]
    times = g.times()
    for r in sorted(radii, reverse=True):
        # delta(r) from Q_{2r}^- via grid nodes
        delta = 0.0
        k_lo = int(np.searchsorted(times, t0 - 4 * r * r - 1e-15))
        k_hi = int(np.searchsorted(times, t0 + 1e-15)) - 1
        sel = _ball_indices(g, axes, point.x, 2 * r)
        if k_hi < k_lo or sel is None:
            rows.append({"r": float(r), "delta": np.nan, "status": "out of domain"})
            continue
        for k in range(k_lo, k_hi + 1):
            wv = fld.values[k][sel]
            delta = max(delta, float(np.abs(wv - (t0 - times[k])).max()))
        delta /= r * r
        margin = delta * r * r / c_d
        sel_r = _ball_indices(g, axes, point.x, r)
        liquid_ok = True
        frozen_ok = True
        if sel_r is not None:
            # backward window is half-open at the margin side: the liquid
            # inclusion is strict there (degenerates exactly at delta = 0)
            kl = int(np.searchsorted(times, t0 - r * r - 1e-15))
            kh = int(np.searchsorted(times, t0 - margin - 1e-15)) - 1
            for k in range(max(kl, 0), min(kh + 1, g.nt)):
                if not (fld.values[k][sel_r] > 0).all():
                    liquid_ok = False
                    break
            kl2 = int(np.searchsorted(times, t0 + margin - 1e-15))
            kh2 = int(np.searchsorted(times, t0 + r * r + 1e-15)) - 1
            for k in range(max(kl2, 0), min(kh2 + 1, g.nt)):
                if not (fld.values[k][sel_r] <= fld.mono_tol).all():
                    frozen_ok = False
                    break
        row = {"r": float(r), "delta": delta, "liquid_ok": liquid_ok,
               "frozen_ok": frozen_ok, "margin": margin,
               "vacuous": bool(margin >= r * r)}
        rows.append(row)
        if failure is None and not (liquid_ok and frozen_ok):
            failure = row
    return CleaningReport(True, "", rows, failure)


def _ball_indices(g, axes, x0, r):
    ok = all(
        x0[a] - g.origin_x[a] >= -1e-12 and g.origin_x[a] + g.extent[a] - x0[a] >= -1e-12
        for a in range(g.dim)
    )
    if not ok:
        return None
    if g.dim == 1:
        sel = np.abs(axes[0] - x0[0]) <= r + 1e-12
    else:
        sel = (axes[0][:, None] - x0[0]) ** 2 + (axes[1][None, :] - x0[1]) ** 2 <= (r + 1e-12) ** 2
    return sel if sel.any() else None


def parabolic_dimension(points: np.ndarray, scales) -> DimensionEstimate:
    """Box-counting dimension in the parabolic metric |dx| + |dt|^(1/2).

    Boxes have spatial side r and temporal side r^2.  The slope of
    log N(r) against log(1/r) is fitted by least squares and reported with
    a 95% confidence interval; this is an indicative estimate, never a
    proof-grade dimension.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 10:
        raise ValueError("need at least 10 points (rows of [x..., t])")
    scales = np.asarray(sorted(scales, reverse=True), dtype=float)
    if len(scales) < 4:
        raise ValueError("need at least 4 scales")
    d = pts.shape[1] - 1
    x_ref = pts[:, :d].min(axis=0)
    t_ref = pts[:, d].min()
    counts = []
    for r in scales:
        keys = set()
        xi = np.floor((pts[:, :d] - x_ref) / r + 1e-12).astype(np.int64)
        ti = np.floor((pts[:, d] - t_ref) / (r * r) + 1e-12).astype(np.int64)
        for row, tk in zip(map(tuple, xi), ti):
            keys.add(row + (int(tk),))
        counts.append(len(keys))
    counts = np.asarray(counts)
    lx = np.log(1.0 / scales)
    ly = np.log(counts.astype(float))
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    sol, res, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    slope, intercept = float(sol[0]), float(sol[1])
    fitted = A @ sol
    resid = ly - fitted
    nfree = max(len(scales) - 2, 1)
    sigma2 = float(resid @ resid) / nfree
    sxx = float(((lx - lx.mean()) ** 2).sum())
    stderr = float(np.sqrt(sigma2 / sxx)) if sxx > 0 else np.inf
    ci = (slope - 1.96 * stderr, slope + 1.96 * stderr)
    return DimensionEstimate(
        scales=scales, counts=counts, slope=slope, intercept=intercept,
        stderr=stderr, ci95=ci, residuals=resid,
    )
