"""Blow-up profiles at free-boundary points: rescaling, fitting, classification.

Rescaled solutions r^-2 w(x0 + r x, t0 + r^2 t) on the unit backward
cylinder are fitted against the two admissible profile families, the
half-space profile (x.e)_+^2 / 2 and the singular family
-m t + A x.x / 2 with A PSD and tr A = 1 - m.  Classification combines
the profile fit across a radius ladder with the frequency class, the
nucleation flag, and the temperature-continuity dichotomy.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import freeboundary as fb
from .calpoly import CaloricPoly, caloric_basis, project_caloric
from .field import DomainError, Field, SpaceTimeGrid, SpaceTimePoint, interpolate_slice
from .functionals import RecenteredDifference, _h_and_d, frequency_trace

RESCALE_NODES = 33  # per axis and in time: symmetric stencils, odd center
RANK_TOL = 0.05  # eigenvalues below this count as kernel directions
M_TOL = 0.05  # m below this means a stationary profile
FIT_TIME_CUT = -0.05  # fits exclude the slow sliver t > -0.05
RESIDUAL_TIME_LO = -0.25  # residuals are judged on the vertex window


def minus_t_profile(dim: int) -> CaloricPoly:
    """The top-stratum profile p(x, t) = -t in recentered coordinates."""
    return CaloricPoly(dim, {((0,) * dim, 1): -1.0})


@dataclass
class BlowupProfile:
    kind: str  # "regular" | "singular"
    e: np.ndarray | None = None
    m: float | None = None
    A: np.ndarray | None = None
    residual: float = np.nan
    ambiguous: bool = False
    residual_by_radius: list = dc_field(default_factory=list)

    def params_distance(self, other: "BlowupProfile") -> float:
        if self.kind != other.kind:
            return np.inf
        if self.kind == "regular":
            return float(np.arccos(np.clip(abs(np.dot(self.e, other.e)), -1, 1)))
        return abs(self.m - other.m) + float(np.abs(self.A - other.A).max())


@dataclass
class ClassifiedPoint:
    point: SpaceTimePoint
    profile: BlowupProfile | None
    kind: str  # "regular" | "singular" | "undetermined"
    stratum: int | None
    family: str | None  # "stationary" | "dynamic"
    frequency: object  # int, "infinite", or None
    lam: float | None
    fitted_radius: float | None
    nucleation: bool
    eta_discontinuous: bool
    family_eta_conflict: bool
    notes: list = dc_field(default_factory=list)

    def to_json(self) -> str:
        prof = None
        if self.profile is not None:
            prof = {
                "kind": self.profile.kind,
                "e": None if self.profile.e is None else list(map(float, self.profile.e)),
                "m": self.profile.m,
                "A": None if self.profile.A is None else [list(map(float, row)) for row in np.atleast_2d(self.profile.A)],
                "residual": self.profile.residual,
                "ambiguous": self.profile.ambiguous,
            }
        rec = {
            "point": {"x": list(map(float, self.point.x)), "t": self.point.t},
            "kind": self.kind,
            "profile": prof,
            "stratum": self.stratum,
            "family": self.family,
            "frequency": self.frequency,
            "lambda": self.lam,
            "fitted_radius": self.fitted_radius,
            "nucleation": self.nucleation,
            "eta_discontinuous": self.eta_discontinuous,
            "family_eta_conflict": self.family_eta_conflict,
            "notes": self.notes,
        }
        return json.dumps(rec, sort_keys=True)


def rescale(fld: Field, center: SpaceTimePoint, r: float) -> Field:
    """Parabolic rescale r^-2 w(x0 + r x, t0 + r^2 t) on the unit cylinder.

    Output lives on the fixed 33-per-axis grid over [-1, 1]^d x [-1, 0],
    decoupling analysis resolution from source resolution.
    """
    g = fld.grid
    if r < 3 * g.dx - 1e-12:
        raise ValueError(f"rescale radius {r} below 3 dx = {3 * g.dx}")
    for a in range(g.dim):
        lo = center.x[a] - r
        hi = center.x[a] + r
        if lo < g.origin_x[a] - 1e-12 or hi > g.origin_x[a] + g.extent[a] + 1e-12:
            raise DomainError(f"rescale box escapes domain on axis {a + 1}")
    if center.t - r * r < g.origin_t - 1e-12 or center.t > g.t_final + 1e-12:
        raise DomainError("rescale cylinder escapes domain in time")
    n = RESCALE_NODES
    xs_unit = np.linspace(-1.0, 1.0, n)
    ts_unit = np.linspace(-1.0, 0.0, n)
    vals = np.empty((n,) + (n,) * g.dim)
    for k, tu in enumerate(ts_unit):
        t_abs = center.t + r * r * tu
        if g.dim == 1:
            coords = [center.x[0] + r * xs_unit]
        else:
            coords = [
                center.x[0] + r * xs_unit[:, None] * np.ones((1, n)),
                center.x[1] + r * xs_unit[None, :] * np.ones((n, 1)),
            ]
        vals[k] = interpolate_slice(fld, t_abs, coords) / (r * r)
    out_grid = SpaceTimeGrid(
        g.dim, (n,) * g.dim, n,
        dx=2.0 / (n - 1), dt=1.0 / (n - 1),
        origin_x=(-1.0,) * g.dim, origin_t=-1.0,
    )
    return Field(out_grid, vals, mono_tol=max(fld.mono_tol / (r * r), 1e-12))


def _sing_design(g: SpaceTimeGrid):
    """Design matrix for -m t + A x.x / 2 on the fit region of the unit cylinder."""
    xs = [g.axis_coords(a) for a in range(g.dim)]
    ts = g.times()
    if g.dim == 1:
        X1 = np.broadcast_to(xs[0][None, :], (g.nt,) + g.shape)
        coords = [X1]
    else:
        coords = [
            np.broadcast_to(xs[0][None, :, None], (g.nt,) + g.shape),
            np.broadcast_to(xs[1][None, None, :], (g.nt,) + g.shape),
        ]
    T = np.broadcast_to(
        ts.reshape((g.nt,) + (1,) * g.dim), (g.nt,) + g.shape
    )
    region = T <= FIT_TIME_CUT
    cols = [-T[region]]
    labels = ["m"]
    for a in range(g.dim):
        cols.append(0.5 * coords[a][region] ** 2)
        labels.append(f"A{a}{a}")
    if g.dim == 2:
        cols.append(coords[0][region] * coords[1][region])
        labels.append("A01")
    return np.stack(cols, axis=1), labels, region, coords, T


def _project_singular(m: float, A: np.ndarray, iters: int = 50):
    """Alternating projection onto {A PSD} cap {tr A = 1 - m, m in [0, 1]}."""
    d = A.shape[0]
    for _ in range(iters):
        eig, V = np.linalg.eigh(0.5 * (A + A.T))
        eig = np.where(eig < -1e-8, -1e-8, eig)
        eig = np.clip(eig, 0.0, None)
        A = (V * eig) @ V.T
        excess = (m + np.trace(A) - 1.0) / (d + 1)
        m = m - excess
        A = A - excess * np.eye(d)
        m = float(np.clip(m, 0.0, 1.0))
    eig, V = np.linalg.eigh(0.5 * (A + A.T))
    eig = np.clip(eig, 0.0, None)
    A = (V * eig) @ V.T
    return m, A


def fit_profile(rescaled: Field) -> BlowupProfile:
    """Fit both blow-up families to a unit-cylinder field, keep the better one.

    Singular: linear least squares over (m, A) followed by 50 alternating
    projections onto the constraint set.  Regular: direction search over the
    sphere (64 angles per circle, golden-section refinement).  Both fits use
    the cylinder minus the slow final sliver t > -0.05; the reported and
    compared residuals are sup norms on the vertex window
    t in [-0.25, -0.05], where blow-up convergence is judged.  Ties within
    1e-3 resolve to singular with the ambiguity flag set, since a false
    "regular" verdict would wrongly assert interface smoothness.
    """
    g = rescaled.grid
    A_design, labels, region, coords, T = _sing_design(g)
    y = rescaled.values[region]
    vertex = (T >= RESIDUAL_TIME_LO)[region]
    sol, *_ = np.linalg.lstsq(A_design, y, rcond=None)
    m0 = float(sol[0])
    d = g.dim
    A0 = np.zeros((d, d))
    for a in range(d):
        A0[a, a] = sol[1 + a]
    if d == 2:
        A0[0, 1] = A0[1, 0] = sol[3]
    m_fit, A_fit = _project_singular(m0, A0)
    pred = A_design @ _pack_singular(m_fit, A_fit, d)
    res_sing = float(np.abs((pred - y)[vertex]).max())

    xs_flat = [coords[a][region] for a in range(d)]
    res_reg, e_best = _fit_regular(xs_flat, y, d, vertex=vertex)

    if res_sing <= res_reg + 1e-3:
        ambiguous = abs(res_sing - res_reg) <= 1e-3
        return BlowupProfile(kind="singular", m=m_fit, A=A_fit,
                             residual=res_sing, ambiguous=ambiguous)
    return BlowupProfile(kind="regular", e=e_best, residual=res_reg)


def _pack_singular(m: float, A: np.ndarray, d: int) -> np.ndarray:
    if d == 1:
        return np.array([m, A[0, 0]])
    return np.array([m, A[0, 0], A[1, 1], A[0, 1]])


def _fit_regular(xs_flat, y, d, n_angles: int = 64, vertex=None):
    if vertex is None:
        vertex = slice(None)

    def misfit_for(e):
        proj = sum(e[a] * xs_flat[a] for a in range(d))
        pred = 0.5 * np.maximum(proj, 0.0) ** 2
        return float(np.abs((pred - y)[vertex]).max())

    if d == 1:
        cands = [np.array([1.0]), np.array([-1.0])]
        vals = [misfit_for(e) for e in cands]
        i = int(np.argmin(vals))
        return vals[i], cands[i]
    angles = np.linspace(0, 2 * np.pi, n_angles, endpoint=False)
    vals = [misfit_for(np.array([np.cos(a), np.sin(a)])) for a in angles]
    i = int(np.argmin(vals))
    lo = angles[i] - 2 * np.pi / n_angles
    hi = angles[i] + 2 * np.pi / n_angles
    phi = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - phi * (b - a)
    dpt = a + phi * (b - a)
    fc = misfit_for(np.array([np.cos(c), np.sin(c)]))
    fd = misfit_for(np.array([np.cos(dpt), np.sin(dpt)]))
    for _ in range(60):
        if fc < fd:
            b, dpt, fd = dpt, c, fc
            c = b - phi * (b - a)
            fc = misfit_for(np.array([np.cos(c), np.sin(c)]))
        else:
            a, c, fc = c, dpt, fd
            dpt = a + phi * (b - a)
            fd = misfit_for(np.array([np.cos(dpt), np.sin(dpt)]))
    best = 0.5 * (a + b)
    e = np.array([np.cos(best), np.sin(best)])
    return misfit_for(e), e


def eta_jump_estimate(fld: Field, point: SpaceTimePoint) -> float:
    """Backward-difference eta at the point just before its time, by interpolation.

    A value well above 0 marks a temperature discontinuity (eta drops to 0
    on the frozen side), the signature of a dynamic singular point.
    """
    g = fld.grid
    t_probe = max(point.t - 2 * g.dt, g.origin_t + g.dt)
    xs = [np.atleast_1d(np.asarray(point.x[a])) for a in range(g.dim)]
    w_hi = interpolate_slice(fld, t_probe, xs)
    w_lo = interpolate_slice(fld, t_probe - g.dt, xs)
    return float(((w_lo - w_hi) / g.dt).ravel()[0])


def classify(
    fld: Field,
    point: SpaceTimePoint,
    radii,
    gamma_sweep=(3.0, 4.0, 5.0, 6.0),
    rank_tol: float = RANK_TOL,
    m_tol: float = M_TOL,
    residual_tol: float = 0.1,
    drift_tol: float = 0.05,
    nucleation_points: list | None = None,
    freezing=None,
    freq_radii=None,
) -> ClassifiedPoint:
    """Classify a free-boundary point from its blow-up ladder and frequency.

    Profiles are fitted at every radius of the (decreasing) ladder; the
    classification is taken at the smallest radius whose residual is below
    ``residual_tol`` and whose parameters drift less than ``drift_tol`` over
    the last octave.  An unstable ladder yields "undetermined", never a
    guess.  Singular points get stratum dim ker A (eigenvalues below
    rank_tol), the stationary/dynamic family split at m_tol, a frequency
    class from the gamma sweep, and the temperature-continuity cross-check.
    """
    g = fld.grid
    radii = sorted(radii, reverse=True)
    profiles: list[tuple[float, BlowupProfile]] = []
    notes = []
    for r in radii:
        try:
            prof = fit_profile(rescale(fld, point, r))
        except (DomainError, ValueError) as exc:
            notes.append(f"radius {r:.4g} skipped: {exc}")
            continue
        profiles.append((r, prof))

    chosen: tuple[float, BlowupProfile] | None = None
    for i in range(len(profiles) - 1, -1, -1):
        r, prof = profiles[i]
        if not np.isfinite(prof.residual) or prof.residual > residual_tol:
            continue
        stable = True
        for r2, prof2 in profiles:
            if r < r2 <= 2.0 * r + 1e-12:
                if prof.params_distance(prof2) > drift_tol:
                    stable = False
                    break
        if stable:
            chosen = (r, prof)
            break

    nucl = False
    if nucleation_points is None and freezing is not None:
        nucleation_points = fb.nucleation_scan(fld, freezing)
    if nucleation_points:
        for rec in nucleation_points:
            if (np.linalg.norm(np.array(rec["x"]) - np.array(point.x)) <= 2 * g.dx
                    and abs(rec["s"] - point.t) <= 2 * g.dt):
                nucl = True
                break

    eta_before = eta_jump_estimate(fld, point)
    eta_disc = eta_before > 0.1

    if chosen is None:
        return ClassifiedPoint(
            point=point, profile=None, kind="undetermined", stratum=None,
            family=None, frequency=None, lam=None, fitted_radius=None,
            nucleation=nucl, eta_discontinuous=eta_disc,
            family_eta_conflict=False, notes=notes + ["no stable fit"],
        )

    r_fit, prof = chosen
    prof.residual_by_radius = [
        {"r": float(r), "kind": p.kind, "residual": p.residual} for r, p in profiles
    ]
    if prof.kind == "regular":
        # temperature is continuous at regular points
        conflict = eta_disc
        return ClassifiedPoint(
            point=point, profile=prof, kind="regular", stratum=None,
            family=None, frequency=None, lam=None, fitted_radius=r_fit,
            nucleation=nucl, eta_discontinuous=eta_disc,
            family_eta_conflict=conflict, notes=notes,
        )

    eig = np.linalg.eigvalsh(np.atleast_2d(prof.A))
    stratum = int(np.count_nonzero(eig < rank_tol))
    family = "stationary" if prof.m <= m_tol else "dynamic"

    freq, lam = frequency_class(fld, point, gamma_sweep=gamma_sweep, notes=notes,
                                radii=freq_radii)

    # dichotomy: eta continuous iff regular or stationary profile
    conflict = (family == "dynamic") != eta_disc
    return ClassifiedPoint(
        point=point, profile=prof, kind="singular", stratum=stratum,
        family=family, frequency=freq, lam=lam, fitted_radius=r_fit,
        nucleation=nucl, eta_discontinuous=eta_disc,
        family_eta_conflict=conflict, notes=notes,
    )


def frequency_class(fld: Field, point: SpaceTimePoint, gamma_sweep=(3.0, 4.0, 5.0, 6.0),
                    plateau_margin: float = 0.5, flatness_tol: float = 0.3,
                    radii=None, notes=None):
    """Frequency class from phi_gamma plateaus with profile p = -t.

    Sweeps gamma over ``gamma_sweep`` and returns (class, lambda) at the
    first gamma whose plateau sits below gamma - plateau_margin AND is flat
    (spread over the smallest octave below ``flatness_tol``; a descending
    tail means the limit is not yet resolved at this gamma).  "infinite"
    when every plateau stays pegged at its gamma: no decay beyond r^6 is
    resolvable on desk-scale grids.
    """
    g = fld.grid
    u = RecenteredDifference(fld, point, None, True)
    avail = u.available_radius()
    if radii is None:
        r_max = min(g.domain_radius() / 2, avail / 3.001,
                    np.sqrt(max(point.t - g.origin_t, 0.0)) * 0.999)
        # slices at t0 - r^2 need a few time steps below the vertex
        r_min = max(3 * g.dx, np.sqrt(4 * g.dt))
        if r_max < r_min * 1.1:
            if notes is not None:
                notes.append("frequency class unresolvable: no radius range")
            return None, None
        radii = np.geomspace(r_min, r_max, 8)
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    r_min = radii[-1]
    for gamma in gamma_sweep:
        tr = frequency_trace(fld, point, minus_t_profile(g.dim), radii,
                             gamma=gamma, use_cutoff=True)
        lam = tr.lam
        octave = tr.phi_gamma[tr.radii <= 2.0 * r_min + 1e-15]
        flat = (octave.max() - octave.min()) <= flatness_tol if len(octave) else False
        if lam <= gamma - plateau_margin and flat:
            return int(round(lam)), float(lam)
    return "infinite", None


@dataclass
class SecondBlowup:
    degenerate: bool
    poly: CaloricPoly | None
    lam: float | None
    radius: float | None
    h_value: float | None
    a: float | None = None
    A: np.ndarray | None = None
    psd_defect: float | None = None
    trace_gap: float | None = None
    note: str = ""


def second_blowup(fld: Field, point: SpaceTimePoint, lam: float,
                  radius: float | None = None) -> SecondBlowup:
    """Normalized second blow-up u^(r) = (w - p2)_r / H(r, zeta (w - p2))^(1/2).

    Projects u^(r) at the chosen radius onto caloric polynomials of degree
    <= lam with backward-kernel weights on t in [-1, -0.1].  When H falls
    below 10x its quadrature error the point is a degenerate candidate for
    the infinite-order stratum and no polynomial is returned.  For lam = 2
    the quadratic structure (a, A) and its constraint defects are reported.
    """
    g = fld.grid
    p2 = minus_t_profile(g.dim)
    u_cut = RecenteredDifference(fld, point, p2, True)
    if radius is None:
        radius = max(6 * g.dx, min(0.1, g.domain_radius() / 4))
    H, _, eH, _ = _h_and_d(u_cut, radius, g.dx, g.dim)
    if H <= 10.0 * eH + 1e-28:
        return SecondBlowup(degenerate=True, poly=None, lam=None, radius=radius,
                            h_value=H, note="degenerate H: infinite-order candidate")
    norm = np.sqrt(H)
    u_raw = RecenteredDifference(fld, point, p2, False)
    avail = u_raw.available_radius()
    L = min(3.0, avail / radius * 0.999)
    n_x = 21
    n_t = 12
    xs = np.linspace(-L, L, n_x)
    ts = np.linspace(-1.0, -0.1, n_t)
    pts = []
    tvals = []
    vals = []
    wts = []
    from .functionals import kernel

    for t in ts:
        if g.dim == 1:
            X = xs[:, None]
        else:
            g1, g2 = np.meshgrid(xs, xs, indexing="ij")
            X = np.stack([g1, g2], axis=-1)
        t_abs = point.t + radius * radius * t
        if t_abs < g.origin_t or t_abs > g.t_final:
            continue
        # u^(r)(x, t) = (w - p2)(x0 + r x, t0 + r^2 t) / H(r, zeta (w - p2))^(1/2)
        uv = u_raw.slice_values(X * radius, radius * radius * t) / norm
        x2 = np.sum(X**2, axis=-1)
        Gv = kernel(x2, t, g.dim)
        flatX = X.reshape(-1, g.dim)
        pts.append(flatX)
        tvals.append(np.full(flatX.shape[0], t))
        vals.append(uv.ravel())
        wts.append(Gv.ravel())
    if not pts:
        return SecondBlowup(degenerate=True, poly=None, lam=None, radius=radius,
                            h_value=H, note="no usable sample times")
    P = np.concatenate(pts)
    T = np.concatenate(tvals)
    V = np.concatenate(vals)
    W = np.concatenate(wts)
    k = int(round(lam))
    poly, resid = project_caloric((P, T, V, W), g.dim, k)
    out = SecondBlowup(degenerate=False, poly=poly, lam=float(lam),
                       radius=radius, h_value=H)
    if k == 2:
        a = -float(poly.coefficient((0,) * g.dim, 1))
        A = np.zeros((g.dim, g.dim))
        for i in range(g.dim):
            beta = [0] * g.dim
            beta[i] = 2
            A[i, i] = -2.0 * float(poly.coefficient(tuple(beta), 0))
        if g.dim == 2:
            A[0, 1] = A[1, 0] = -float(poly.coefficient((1, 1), 0))
        eig = np.linalg.eigvalsh(A)
        out.a = a
        out.A = A
        out.psd_defect = float(max(0.0, -eig.min()))
        out.trace_gap = abs(float(np.trace(A)) - a)
    return out


@dataclass
class TaylorFit:
    point: SpaceTimePoint
    k: int
    beta: float
    poly: CaloricPoly
    r0: float
    radii: np.ndarray
    residuals: np.ndarray
    slope: float
    dropped_degrees: list


def taylor_fit(fld: Field, point: SpaceTimePoint, k: int, beta: float,
               r0: float | None = None, ladder=None) -> TaylorFit:
    """One-sided Taylor fit of w - (t0 - t) by caloric polynomials of degrees 3..k.

    A single weighted projection at the reference radius r0 over the region
    B_r0 x [t0 - r0^2, t0 - r0^(2+beta)], followed by backward elimination of
    homogeneous degree blocks that do not help on the validation region at
    r0/2 (guards against fitting noise when the true expansion vanishes),
    then a residual-sup ladder and the empirical exponent of its log-log
    slope.  Residuals below the floating-point floor report slope +inf.
    """
    if not (0.5 < beta < 1.0):
        raise ValueError("beta must lie in (1/2, 1)")
    if k < 3:
        raise ValueError("k must be >= 3")
    g = fld.grid
    if r0 is None:
        r0 = min(g.domain_radius() * 0.9,
                 np.sqrt(max(point.t - g.origin_t, 0.0)) * 0.95)
    if ladder is None:
        ladder = r0 * np.array([1.0, 0.85, 0.7, 0.55, 0.4])
    blocks = {j: caloric_basis(g.dim, k, homogeneous_degree=j) for j in range(3, k + 1)}

    def region_samples(r):
        t_lo = point.t - r * r
        t_hi = point.t - r ** (2.0 + beta)
        if t_lo < g.origin_t:
            raise ValueError(f"region at r={r} leaves the time domain")
        ts_grid = g.times()
        sel = (ts_grid >= t_lo - 1e-15) & (ts_grid <= t_hi + 1e-15)
        ts = ts_grid[sel]
        if len(ts) < 2:
            ts = np.linspace(t_lo, t_hi, 6)
        m = int(np.floor(r / g.dx))
        offs = g.dx * np.arange(-m, m + 1)
        pts = []
        vals = []
        for t in ts:
            if g.dim == 1:
                xs = [point.x[0] + offs]
                X = offs[:, None]
                inside = np.abs(offs) <= r
            else:
                o1, o2 = np.meshgrid(offs, offs, indexing="ij")
                xs = [point.x[0] + o1, point.x[1] + o2]
                X = np.stack([o1, o2], axis=-1)
                inside = o1**2 + o2**2 <= r * r
            w = interpolate_slice(fld, t, xs)
            u = w - (point.t - t)
            pts.append(np.column_stack([X.reshape(-1, g.dim)[inside.ravel()],
                                        np.full(int(inside.sum()), t - point.t)]))
            vals.append(u[inside])
        P = np.vstack(pts)
        V = np.concatenate(vals)
        return P[:, : g.dim], P[:, g.dim], V

    X0, T0, V0 = region_samples(r0)
    if len(V0) < 100:
        raise ValueError(f"region under-resolved: {len(V0)} samples < 100")
    basis_all = [b for j in sorted(blocks) for b in blocks[j]]
    deg_of = [j for j in sorted(blocks) for _ in blocks[j]]
    W0 = np.ones(len(V0))
    poly, _ = project_caloric((X0, T0, V0, W0), g.dim, k, basis=basis_all)

    # backward elimination on the validation region at r0/2
    Xv, Tv, Vv = region_samples(r0 / 2)

    def val_misfit(active: set) -> float:
        if not active:
            fit = np.zeros_like(Vv)
        else:
            sub = [b for b, j in zip(basis_all, deg_of) if j in active]
            coef, _ = project_caloric((X0, T0, V0, W0), g.dim, k, basis=sub)
            fit = coef([Xv[:, a] for a in range(g.dim)], Tv)
        return float(np.abs(Vv - fit).max())

    active = set(blocks)
    dropped = []
    for j in sorted(blocks, reverse=True):
        with_j = val_misfit(active)
        without_j = val_misfit(active - {j})
        if without_j <= with_j * 1.01:
            active = active - {j}
            dropped.append(j)
    if active:
        sub = [b for b, j in zip(basis_all, deg_of) if j in active]
        poly, _ = project_caloric((X0, T0, V0, W0), g.dim, k, basis=sub)
    else:
        poly = CaloricPoly.zero(g.dim)

    radii = np.asarray(sorted([r for r in ladder if r <= r0 + 1e-15], reverse=True))
    residuals = []
    for r in radii:
        Xr, Tr, Vr = region_samples(r)
        fit = poly([Xr[:, a] for a in range(g.dim)], Tr) if poly.coeffs else np.zeros_like(Vr)
        residuals.append(float(np.abs(Vr - fit).max()))
    residuals = np.asarray(residuals)

    floor = max(1e-300, 50 * np.finfo(float).eps * fld.sup_norm())
    usable = residuals > floor
    if usable.sum() >= 2:
        slope_fit = np.polyfit(np.log(radii[usable]), np.log(residuals[usable]), 1)
        slope = float(slope_fit[0])
    else:
        slope = np.inf
    return TaylorFit(point=point, k=k, beta=beta, poly=poly, r0=float(r0),
                     radii=radii, residuals=residuals, slope=slope,
                     dropped_degrees=sorted(dropped))
