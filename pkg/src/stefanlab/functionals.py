"""Backward-heat-kernel functionals H, D, phi on grid fields.

Evaluates the height H(r,f) = <f,f>_r, the energy D(r,f) = 2 r^2
<grad f, grad f>_r, and the frequency quotients phi = D/H and
phi_gamma = (D + gamma r^gamma)/(H + r^gamma) on recentered differences
u = cutoff * (w(center + .) - p), by lattice quadrature on the slice
t = -r^2 with an analytic Gaussian tail bound folded into the error
estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.stats import chi2

from .calpoly import CaloricPoly
from .field import Field, SpaceTimePoint, interpolate_slice

TAIL_SIGMAS = 6.0 * np.sqrt(2.0)  # quadrature ball radius in units of r
MIN_RADIUS_CELLS = 3  # below 3 dx centered differences are meaningless


def smooth_step(s):
    """rho(s): 1 for s <= 0, 0 for s >= 1, smooth monotone blend between."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    out[s <= 0] = 1.0
    mid = (s > 0) & (s < 1)
    sm = s[mid]
    a = np.exp(-1.0 / (1.0 - sm))
    b = np.exp(-1.0 / sm)
    out[mid] = a / (a + b)
    return out


def cutoff(x_norm):
    """Fixed radial bump: 1 on B_{1/4}, 0 outside B_{1/2}, smooth in between."""
    return smooth_step((np.asarray(x_norm, dtype=float) - 0.25) * 4.0)


def kernel(x_norm2, t, dim: int):
    """Backward heat kernel G(x, t) = (-4 pi t)^(-d/2) exp(|x|^2 / (4t)), t < 0."""
    t = float(t)
    if t >= 0:
        raise ValueError("backward kernel requires t < 0")
    return (-4.0 * np.pi * t) ** (-dim / 2.0) * np.exp(np.asarray(x_norm2) / (4.0 * t))


def kernel_mass(dim: int, t: float, dx: float, radius: float) -> float:
    """Lattice quadrature of G(., t) over |x| <= radius (unit-mass check)."""
    k = int(np.floor(radius / dx))
    offs = dx * np.arange(-k, k + 1)
    if dim == 1:
        x2 = offs**2
    else:
        x2 = offs[:, None] ** 2 + offs[None, :] ** 2
    mask = x2 <= radius**2
    return float(np.sum(kernel(x2[mask], t, dim)) * dx**dim)


@dataclass(frozen=True)
class CutoffSpec:
    """Parameters of the fixed cutoff zeta(x) = rho((|x| - 1/4) * 4)."""

    plateau_radius: float = 0.25
    support_radius: float = 0.5

    def __call__(self, x_norm):
        return cutoff(x_norm)


@dataclass
class FrequencyTrace:
    center: SpaceTimePoint
    profile: CaloricPoly | None
    gamma: float
    cutoff_used: bool
    radii: np.ndarray
    H: np.ndarray
    D: np.ndarray
    phi: np.ndarray
    phi_gamma: np.ndarray
    err_H: np.ndarray
    err_D: np.ndarray
    lam: float = dc_field(default=np.nan)

    def to_csv(self) -> str:
        lines = ["r,H,D,phi,phi_gamma,err_H,err_D"]
        for i in range(len(self.radii)):
            row = (self.radii[i], self.H[i], self.D[i], self.phi[i],
                   self.phi_gamma[i], self.err_H[i], self.err_D[i])
            lines.append(",".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"


class RecenteredDifference:
    """Slice-evaluable u = [zeta] * (w(center + .) - p) for a grid field.

    ``p`` may be a CaloricPoly or None (p = 0).  Spatial points are offsets
    from the center; times are offsets from the center time.  Field values
    are interpolated (clamped at 0 like every field read) and a per-slice
    time-interpolation error proxy is tracked from second time differences.
    """

    def __init__(self, fld: Field, center: SpaceTimePoint,
                 p: CaloricPoly | None, use_cutoff: bool):
        if len(center.x) != fld.grid.dim:
            raise ValueError("center dimension mismatch")
        self.field = fld
        self.center = center
        self.p = p
        self.use_cutoff = use_cutoff
        self.dim = fld.grid.dim

    def available_radius(self) -> float:
        g = self.field.grid
        r = np.inf
        for a in range(self.dim):
            lo = g.origin_x[a]
            hi = lo + g.extent[a]
            r = min(r, self.center.x[a] - lo, hi - self.center.x[a])
        return r

    def slice_values(self, X: np.ndarray, t_rel: float) -> np.ndarray:
        g = self.field.grid
        t_abs = self.center.t + t_rel
        xs = [X[..., a] + self.center.x[a] for a in range(self.dim)]
        w = interpolate_slice(self.field, t_abs, xs)
        if self.p is not None:
            vals = w - self.p([X[..., a] for a in range(self.dim)], t_rel)
        else:
            vals = w
        if self.use_cutoff:
            vals = vals * cutoff(np.sqrt(np.sum(X**2, axis=-1)))
        return vals

    def time_curvature(self, X: np.ndarray, t_rel: float) -> float:
        """Max second time-difference of w over the slice, for the error model."""
        g = self.field.grid
        t_abs = self.center.t + t_rel
        k = int(np.clip(np.floor((t_abs - g.origin_t) / g.dt), 1, g.nt - 2))
        xs = [X[..., a] + self.center.x[a] for a in range(self.dim)]
        tri = [interpolate_slice(self.field, g.origin_t + g.dt * (k + s), xs)
               for s in (-1, 0, 1)]
        return float(np.abs(tri[0] - 2 * tri[1] + tri[2]).max())


class PolySlice:
    """Adapter giving a CaloricPoly the slice-evaluable interface."""

    def __init__(self, p: CaloricPoly):
        self.p = p
        self.dim = p.dim

    def available_radius(self) -> float:
        return np.inf

    def slice_values(self, X: np.ndarray, t_rel: float) -> np.ndarray:
        return self.p([X[..., a] for a in range(self.dim)], t_rel)

    def time_curvature(self, X: np.ndarray, t_rel: float) -> float:
        return 0.0


def _lattice(dim: int, dx: float, radius: float, halo: int = 0) -> np.ndarray:
    """Points k*dx with |x| <= radius (+ halo cells), shape (..., dim)."""
    k = int(np.floor(radius / dx)) + halo
    offs = dx * np.arange(-k, k + 1)
    if dim == 1:
        return offs[:, None]
    g1, g2 = np.meshgrid(offs, offs, indexing="ij")
    return np.stack([g1, g2], axis=-1)


def _second_diff_total(vals: np.ndarray, dim: int) -> float:
    total = 0.0
    if dim == 1:
        v = vals.ravel()
        if len(v) >= 3:
            total += float(np.abs(np.diff(v, 2)).sum())
    else:
        total += float(np.abs(np.diff(vals, 2, axis=0)).sum())
        total += float(np.abs(np.diff(vals, 2, axis=1)).sum())
    return total


def inner_r(f, g, r: float, dim: int | None = None, dx: float | None = None,
            max_radius: float | None = None) -> tuple[float, float]:
    """<f, g>_r by lattice quadrature on the slice t = -r^2.

    ``f`` and ``g`` are slice-evaluables (RecenteredDifference / PolySlice).
    The lattice has the field spacing and is truncated at
    min(available radius, 6 sqrt(2) r); the Gaussian mass outside is bounded
    by a chi-square tail and added to the error estimate together with a
    second-difference trapezoid proxy and the time-interpolation proxy.

    Returns (value, error_estimate).
    """
    if dim is None:
        dim = f.dim
    if dx is None:
        for obj in (f, g):
            fld = getattr(obj, "field", None)
            if fld is not None:
                dx = fld.grid.dx
                break
        if dx is None:
            raise ValueError("dx is required when neither argument wraps a field")
    avail = min(f.available_radius(), g.available_radius())
    if max_radius is None:
        max_radius = min(avail, TAIL_SIGMAS * r)
    if r < MIN_RADIUS_CELLS * dx - 1e-12:
        raise ValueError(f"radius {r} below resolvable minimum {MIN_RADIUS_CELLS} dx = {MIN_RADIUS_CELLS * dx}")
    X = _lattice(dim, dx, max_radius)
    x2 = np.sum(X**2, axis=-1)
    mask = x2 <= max_radius**2 + 1e-15
    t_rel = -r * r
    fv = f.slice_values(X, t_rel)
    gv = g.slice_values(X, t_rel)
    G = kernel(x2, t_rel, dim)
    integrand = np.where(mask, fv * gv * G, 0.0)
    val = float(integrand.sum() * dx**dim)

    # error model: truncation tail + trapezoid curvature + time interpolation
    tail_prob = float(chi2.sf(max_radius**2 / (2.0 * r * r), dim))
    edge_mag = float(np.abs(np.where(mask, fv * gv, 0.0)).max(initial=0.0))
    err = tail_prob * edge_mag
    err += 1.0 / 12.0 * _second_diff_total(integrand, dim) * dx**dim
    tc = max(f.time_curvature(X, t_rel), g.time_curvature(X, t_rel))
    err += tc / 8.0 * float((np.where(mask, np.abs(fv) + np.abs(gv), 0.0) * G).sum() * dx**dim)
    return val, err


def _h_and_d(u, r: float, dx: float, dim: int) -> tuple[float, float, float, float]:
    """(H, D, err_H, err_D) for one evaluable at one radius."""
    avail = u.available_radius()
    Rq = min(avail - 1.001 * dx, TAIL_SIGMAS * r)  # halo cell must stay inside
    if Rq <= dx:
        raise ValueError("no room for quadrature around the center")
    X = _lattice(dim, dx, Rq, halo=1)
    x2 = np.sum(X**2, axis=-1)
    mask = x2 <= Rq**2 + 1e-15
    t_rel = -r * r
    vals = u.slice_values(X, t_rel)
    G = kernel(x2, t_rel, dim)

    integrand_h = np.where(mask, vals * vals * G, 0.0)
    H = float(integrand_h.sum() * dx**dim)

    if dim == 1:
        grad2 = np.zeros_like(x2)
        grad2[1:-1] = ((vals[2:] - vals[:-2]) / (2 * dx)) ** 2
    else:
        gx = np.zeros_like(vals)
        gy = np.zeros_like(vals)
        gx[1:-1, :] = (vals[2:, :] - vals[:-2, :]) / (2 * dx)
        gy[:, 1:-1] = (vals[:, 2:] - vals[:, :-2]) / (2 * dx)
        grad2 = gx**2 + gy**2
    integrand_d = np.where(mask, grad2 * G, 0.0)
    D = 2.0 * r * r * float(integrand_d.sum() * dx**dim)

    tail_prob = float(chi2.sf(Rq**2 / (2.0 * r * r), dim))
    vmax = float(np.abs(np.where(mask, vals, 0.0)).max(initial=0.0))
    gmax = float(np.where(mask, grad2, 0.0).max(initial=0.0))
    err_H = tail_prob * vmax**2 + _second_diff_total(integrand_h, dim) / 12.0 * dx**dim
    err_D = 2.0 * r * r * (tail_prob * gmax + _second_diff_total(integrand_d, dim) / 12.0 * dx**dim)
    tc = u.time_curvature(X, t_rel)
    mass_u = float((np.where(mask, np.abs(vals), 0.0) * G).sum() * dx**dim)
    err_H += 2.0 * tc / 8.0 * mass_u
    err_D += 2.0 * r * r * tc / 8.0 / dx * float((np.where(mask, np.sqrt(grad2), 0.0) * G).sum() * dx**dim)
    return H, D, err_H, err_D


def frequency_trace(
    fld: Field,
    center: SpaceTimePoint,
    p: CaloricPoly | None,
    radii,
    gamma: float = 4.0,
    use_cutoff: bool = True,
) -> FrequencyTrace:
    """Sampled r -> (H, D, phi, phi_gamma) for u = [zeta](w(center + .) - p).

    Radii must lie in the resolvable range [3 dx, domain_radius / 2]; the
    center must leave room for the largest radius in space and in backward
    time.  The attached lambda estimate is the median of phi_gamma over the
    smallest resolvable octave of radii.
    """
    g = fld.grid
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    if len(radii) == 0:
        raise ValueError("no radii given")
    r_max = float(radii[0])
    r_min = float(radii[-1])
    if r_min < MIN_RADIUS_CELLS * g.dx - 1e-12:
        raise ValueError(
            f"smallest radius {r_min} below resolvable minimum {MIN_RADIUS_CELLS * g.dx}")
    if r_max > g.domain_radius() / 2 + 1e-12:
        raise ValueError(
            f"largest radius {r_max} above resolvable maximum {g.domain_radius() / 2}")
    u = RecenteredDifference(fld, center, p, use_cutoff)
    avail = u.available_radius()
    if avail < 3.0 * r_max:
        raise ValueError(
            f"center too close to the domain boundary for radius {r_max} "
            f"(available {avail:.3g}, need {3 * r_max:.3g})")
    if center.t - r_max**2 < g.origin_t - 1e-12:
        raise ValueError(
            f"center too early in time for radius {r_max} "
            f"(needs t >= {g.origin_t + r_max ** 2})")

    H = np.empty(len(radii))
    D = np.empty(len(radii))
    eH = np.empty(len(radii))
    eD = np.empty(len(radii))
    for i, r in enumerate(radii):
        H[i], D[i], eH[i], eD[i] = _h_and_d(u, float(r), g.dx, g.dim)
    rg = radii**gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(H > 0, D / np.where(H > 0, H, 1.0), np.nan)
    phi_gamma = (D + gamma * rg) / (H + rg)
    trace = FrequencyTrace(
        center=center, profile=p, gamma=gamma, cutoff_used=use_cutoff,
        radii=radii, H=H, D=D, phi=phi, phi_gamma=phi_gamma, err_H=eH, err_D=eD,
    )
    octave = radii <= 2.0 * r_min + 1e-15
    trace.lam = float(np.median(phi_gamma[octave]))
    return trace


def _phi_errors(trace: FrequencyTrace) -> np.ndarray:
    """First-order error propagation for phi (or phi_gamma in cutoff mode)."""
    rg = trace.radii**trace.gamma
    if trace.cutoff_used:
        denom = trace.H + rg
        num = trace.D + trace.gamma * rg
    else:
        denom = trace.H
        num = trace.D
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(denom > 0,
                       trace.err_D / np.maximum(denom, 1e-300)
                       + np.abs(num) * trace.err_H / np.maximum(denom, 1e-300) ** 2,
                       np.inf)
    return rel


@dataclass
class MonotonicityAudit:
    mode: str
    violations: list[dict]
    degenerate: bool
    min_phi: float | None
    global_lower_ok: bool | None


def monotonicity_audit(trace: FrequencyTrace, gamma: float | None = None,
                       lower_tol: float = 0.05, h_floor: float = 1e-28) -> MonotonicityAudit:
    """Flag decreases of phi_gamma (cutoff mode) or phi (global mode) in r.

    Decreases between adjacent radii are violations only when they exceed
    the combined propagated quadrature error of the two entries.  Global
    mode additionally checks phi >= 2 - lower_tol.  When H is degenerate
    (below 10x its error estimate at every radius) the audit reports the
    degeneracy and emits no violations.
    """
    if len(trace.radii) < 4:
        raise ValueError("audit needs a trace with at least 4 radii")
    if gamma is not None and abs(gamma - trace.gamma) > 1e-12:
        raise ValueError("gamma mismatch with trace")
    mode = "cutoff" if trace.cutoff_used else "global"
    # h_floor guards against double-rounding dust masquerading as signal
    degenerate = bool(np.all(trace.H <= 10.0 * trace.err_H + h_floor))
    if degenerate:
        return MonotonicityAudit(mode, [], True, None, None)
    q = trace.phi_gamma if trace.cutoff_used else trace.phi
    errs = _phi_errors(trace)
    violations = []
    # radii are stored decreasing; nondecreasing in r means q[i] >= q[i+1] - err
    for i in range(len(trace.radii) - 1):
        allowed = errs[i] + errs[i + 1]
        if q[i] < q[i + 1] - allowed:
            violations.append({
                "r_large": float(trace.radii[i]), "r_small": float(trace.radii[i + 1]),
                "q_large": float(q[i]), "q_small": float(q[i + 1]),
                "excess": float(q[i + 1] - q[i] - allowed),
            })
    min_phi = float(np.nanmin(q)) if np.isfinite(q).any() else None
    lower_ok = None
    if mode == "global":
        lower_ok = bool(np.all(q >= 2.0 - lower_tol - errs))
    return MonotonicityAudit(mode, violations, False, min_phi, lower_ok)
