"""Reference fields with known singular-set structure.

Four constructions: the planar field (t0 - t)^+ (whole-slab freezing), the
flat caloric perturbation built from derivatives of exp(-1/t^2) (total
freezing at t = 0 with infinite-order contact), radially symmetric solver
runs (quadratic second blow-up at the extinction center), and a gluing of
shrunken copies of a base radial solution (several top-stratum points at
prescribed centers and times).
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction

import numpy as np

from .field import Field, SpaceTimeGrid, sample_function
from .solver import RunResult, SolverConfig, embed_radial, run


@dataclass
class TychonoffSeries:
    """Exact derivative data for g(t) = exp(-1/t^2) (t < 0), g = 0 otherwise.

    g^(k)(t) = R_k(1/t) exp(-1/t^2) with rational R_k built by the recurrence
    R_{k+1}(s) = -s^2 R_k'(s) + 2 s^3 R_k(s); deg R_k = 3k.  Finite
    differences on exp(-1/t^2) are hopeless near t = 0, the recurrence is
    exact.
    """

    order: int
    rk: list = dc_field(default_factory=list)

    def __post_init__(self):
        R = [Fraction(1)]  # R_0 = 1, coefficients by increasing power of s
        self.rk = [list(R)]
        for _ in range(self.order + 2):  # two extra for tail/derivative bounds
            dR = [R[i] * i for i in range(1, len(R))]
            nxt = [Fraction(0)] * (len(R) + 3)
            for i, c in enumerate(dR):
                nxt[i + 2] -= c
            for i, c in enumerate(R):
                nxt[i + 3] += 2 * c
            R = nxt
            self.rk.append(list(R))

    def g_derivative(self, k: int, t: np.ndarray) -> np.ndarray:
        """g^(k) evaluated for t < 0 entries (0 elsewhere)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        neg = t < 0
        if neg.any():
            s = 1.0 / t[neg]
            coeffs = np.array([float(c) for c in self.rk[k]])
            poly = np.polynomial.polynomial.polyval(s, coeffs)
            out[neg] = poly * np.exp(-s * s)
        return out

    def phi(self, x1: np.ndarray, t: np.ndarray, order: int | None = None) -> np.ndarray:
        """Truncated flat caloric series sum_k g^(k)(t) x1^(2k) / (2k)!."""
        if order is None:
            order = self.order
        x1 = np.asarray(x1, dtype=float)
        t = np.asarray(t, dtype=float)
        from math import factorial

        total = np.zeros(np.broadcast_shapes(x1.shape, t.shape))
        for k in range(order + 1):
            total = total + self.g_derivative(k, t) * x1 ** (2 * k) / factorial(2 * k)
        return total


@dataclass
class GluingPlan:
    """Placement of shrunken radial copies p_n = sum_{m<=n} 2^-m e, n = 1..n_max."""

    n_max: int
    direction: np.ndarray = dc_field(default_factory=lambda: np.array([1.0]))

    def __post_init__(self):
        if not 1 <= self.n_max <= 4:
            raise ValueError("n_max must be in 1..4 (the grid cannot resolve more)")
        e = np.asarray(self.direction, dtype=float)
        self.direction = e / np.linalg.norm(e)

    def centers(self) -> list[np.ndarray]:
        return [self.direction * sum(2.0**-m for m in range(1, n + 1))
                for n in range(1, self.n_max + 1)]


@dataclass
class ExampleField:
    field: Field
    provenance: dict
    radial_field: Field | None = None
    run_result: RunResult | None = None


class TychonoffValidityError(ValueError):
    pass


def make_planar(t0: float, grid: SpaceTimeGrid) -> ExampleField:
    """Exact samples of (t0 - t)^+; every spatial point freezes at t = t0."""
    if not grid.origin_t <= t0 <= grid.t_final:
        raise ValueError("t0 outside the grid's time range")
    if grid.dim == 1:
        fld = sample_function(grid, lambda x, t: np.maximum(t0 - t, 0.0))
    else:
        fld = sample_function(grid, lambda x1, x2, t: np.maximum(t0 - t, 0.0))
    return ExampleField(fld, {"example": "planar", "t0": t0})


def make_tychonoff(eps: float, order: int, grid: SpaceTimeGrid) -> ExampleField:
    """w = (-t)^+ + eps * phi_K with the flat caloric perturbation phi_K.

    Requires the domain inside B_1 x (-1, 1) and order <= 12.  The validity
    report (in the provenance) checks on the grid that w > 0 and the
    discrete time difference is negative for t < 0, that w = 0 for t >= 0,
    and that the discrete heat residual Lap_h w - dt_h w - chi_{t<0} stays
    within the recorded truncation + discretization bound.
    """
    if order > 12:
        raise ValueError("order must be <= 12")
    for a in range(grid.dim):
        if grid.origin_x[a] < -1 or grid.origin_x[a] + grid.extent[a] > 1:
            raise ValueError("grid domain must lie inside B_1")
    if grid.origin_t < -1 or grid.t_final > 1:
        raise ValueError("grid time range must lie inside (-1, 1)")
    series = TychonoffSeries(order)
    ts = grid.times()
    x1 = grid.axis_coords(0)
    if grid.dim == 1:
        phi = series.phi(x1[None, :], ts[:, None])
        base = np.maximum(-ts, 0.0)[:, None]
    else:
        phi = series.phi(x1[None, :, None], ts[:, None, None])
        base = np.maximum(-ts, 0.0)[:, None, None]
    w = np.broadcast_to(base, (grid.nt,) + grid.shape) + eps * phi

    liquid = ts < 0
    wl = w[liquid]
    if (wl <= 0).any():
        bad = np.unravel_index(int(np.argmin(wl)), wl.shape)
        raise TychonoffValidityError(
            f"eps={eps} too large: w <= 0 at liquid node index {tuple(int(i) for i in bad)}"
        )
    # discrete monotonicity for t < 0
    k_neg = np.nonzero(liquid)[0]
    diffs = np.diff(w, axis=0)
    mono_ok = bool((diffs[k_neg[:-1]] < 0).all()) if len(k_neg) > 1 else True
    frozen = ts >= 0
    frozen_ok = bool((np.abs(w[frozen]) == 0.0).all()) if frozen.any() else True

    # discrete heat residual on interior nodes with t < 0 (backward time difference)
    dx2 = grid.dx**2
    resid_max = 0.0
    for k in range(1, grid.nt):
        if ts[k] >= 0:
            break
        sl = w[k]
        if grid.dim == 1:
            lap = np.zeros_like(sl)
            lap[1:-1] = (sl[2:] - 2 * sl[1:-1] + sl[:-2]) / dx2
            interior = np.zeros_like(sl, dtype=bool)
            interior[1:-1] = True
        else:
            lap = np.zeros_like(sl)
            lap[1:-1, :] += (sl[2:, :] - 2 * sl[1:-1, :] + sl[:-2, :]) / dx2
            lap[:, 1:-1] += (sl[:, 2:] - 2 * sl[:, 1:-1] + sl[:, :-2]) / dx2
            interior = np.zeros_like(sl, dtype=bool)
            interior[1:-1, 1:-1] = True
        wt = (w[k] - w[k - 1]) / grid.dt
        resid = lap - wt - 1.0
        resid_max = max(resid_max, float(np.abs(resid[interior]).max()))

    # recorded bound: spatial + temporal discretization from exact series
    # derivatives, plus the truncation tail from the next two series terms
    from math import factorial

    mid = ts[liquid]
    xmax = max(abs(x1[0]), abs(x1[-1]))
    d4x = 0.0
    d2t = 0.0
    for k in range(order + 1):
        if 2 * k >= 4:
            d4x += float(np.abs(series.g_derivative(k, mid)).max()) * xmax ** (2 * k - 4) / factorial(2 * k - 4)
        d2t += float(np.abs(series.g_derivative(k + 2, mid)).max()) * xmax ** (2 * k) / factorial(2 * k)
    disc_bound = eps * (dx2 / 12.0 * d4x + grid.dt / 2.0 * d2t) \
        + grid.dt / 2.0  # (-t) part has w_tt = 0; dt/2 covers the kink slice
    tail = 0.0
    for k in (order + 1, order + 2):
        tail += float(np.abs(series.g_derivative(k, mid)).max()) * xmax ** (2 * k) / factorial(2 * k)
    tol = disc_bound + 2.0 * eps * tail * (1.0 / dx2 + 1.0 / grid.dt)

    report = {
        "positivity_ok": True,
        "monotone_ok": mono_ok,
        "frozen_slice_ok": frozen_ok,
        "heat_residual_max": resid_max,
        "heat_residual_bound": tol,
        "heat_residual_ok": resid_max <= tol,
        "truncation_tail": tail,
    }
    report["passed"] = all(report[k] for k in
                           ("positivity_ok", "monotone_ok", "frozen_slice_ok", "heat_residual_ok"))
    fld = Field(grid, np.ascontiguousarray(w))
    return ExampleField(fld, {"example": "tychonoff", "eps": eps, "order": order,
                              "validity": report})


def make_radial(d: int, profile, grid: SpaceTimeGrid,
                boundary: str = "neumann",
                embed_dim: int | None = None,
                embed_time_stride: int | None = None,
                embed_box_radius: float | None = None,
                embed_time_factor: float = 1.6,
                psor_tol: float = 1e-10) -> ExampleField:
    """Run the radial solver on w0(r) to extinction and embed by r = |x|.

    ``profile`` maps r to w0 >= 0 (radially nonincreasing).  Returns the
    embedded field for the analysis modules plus the raw (r, t) field and
    the run result; provenance records extinction time and center.  The
    embedding keeps one post-extinction margin (factor ``embed_time_factor``
    of the extinction index) so forward-in-time cleaning windows resolve.
    """
    if grid.dim != 1:
        raise ValueError("radial runs use a 1D grid in r")
    r = grid.axis_coords(0)
    w0 = np.asarray(profile(r), dtype=float)
    if (np.diff(w0) > 1e-12).any():
        raise ValueError("radial profile must be nonincreasing in r")
    cfg = SolverConfig(grid, boundary=boundary, radial_dim=d, psor_tol=psor_tol)
    result = run(w0, cfg)
    radial_field = result.field
    if embed_dim is None:
        embed_dim = min(d, 2)
    used = result.extinction_index if result.extinction_index is not None else grid.nt - 1
    if embed_time_stride is None:
        # resolve the smallest analysis radii in time, keep slice count modest
        embed_time_stride = max(1, used // 500)
    t_index_max = min(grid.nt - 1, int(np.ceil(used * embed_time_factor)) + 2)
    embedded = embed_radial(radial_field, embed_dim, time_stride=embed_time_stride,
                            t_index_max=t_index_max, box_radius=embed_box_radius)
    prov = {
        "example": "radial",
        "d": d,
        "extinction_time": result.extinction_time,
        "extinction_index": result.extinction_index,
        "center": [0.0] * embed_dim,
        "embed_dim": embed_dim,
        "embed_time_stride": embed_time_stride,
        "nonconverged_steps": int(sum(not r.converged for r in result.reports)),
    }
    return ExampleField(embedded, prov, radial_field=radial_field, run_result=result)


def radial_slice_monotone(radial_field: Field) -> bool:
    """Check each time slice is nonincreasing in r (maximum-principle property)."""
    tol = max(radial_field.mono_tol, 1e-12)
    return bool((np.diff(radial_field.values, axis=1) <= tol).all())


def make_glued(plan: GluingPlan, grid: SpaceTimeGrid, base: ExampleField | None = None,
               base_nodes: int = 257, base_amp: float = 0.01,
               base_support: float = 0.3) -> ExampleField:
    """Superpose shrunken copies of a base radial solution at the plan's centers.

    Copy n carries 2^-2n u(2^n (x - p_n), 2^2n (t - t_origin)) and freezes at
    t_n = t_origin + 4^-n T with T the base extinction time.  The base is
    resolved on its own fine grid and injected by interpolation; supports
    must be pairwise disjoint on the grid (the default base support radius
    0.3 < 1/3 guarantees it for the dyadic centers).  Valid initial data
    needs base_amp <= base_support^2 / 8, else the bump's discrete Laplacian
    exceeds 1 near the support edge.
    """
    if grid.dim != 1:
        raise ValueError("the gluing example is built on 1D grids")
    if base is None:
        dx_b = 1.0 / (base_nodes - 1)
        dt_b = dx_b * dx_b / 2.0
        nt_b = int(np.ceil(4.0 * base_amp / dt_b)) + 2
        bgrid = SpaceTimeGrid(1, (base_nodes,), nt_b, dx_b, dt_b, (0.0,), 0.0)
        base = make_radial(
            1, lambda r: base_amp * np.maximum(1.0 - (r / base_support) ** 2, 0.0) ** 2,
            bgrid, embed_dim=1, embed_time_stride=1, embed_time_factor=1.05)
    if base.run_result is None or base.run_result.extinction_time is None:
        raise ValueError("base radial field must reach extinction")
    T = base.run_result.extinction_time - base.field.grid.origin_t
    u = base.field  # embedded 1D even field on [-R, R], time origin at 0

    centers = plan.centers()
    t_origin = grid.origin_t
    xs = grid.axis_coords(0)
    ts = grid.times()
    vals = np.zeros((grid.nt,) + grid.shape)
    supports = []
    ug = u.grid
    for n, p_n in enumerate(centers, start=1):
        scale = 2.0**n
        # spatial argument of the base copy, clipped to its grid
        xi = scale * (xs - p_n[0])
        inside = np.abs(xi) <= ug.extent[0] / 2
        supports.append((float(p_n[0] - base_support / scale),
                         float(p_n[0] + base_support / scale)))
        xi_c = np.clip(xi, ug.origin_x[0], ug.origin_x[0] + ug.extent[0])
        fx = (xi_c - ug.origin_x[0]) / ug.dx
        i0 = np.clip(np.floor(fx).astype(int), 0, ug.shape[0] - 2)
        lx = fx - i0
        for k, t in enumerate(ts):
            tau = scale * scale * (t - t_origin) + ug.origin_t
            if tau <= ug.origin_t:
                sl = u.values[0]
            elif tau >= ug.t_final:
                continue  # copy already extinct: contributes zero
            else:
                ft = (tau - ug.origin_t) / ug.dt
                k0 = min(int(np.floor(ft)), ug.nt - 2)
                lt = ft - k0
                sl = (1 - lt) * u.values[k0] + lt * u.values[k0 + 1]
            contrib = (1 - lx) * sl[i0] + lx * sl[i0 + 1]
            vals[k] += np.where(inside, contrib, 0.0) / (scale * scale)

    # disjointness on the grid: numerically positive regions must not overlap
    for i in range(len(supports)):
        for j in range(i + 1, len(supports)):
            lo = max(supports[i][0], supports[j][0])
            hi = min(supports[i][1], supports[j][1])
            if lo < hi:
                raise ValueError(f"copies {i + 1} and {j + 1} overlap on [{lo}, {hi}]")

    expected = [
        {"x": [float(c[0])], "t": float(t_origin + 4.0**-n * T)}
        for n, c in enumerate(centers, start=1)
    ]
    fld = Field(grid, vals)
    prov = {
        "example": "glued",
        "n_max": plan.n_max,
        "base_extinction": T,
        "expected_singular_points": expected,
        "supports": supports,
        "injection_dx": ug.dx,
    }
    return ExampleField(fld, prov, radial_field=base.radial_field, run_result=base.run_result)
