"""Implicit-Euler evolution of the obstacle-form freezing model.

Each step solves the linear complementarity problem for the M-matrix
A = I/dt - Lap_h with right side b = w_prev/dt - 1 using projected SOR
with red-black sweeps, projecting nodewise onto [0, w_prev] when the
upper obstacle (time monotonicity) is enforced and onto [0, inf) otherwise.
A 1D radial mode represents radially symmetric solutions in dimension d.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .field import Field, SpaceTimeGrid

NEUMANN = "neumann"
DIRICHLET = "dirichlet"


@dataclass
class SolverConfig:
    grid: SpaceTimeGrid
    boundary: str = NEUMANN
    psor_omega: float = 1.5
    psor_tol: float = 1e-10
    psor_max_iter: int = 10000
    enforce_monotone: bool = True
    radial_dim: int | None = None

    def __post_init__(self):
        if not 0 < self.psor_omega < 2:
            raise ValueError("psor_omega must lie in (0, 2)")
        if self.psor_tol <= 0:
            raise ValueError("psor_tol must be positive")
        if self.boundary not in (NEUMANN, DIRICHLET):
            raise ValueError(f"boundary must be '{NEUMANN}' or '{DIRICHLET}'")
        if self.radial_dim is not None:
            if self.grid.dim != 1:
                raise ValueError("radial mode requires a 1D grid in r")
            if self.radial_dim < 1:
                raise ValueError("radial_dim must be >= 1")


@dataclass
class StepReport:
    psor_iterations: int
    residual: float
    lower_clamped: int
    upper_clamped: int
    mono_violation: float
    converged: bool


@dataclass
class ValidationReport:
    min_w0: float
    max_laplacian_excess: float
    passed: bool
    tol: float = 1e-8


@dataclass
class RunResult:
    field: Field
    reports: list[StepReport]
    extinction_index: int | None
    extinction_time: float | None
    any_nonconverged: bool = dc_field(init=False)

    def __post_init__(self):
        self.any_nonconverged = any(not r.converged for r in self.reports)


class _Stencil:
    """Off-diagonal neighbor weights of the discrete Laplacian.

    ``apply`` evaluates Lap_h w; ``neighbor_sum`` evaluates only the
    off-diagonal part (what PSOR needs), with ``diag_lap`` the (positive)
    diagonal coefficient so that Lap_h w = neighbor_sum(w) - diag_lap * w.
    """

    def __init__(self, cfg: SolverConfig):
        g = cfg.grid
        self.dx2 = g.dx * g.dx
        self.boundary = cfg.boundary
        self.dim = g.dim
        self.radial_dim = cfg.radial_dim
        if cfg.radial_dim is not None:
            n = g.shape[0]
            d = cfg.radial_dim
            r = g.axis_coords(0)
            if abs(r[0]) > 1e-14:
                raise ValueError("radial grid must start at r = 0")
            w_lo = np.zeros(n)
            w_hi = np.zeros(n)
            # interior: u'' + (d-1)/r u' with centered differences
            w_lo[1:] = 1.0 / self.dx2 - (d - 1) / (2.0 * r[1:] * g.dx)
            w_hi[1:] = 1.0 / self.dx2 + (d - 1) / (2.0 * r[1:] * g.dx)
            # axis: even reflection gives Lap u(0) = 2 d (u1 - u0)/dx^2
            w_hi[0] = 2.0 * d / self.dx2
            w_lo[0] = 0.0
            diag = np.full(n, 2.0 / self.dx2)
            diag[0] = 2.0 * d / self.dx2
            if cfg.boundary == NEUMANN:
                w_lo[n - 1] = 2.0 / self.dx2  # mirror ghost
                w_hi[n - 1] = 0.0
            else:
                w_hi[n - 1] = 0.0
            self.w_lo, self.w_hi, self.diag_lap = w_lo, w_hi, diag
        else:
            self.diag_lap = 2.0 * g.dim / self.dx2

    def neighbor_sum(self, w: np.ndarray) -> np.ndarray:
        dx2 = self.dx2
        if self.radial_dim is not None:
            out = np.zeros_like(w)
            out[1:] += self.w_lo[1:] * w[:-1]
            out[:-1] += self.w_hi[:-1] * w[1:]
            return out
        out = np.zeros_like(w)
        for axis in range(self.dim):
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            lo_t, hi_t = tuple(lo), tuple(hi)
            out[hi_t] += w[lo_t] / dx2
            out[lo_t] += w[hi_t] / dx2
            if self.boundary == NEUMANN:
                first = [slice(None)] * self.dim
                last = [slice(None)] * self.dim
                first[axis] = 0
                last[axis] = -1
                second = [slice(None)] * self.dim
                penult = [slice(None)] * self.dim
                second[axis] = 1
                penult[axis] = -2
                out[tuple(first)] += w[tuple(second)] / dx2
                out[tuple(last)] += w[tuple(penult)] / dx2
            # Dirichlet(0): missing neighbors contribute nothing
        return out

    def apply(self, w: np.ndarray) -> np.ndarray:
        return self.neighbor_sum(w) - self.diag_lap * w


def make_stencil(cfg: SolverConfig) -> _Stencil:
    return _Stencil(cfg)


def validate_initial(w0: np.ndarray, grid: SpaceTimeGrid, d_eff: int | None = None,
                     boundary: str = NEUMANN, tol: float = 1e-8) -> ValidationReport:
    """Consistency report for initial data: w0 >= 0 and Lap_h w0 <= 1 on {w0 > 0}.

    The second condition is the discrete form of eta0 = 1 - Lap w0 >= 0 on
    the liquid set, which the evolution needs at the initial slice.
    """
    w0 = np.asarray(w0, dtype=float)
    cfg = SolverConfig(grid, boundary=boundary, radial_dim=d_eff)
    st = make_stencil(cfg)
    lap = st.apply(w0)
    pos = w0 > 0
    excess = float((lap[pos] - 1.0).max()) if pos.any() else -1.0
    min_w0 = float(w0.min())
    passed = min_w0 >= -tol and excess <= tol
    return ValidationReport(min_w0=min_w0, max_laplacian_excess=excess, passed=passed, tol=tol)


def _red_black_masks(shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.indices(shape).sum(axis=0)
    red = (idx % 2) == 0
    return red, ~red


def step(w_prev: np.ndarray, cfg: SolverConfig,
         stencil: _Stencil | None = None) -> tuple[np.ndarray, StepReport]:
    """One implicit step: solve the LCP min(w - lower, A w - b) = 0 nodewise.

    A = I/dt - Lap_h, b = w_prev/dt - 1, lower = 0 and upper = w_prev when
    the monotone obstacle is enforced (else +inf).  Red-black PSOR with an
    explicit projected predictor as warm start; the natural-map residual
    |w - med(lower, w - (A w - b), upper)| must drop below psor_tol.
    """
    w_prev = np.asarray(w_prev, dtype=float)
    if not np.isfinite(w_prev).all():
        raise ValueError("NaN or Inf in input slice")
    g = cfg.grid
    if stencil is None:
        stencil = make_stencil(cfg)
    dt = g.dt
    b = w_prev / dt - 1.0
    diag = 1.0 / dt + stencil.diag_lap
    lower = np.zeros_like(w_prev)
    upper = w_prev if cfg.enforce_monotone else np.full_like(w_prev, np.inf)

    # warm start: projected explicit predictor (exact for spatially constant data)
    w = np.clip(w_prev + dt * (stencil.apply(w_prev) - 1.0), lower, upper)

    red, black = _red_black_masks(w.shape)
    omega = cfg.psor_omega
    mono_violation = 0.0
    converged = False
    iterations = 0

    def residual(wv: np.ndarray) -> float:
        grad = (1.0 / dt) * wv - stencil.apply(wv) - b
        target = np.clip(wv - grad, lower, upper)
        return float(np.abs(wv - target).max())

    res = residual(w)
    if res <= cfg.psor_tol:
        converged = True
    else:
        for it in range(1, cfg.psor_max_iter + 1):
            for mask in (red, black):
                nb = stencil.neighbor_sum(w)
                gs = (b + nb) / diag
                cand = (1.0 - omega) * w + omega * gs
                if cfg.enforce_monotone:
                    over = cand - upper
                    m = float(over[mask].max()) if mask.any() else 0.0
                    if m > mono_violation:
                        mono_violation = m
                w = np.where(mask, np.clip(cand, lower, upper), w)
            iterations = it
            res = residual(w)
            if res <= cfg.psor_tol:
                converged = True
                break

    if not cfg.enforce_monotone:
        mono_violation = max(0.0, float((w - w_prev).max()))
    report = StepReport(
        psor_iterations=iterations,
        residual=res,
        lower_clamped=int(np.count_nonzero(w <= lower)),
        upper_clamped=int(np.count_nonzero(w >= upper)) if cfg.enforce_monotone else 0,
        mono_violation=mono_violation,
        converged=converged,
    )
    return w, report


def run(w0: np.ndarray, cfg: SolverConfig, force: bool = False) -> RunResult:
    """Evolve w0 over the grid's time range, stopping early at extinction.

    ``validate_initial`` must pass unless ``force`` is set.  After the first
    identically-zero slice the remaining slices are zero-padded; the exact
    lower projection makes extinction detection exact.
    """
    g = cfg.grid
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != g.shape:
        raise ValueError(f"w0 shape {w0.shape} does not match grid {g.shape}")
    report = validate_initial(w0, g, d_eff=cfg.radial_dim, boundary=cfg.boundary)
    if not report.passed and not force:
        raise ValueError(
            f"initial data fails validation (min={report.min_w0:.3g}, "
            f"laplacian excess={report.max_laplacian_excess:.3g}); pass force=True to override"
        )
    stencil = make_stencil(cfg)
    values = np.zeros((g.nt,) + g.shape)
    values[0] = w0
    reports: list[StepReport] = []
    ext_idx: int | None = None
    if not w0.any():
        ext_idx = 0
    else:
        w = w0
        for k in range(1, g.nt):
            w, rep = step(w, cfg, stencil)
            reports.append(rep)
            values[k] = w
            if not w.any():
                ext_idx = k
                break
    fld = Field(g, values)
    ext_time = g.origin_t + ext_idx * g.dt if ext_idx is not None else None
    return RunResult(field=fld, reports=reports, extinction_index=ext_idx,
                     extinction_time=ext_time)


def embed_radial(radial: Field, d_embed: int, time_stride: int = 1,
                 t_index_max: int | None = None,
                 box_radius: float | None = None,
                 mono_tol: float | None = None) -> Field:
    """Map a radial field w(r, t) to a full field on [-R, R]^d_embed by r = |x|.

    ``time_stride`` subsamples the time axis (analysis does not need the
    solver's parabolic dt), ``t_index_max`` trims trailing slices, and
    ``box_radius`` restricts the spatial box; values are linearly
    interpolated in r.
    """
    if radial.grid.dim != 1:
        raise ValueError("embed_radial expects a 1D radial field")
    if d_embed not in (1, 2):
        raise ValueError("embedding targets 1D or 2D full grids")
    g = radial.grid
    R = g.extent[0]
    n = g.shape[0]
    if box_radius is None:
        box_radius = R
    m = min(int(np.floor(box_radius / g.dx + 1e-9)), n - 1)
    xs = g.dx * np.arange(-m, m + 1)
    if t_index_max is None:
        t_index_max = g.nt - 1
    t_idx = np.arange(0, t_index_max + 1, time_stride)
    if d_embed == 1:
        rr = np.abs(xs)
    else:
        rr = np.sqrt(xs[:, None] ** 2 + xs[None, :] ** 2)
    frac = np.clip(rr / g.dx, 0, n - 1)
    i0 = np.clip(np.floor(frac).astype(int), 0, n - 2)
    lam = frac - i0
    vals = np.empty((len(t_idx),) + rr.shape)
    for out_k, k in enumerate(t_idx):
        sl = radial.values[k]
        v = (1 - lam) * sl[i0] + lam * sl[i0 + 1]
        # outside the radial grid (corners of the box): clamp to the rim value
        v = np.where(rr <= R, v, sl[-1])
        vals[out_k] = np.maximum(v, 0.0)
    shape = (len(xs),) * d_embed
    grid = SpaceTimeGrid(
        d_embed, shape, len(t_idx), g.dx, g.dt * time_stride,
        (-m * g.dx,) * d_embed, g.origin_t,
    )
    return Field(grid, vals, mono_tol=mono_tol if mono_tol is not None else radial.mono_tol)
