"""Space-time grids, sampled fields, interpolation, and the SSTF1 file format.

The field w(x, t) is the obstacle-form unknown of the supercooled freezing
model: nonnegative, nonincreasing in time, stored time-major so the solver
can append one slice per step and the analysis layer can read contiguous
slices.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

MAGIC = b"SSTF1"
DEFAULT_MONO_TOL = 1e-12


class DomainError(ValueError):
    """A query point lies outside the grid's closed space-time domain."""


class FieldFormatError(ValueError):
    """An SSTF1 stream is malformed (bad magic, truncation, shape mismatch)."""


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform tensor grid on a box in space crossed with a time interval.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    shape : tuple of int
        Per-axis node counts ``(n1,)`` or ``(n1, n2)``.
    nt : int
        Number of time levels.
    dx : float
        Spatial spacing, identical on all axes.
    dt : float
        Time spacing.
    origin_x : tuple of float
        Coordinate of index 0 on each spatial axis.
    origin_t : float
        Time of index 0.
    """

    dim: int
    shape: tuple[int, ...]
    nt: int
    dx: float
    dt: float
    origin_x: tuple[float, ...]
    origin_t: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.shape) != self.dim or len(self.origin_x) != self.dim:
            raise ValueError("shape/origin_x length must equal dim")
        if self.dx <= 0 or self.dt <= 0:
            raise ValueError("dx and dt must be positive")
        if self.nt < 2 or any(n < 2 for n in self.shape):
            raise ValueError("all counts must be >= 2")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "origin_x", tuple(float(v) for v in self.origin_x))

    @property
    def extent(self) -> tuple[float, ...]:
        return tuple((n - 1) * self.dx for n in self.shape)

    @property
    def t_final(self) -> float:
        return self.origin_t + (self.nt - 1) * self.dt

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin_x[axis] + self.dx * np.arange(self.shape[axis])

    def times(self) -> np.ndarray:
        return self.origin_t + self.dt * np.arange(self.nt)

    def domain_radius(self) -> float:
        """Radius of the largest ball around the spatial center inside the box."""
        return 0.5 * min(self.extent)

    def center(self) -> tuple[float, ...]:
        return tuple(o + 0.5 * e for o, e in zip(self.origin_x, self.extent))

    def contains(self, x, t: float, slack: float = 1e-12) -> bool:
        for a in range(self.dim):
            lo = self.origin_x[a]
            if not (lo - slack <= x[a] <= lo + self.extent[a] + slack):
                return False
        return self.origin_t - slack <= t <= self.t_final + slack


@dataclass(frozen=True)
class SpaceTimePoint:
    """A point (x, t) used for interpolation and as a blow-up center."""

    x: tuple[float, ...]
    t: float

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))


@dataclass
class Field:
    """Sampled w on a SpaceTimeGrid, time-major then row-major.

    ``values[k]`` is the spatial slice at time index k.  Construction
    validates w >= -mono_tol and records (but does not repair) the largest
    violation of time monotonicity; solver output can then be audited
    honestly instead of silently clipped.
    """

    grid: SpaceTimeGrid
    values: np.ndarray
    mono_tol: float = DEFAULT_MONO_TOL
    max_mono_violation: float = dc_field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        expected = (self.grid.nt,) + self.grid.shape
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != expected:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {expected}"
            )
        vmin = float(self.values.min())
        if vmin < -self.mono_tol:
            raise ValueError(f"negative field value {vmin} below -mono_tol")
        if self.max_mono_violation is None:
            if self.grid.nt > 1:
                incr = np.diff(self.values, axis=0)
                self.max_mono_violation = max(0.0, float(incr.max()))
            else:
                self.max_mono_violation = 0.0

    @property
    def monotone_ok(self) -> bool:
        return self.max_mono_violation <= self.mono_tol

    def slice_at(self, k: int) -> np.ndarray:
        return self.values[k]

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


def interpolate(fld: Field, p: SpaceTimePoint) -> float:
    """Multilinear interpolation of w at p, clamped below at 0.

    Linear along each spatial axis and in time, so any function that is
    affine per cell is reproduced exactly.  The clamp keeps interpolation
    artifacts from creating phantom liquid where w vanishes.
    """
    g = fld.grid
    idx = []
    frac = []
    for a in range(g.dim):
        u = (p.x[a] - g.origin_x[a]) / g.dx
        if u < -1e-9 or u > g.shape[a] - 1 + 1e-9:
            raise DomainError(
                f"coordinate x{a + 1}={p.x[a]} outside [{g.origin_x[a]}, "
                f"{g.origin_x[a] + g.extent[a]}]"
            )
        i = min(int(np.floor(u)), g.shape[a] - 2)
        i = max(i, 0)
        idx.append(i)
        frac.append(min(max(u - i, 0.0), 1.0))
    ut = (p.t - g.origin_t) / g.dt
    if ut < -1e-9 or ut > g.nt - 1 + 1e-9:
        raise DomainError(
            f"coordinate t={p.t} outside [{g.origin_t}, {g.t_final}]"
        )
    k = min(max(int(np.floor(ut)), 0), g.nt - 2)
    ft = min(max(ut - k, 0.0), 1.0)

    def corner(kk: int) -> float:
        sl = fld.values[kk]
        if g.dim == 1:
            i = idx[0]
            return (1 - frac[0]) * sl[i] + frac[0] * sl[i + 1]
        i, j = idx
        fx, fy = frac
        return (
            (1 - fx) * (1 - fy) * sl[i, j]
            + fx * (1 - fy) * sl[i + 1, j]
            + (1 - fx) * fy * sl[i, j + 1]
            + fx * fy * sl[i + 1, j + 1]
        )

    val = (1 - ft) * corner(k) + ft * corner(k + 1)
    return max(val, 0.0)


def interpolate_slice(fld: Field, t: float, xs: list[np.ndarray]) -> np.ndarray:
    """Vectorized interpolation of a whole spatial slice at time t.

    ``xs`` holds one coordinate array per spatial axis (already broadcast
    to a common shape).  Equivalent to calling :func:`interpolate` pointwise
    but a few hundred times faster on analysis-sized grids.
    """
    g = fld.grid
    ut = (t - g.origin_t) / g.dt
    if ut < -1e-9 or ut > g.nt - 1 + 1e-9:
        raise DomainError(f"coordinate t={t} outside [{g.origin_t}, {g.t_final}]")
    k = min(max(int(np.floor(ut)), 0), g.nt - 2)
    ft = min(max(ut - k, 0.0), 1.0)

    idx = []
    frac = []
    for a in range(g.dim):
        u = (np.asarray(xs[a], dtype=float) - g.origin_x[a]) / g.dx
        if (u < -1e-9).any() or (u > g.shape[a] - 1 + 1e-9).any():
            bad = np.asarray(xs[a]).ravel()[int(np.argmax((u < -1e-9) | (u > g.shape[a] - 1 + 1e-9)))]
            raise DomainError(f"coordinate x{a + 1}={bad} outside grid domain")
        i = np.clip(np.floor(u).astype(int), 0, g.shape[a] - 2)
        idx.append(i)
        frac.append(np.clip(u - i, 0.0, 1.0))

    def corner(kk: int) -> np.ndarray:
        sl = fld.values[kk]
        if g.dim == 1:
            i, fx = idx[0], frac[0]
            return (1 - fx) * sl[i] + fx * sl[i + 1]
        i, j = idx
        fx, fy = frac
        return (
            (1 - fx) * (1 - fy) * sl[i, j]
            + fx * (1 - fy) * sl[i + 1, j]
            + (1 - fx) * fy * sl[i, j + 1]
            + fx * fy * sl[i + 1, j + 1]
        )

    out = (1 - ft) * corner(k) + ft * corner(k + 1)
    return np.maximum(out, 0.0)


def eta_slice(fld: Field, time_index: int) -> np.ndarray:
    """Discrete temperature eta = -w_t at a slice, by backward difference.

    Requires ``time_index >= 1`` since the difference looks one step back.
    """
    if time_index < 1:
        raise ValueError("eta_slice needs time_index >= 1 (no backward neighbor)")
    if time_index >= fld.grid.nt:
        raise ValueError(f"time_index {time_index} out of range")
    return (fld.values[time_index - 1] - fld.values[time_index]) / fld.grid.dt


# ---------------------------------------------------------------------------
# SSTF1 file format
#
# bytes 0-4   ASCII magic "SSTF1"
# byte  5     unsigned dim
# next        (dim+1) uint32 LE counts: n1[, n2], nt
# next        (dim+3) float64 LE: dx, dt, origin_x1[, origin_x2], origin_t
# next        2 float64 LE: mono_tol, recorded max monotonicity violation
# payload     nt*n1[*n2] float64 LE, time-major then row-major
# ---------------------------------------------------------------------------


def header_size(dim: int) -> int:
    return 5 + 1 + 4 * (dim + 1) + 8 * (dim + 3) + 8 * 2


def file_size(grid: SpaceTimeGrid) -> int:
    n_payload = grid.nt * int(np.prod(grid.shape))
    return header_size(grid.dim) + 8 * n_payload


def write_field(fld: Field, path) -> None:
    g = fld.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("B", g.dim))
        fh.write(struct.pack(f"<{g.dim + 1}I", *g.shape, g.nt))
        reals = (g.dx, g.dt, *g.origin_x, g.origin_t)
        fh.write(struct.pack(f"<{g.dim + 3}d", *reals))
        fh.write(struct.pack("<2d", fld.mono_tol, fld.max_mono_violation))
        fh.write(fld.values.astype("<f8").tobytes())


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:5] != MAGIC:
        raise FieldFormatError(f"bad magic {raw[:5]!r}, expected {MAGIC!r}")
    if len(raw) < 6:
        raise FieldFormatError("truncated header: missing dim byte")
    dim = raw[5]
    if dim not in (1, 2):
        raise FieldFormatError(f"unsupported dim {dim}")
    off = 6
    need = 4 * (dim + 1)
    if len(raw) < off + need:
        raise FieldFormatError("truncated header: missing counts")
    counts = struct.unpack_from(f"<{dim + 1}I", raw, off)
    off += need
    need = 8 * (dim + 3)
    if len(raw) < off + need:
        raise FieldFormatError("truncated header: missing grid reals")
    reals = struct.unpack_from(f"<{dim + 3}d", raw, off)
    off += need
    if len(raw) < off + 16:
        raise FieldFormatError("truncated header: missing tolerance block")
    mono_tol, violation = struct.unpack_from("<2d", raw, off)
    off += 16
    shape, nt = counts[:-1], counts[-1]
    dx, dt = reals[0], reals[1]
    origin_x = reals[2 : 2 + dim]
    origin_t = reals[2 + dim]
    n_payload = nt * int(np.prod(shape))
    if len(raw) - off != 8 * n_payload:
        raise FieldFormatError(
            f"payload size {len(raw) - off} does not match shape "
            f"{shape + (nt,)} (expected {8 * n_payload} bytes)"
        )
    values = np.frombuffer(raw, dtype="<f8", offset=off).reshape((nt,) + shape)
    grid = SpaceTimeGrid(dim, shape, nt, dx, dt, origin_x, origin_t)
    return Field(grid, values.copy(), mono_tol=mono_tol, max_mono_violation=violation)


def sample_function(grid: SpaceTimeGrid, fn) -> Field:
    """Sample fn(x..., t) exactly on the grid nodes and wrap as a Field."""
    axes = [grid.axis_coords(a) for a in range(grid.dim)]
    ts = grid.times()
    if grid.dim == 1:
        xx = axes[0][None, :]
        tt = ts[:, None]
        vals = fn(xx, tt)
    else:
        x1 = axes[0][None, :, None]
        x2 = axes[1][None, None, :]
        tt = ts[:, None, None]
        vals = fn(x1, x2, tt)
    vals = np.broadcast_to(vals, (grid.nt,) + grid.shape).astype(np.float64)
    return Field(grid, vals.copy())
