"""Exact polynomial algebra in (x, t) with parabolic-degree grading.

Coefficients are kept as ``fractions.Fraction`` wherever the inputs are
rational, so the heat operator, homogeneity operator, and caloric extension
are exact; least-squares projection works in floats.  Gaussian-weighted
inner products against the backward heat kernel reduce to closed-form
moments (coordinates are independent N(0, 2 r^2) on the slice t = -r^2).
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

MAX_DEGREE = 20

Term = tuple[tuple[int, ...], int]  # (spatial multi-index beta, time power j)


class RankDeficientError(ValueError):
    """The projection design matrix does not determine all coefficients."""


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


@dataclass(frozen=True)
class CaloricPoly:
    """Polynomial in (x, t) stored as a sparse coefficient map.

    The parabolic degree of a term x^beta t^j is |beta| + 2j.  Zero
    coefficients are never stored.
    """

    dim: int
    coeffs: dict[Term, object]

    def __post_init__(self):
        clean = {}
        for (beta, j), c in self.coeffs.items():
            beta = tuple(int(b) for b in beta)
            if len(beta) != self.dim:
                raise ValueError(f"multi-index {beta} has wrong length for dim {self.dim}")
            if any(b < 0 for b in beta) or j < 0:
                raise ValueError("negative exponents are not allowed")
            if sum(beta) + 2 * j > MAX_DEGREE:
                raise ValueError(f"parabolic degree exceeds bound {MAX_DEGREE}")
            if c != 0:
                clean[(beta, int(j))] = c
        object.__setattr__(self, "coeffs", clean)

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def zero(dim: int) -> "CaloricPoly":
        return CaloricPoly(dim, {})

    @staticmethod
    def constant(dim: int, c) -> "CaloricPoly":
        return CaloricPoly(dim, {((0,) * dim, 0): c})

    @staticmethod
    def monomial(dim: int, beta: tuple[int, ...], j: int = 0, c=1) -> "CaloricPoly":
        return CaloricPoly(dim, {(tuple(beta), j): c})

    # -- basic algebra ---------------------------------------------------------

    def __add__(self, other: "CaloricPoly") -> "CaloricPoly":
        if other == 0:
            return self
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        out = dict(self.coeffs)
        for key, c in other.coeffs.items():
            out[key] = out.get(key, 0) + c
        return CaloricPoly(self.dim, out)

    def __sub__(self, other: "CaloricPoly") -> "CaloricPoly":
        return self + other.scale(-1)

    def scale(self, s) -> "CaloricPoly":
        return CaloricPoly(self.dim, {k: s * c for k, c in self.coeffs.items()})

    def __mul__(self, other: "CaloricPoly") -> "CaloricPoly":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        out: dict[Term, object] = {}
        for (b1, j1), c1 in self.coeffs.items():
            for (b2, j2), c2 in other.coeffs.items():
                key = (tuple(a + b for a, b in zip(b1, b2)), j1 + j2)
                out[key] = out.get(key, 0) + c1 * c2
        return CaloricPoly(self.dim, out)

    def is_zero(self) -> bool:
        return not self.coeffs

    def degree(self) -> int:
        """Parabolic degree; -1 for the zero polynomial."""
        if not self.coeffs:
            return -1
        return max(sum(b) + 2 * j for (b, j) in self.coeffs)

    def is_homogeneous(self) -> bool:
        degs = {sum(b) + 2 * j for (b, j) in self.coeffs}
        return len(degs) <= 1

    def coefficient(self, beta: tuple[int, ...], j: int):
        return self.coeffs.get((tuple(beta), j), 0)

    def as_float(self) -> "CaloricPoly":
        return CaloricPoly(self.dim, {k: float(c) for k, c in self.coeffs.items()})

    def max_abs_coeff(self) -> float:
        if not self.coeffs:
            return 0.0
        return max(abs(float(c)) for c in self.coeffs.values())

    def __call__(self, x, t):
        """Evaluate at (x, t); x is an array-like of length dim (broadcastable)."""
        xs = [np.asarray(xi, dtype=float) for xi in np.atleast_1d(np.asarray(x, dtype=object))] \
            if isinstance(x, (list, tuple)) else [np.asarray(x, dtype=float)]
        if len(xs) != self.dim:
            raise ValueError(f"expected {self.dim} coordinate arrays, got {len(xs)}")
        tt = np.asarray(t, dtype=float)
        total = np.zeros(np.broadcast_shapes(*(a.shape for a in xs), tt.shape))
        for (beta, j), c in self.coeffs.items():
            term = np.full_like(total, float(c))
            for a, b in enumerate(beta):
                if b:
                    term = term * xs[a] ** b
            if j:
                term = term * tt**j
            total = total + term
        return total


def heat_op(p: CaloricPoly) -> CaloricPoly:
    """Apply H = Laplacian - d/dt with exact coefficient arithmetic."""
    out: dict[Term, object] = {}
    for (beta, j), c in p.coeffs.items():
        for a in range(p.dim):
            b = beta[a]
            if b >= 2:
                nb = list(beta)
                nb[a] = b - 2
                key = (tuple(nb), j)
                out[key] = out.get(key, 0) + c * b * (b - 1)
        if j >= 1:
            key = (beta, j - 1)
            out[key] = out.get(key, 0) - c * j
    return CaloricPoly(p.dim, out)


def z_op(p: CaloricPoly) -> CaloricPoly:
    """Apply Z = x . grad + 2 t d/dt; multiplies each term by its parabolic degree."""
    return CaloricPoly(
        p.dim, {(b, j): c * (sum(b) + 2 * j) for (b, j), c in p.coeffs.items()}
    )


def laplacian(p: CaloricPoly) -> CaloricPoly:
    out: dict[Term, object] = {}
    for (beta, j), c in p.coeffs.items():
        for a in range(p.dim):
            b = beta[a]
            if b >= 2:
                nb = list(beta)
                nb[a] = b - 2
                key = (tuple(nb), j)
                out[key] = out.get(key, 0) + c * b * (b - 1)
    return CaloricPoly(p.dim, out)


def caloric_extension(h: CaloricPoly) -> CaloricPoly:
    """Extend a spatial polynomial h(x) to the caloric q = sum_i t^i/i! Lap^i h."""
    if any(j != 0 for (_, j) in h.coeffs):
        raise ValueError("caloric_extension expects a polynomial in x only")
    out = CaloricPoly.zero(h.dim)
    cur = h
    i = 0
    while not cur.is_zero():
        shifted = CaloricPoly(
            h.dim, {(b, j + i): c * Fraction(1, factorial(i)) for (b, j), c in cur.coeffs.items()}
        )
        out = out + shifted
        cur = laplacian(cur)
        i += 1
    return out


def spatial_monomials(dim: int, max_degree: int, exact_degree: bool = False):
    """Multi-indices of total degree <= max_degree (or == when exact_degree)."""
    out = []

    def rec(prefix, remaining, axes_left):
        if axes_left == 1:
            for b in range(remaining + 1):
                out.append(prefix + (b,))
            return
        for b in range(remaining + 1):
            rec(prefix + (b,), remaining - b, axes_left - 1)

    rec((), max_degree, dim)
    if exact_degree:
        out = [b for b in out if sum(b) == max_degree]
    return sorted(out, key=lambda b: (sum(b), b))


def caloric_basis(dim: int, k: int, homogeneous_degree: int | None = None) -> list[CaloricPoly]:
    """Spanning basis of caloric polynomials of parabolic degree <= k.

    Built as caloric extensions of all spatial monomials of degree <= k;
    each extension is parabolically homogeneous of the monomial's degree,
    so passing ``homogeneous_degree=j`` restricts to the degree-j slice.
    """
    if k > MAX_DEGREE:
        raise ValueError(f"degree bound {MAX_DEGREE} exceeded")
    if homogeneous_degree is None:
        betas = spatial_monomials(dim, k)
    else:
        betas = spatial_monomials(dim, homogeneous_degree, exact_degree=True)
    return [
        caloric_extension(CaloricPoly.monomial(dim, beta)) for beta in betas
    ]


def gaussian_inner(p: CaloricPoly, q: CaloricPoly, r: float) -> float:
    """<p, q>_r: integral of (p*q)(x, -r^2) against the backward heat kernel.

    Under G(., -r^2) the coordinates are independent centered Gaussians with
    variance 2 r^2, so the integral is a finite sum of moment products:
    E[x^(2m)] = (2m-1)!! (2 r^2)^m, odd moments vanish.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    prod = p * q
    var = 2.0 * float(r) ** 2
    t_val = -float(r) ** 2
    total = 0.0
    for (beta, j), c in prod.coeffs.items():
        if any(b % 2 for b in beta):
            continue
        moment = 1.0
        for b in beta:
            m = b // 2
            moment *= _double_factorial(2 * m - 1) * var**m
        total += float(c) * t_val**j * moment
    return total


def poly_h(p: CaloricPoly, r: float) -> float:
    """Closed-form height H(r, p) = <p, p>_r."""
    return gaussian_inner(p, p, r)


def gradient(p: CaloricPoly, axis: int) -> CaloricPoly:
    out: dict[Term, object] = {}
    for (beta, j), c in p.coeffs.items():
        b = beta[axis]
        if b >= 1:
            nb = list(beta)
            nb[axis] = b - 1
            key = (tuple(nb), j)
            out[key] = out.get(key, 0) + c * b
    return CaloricPoly(p.dim, out)


def poly_d(p: CaloricPoly, r: float) -> float:
    """Closed-form energy D(r, p) = 2 r^2 <grad p, grad p>_r."""
    total = 0.0
    for a in range(p.dim):
        g = gradient(p, a)
        total += gaussian_inner(g, g, r)
    return 2.0 * float(r) ** 2 * total


def project_caloric(
    samples: list[tuple[tuple[float, ...], float, float, float]]
    | tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    dim: int,
    k: int,
    basis: list[CaloricPoly] | None = None,
) -> tuple[CaloricPoly, float]:
    """Weighted least-squares fit of caloric polynomials (degree <= k) to samples.

    Parameters
    ----------
    samples : list of (x, t, value, weight) or tuple of arrays (X, T, V, W)
        ``X`` has shape (n, dim).
    dim, k : int
        Spatial dimension and parabolic degree bound.
    basis : optional
        Explicit basis (e.g. only homogeneous degrees 3..k); defaults to the
        full caloric basis of degree <= k.

    Returns
    -------
    (poly, residual)
        The minimizer and the weighted root-mean-square residual.

    Raises
    ------
    RankDeficientError
        If the weighted design matrix cannot determine all coefficients;
        the message names the undetermined polynomial directions.
    """
    if basis is None:
        basis = caloric_basis(dim, k)
    if isinstance(samples, tuple) and len(samples) == 4:
        X, T, V, W = (np.asarray(a, dtype=float) for a in samples)
        X = X.reshape(len(V), dim)
    else:
        if len(samples) == 0:
            raise RankDeficientError("no samples provided")
        X = np.array([s[0] for s in samples], dtype=float).reshape(len(samples), dim)
        T = np.array([s[1] for s in samples], dtype=float)
        V = np.array([s[2] for s in samples], dtype=float)
        W = np.array([s[3] for s in samples], dtype=float)
    if len(V) == 0:
        raise RankDeficientError("no samples provided")
    if (W < 0).any():
        raise ValueError("weights must be nonnegative")
    sw = np.sqrt(W)
    cols = []
    for b in basis:
        xs = [X[:, a] for a in range(dim)]
        cols.append(b(xs, T))
    A = np.stack(cols, axis=1) * sw[:, None]
    y = V * sw
    scale = np.linalg.norm(A, axis=0)
    rank_tol = 1e-10
    if (scale <= rank_tol * max(scale.max(initial=0.0), 1.0)).any() or len(V) < len(basis):
        bad = [i for i, s in enumerate(scale) if s <= rank_tol * max(scale.max(initial=0.0), 1.0)]
        names = ", ".join(_describe_basis_elem(basis[i]) for i in bad) or "all directions"
        raise RankDeficientError(f"design matrix rank-deficient in: {names}")
    coef, _, rank, _ = np.linalg.lstsq(A / scale, y, rcond=None)
    if rank < len(basis):
        u, s, vt = np.linalg.svd(A / scale)
        null = vt[rank:]
        worst = np.argmax(np.abs(null), axis=1)
        names = ", ".join(_describe_basis_elem(basis[i]) for i in sorted(set(worst)))
        raise RankDeficientError(f"design matrix rank-deficient in: {names}")
    coef = coef / scale
    out = CaloricPoly.zero(dim)
    for c, b in zip(coef, basis):
        if c != 0.0:
            out = out + b.scale(float(c))
    fit = np.stack(cols, axis=1) @ coef
    wsum = W.sum()
    residual = float(np.sqrt(np.sum(W * (V - fit) ** 2) / wsum)) if wsum > 0 else 0.0
    return out.as_float(), residual


def _describe_basis_elem(p: CaloricPoly) -> str:
    if not p.coeffs:
        return "0"
    (beta, j), _ = max(p.coeffs.items(), key=lambda kv: sum(kv[0][0]))
    parts = [f"x{a + 1}^{b}" for a, b in enumerate(beta) if b]
    if j:
        parts.append(f"t^{j}")
    return "*".join(parts) if parts else "1"


# ---------------------------------------------------------------------------
# Radial caloric polynomials and the associated decay constants
# ---------------------------------------------------------------------------


def radial_caloric(k: int, d: int) -> tuple[CaloricPoly, np.ndarray]:
    """Homogeneous radial caloric polynomial of degree 2k with d^(2k)p/dr^(2k) = 1.

    Returns the polynomial (in x1..xd, exact rationals) together with the
    coefficients of P where p = (-t)^k P(s), s = r^2/(-t); ``P[j]`` is the
    coefficient of s^j, as floats ordered by increasing power.

    The construction is the caloric extension of h = r^(2k)/(2k)!, using
    Lap r^(2m) = 2m (2m + d - 2) r^(2m-2) exactly, which both guarantees
    caloricity and pins the normalization.
    """
    if k < 1 or d < 1:
        raise ValueError("need k >= 1 and d >= 1")
    # radial coefficients: p = sum_i t^i/i! c_i r^(2(k-i)), c_0 = 1/(2k)!
    cs = [Fraction(1, factorial(2 * k))]
    for i in range(k):
        m = k - i
        cs.append(cs[-1] * 2 * m * (2 * m + d - 2))
    # P(s) with p = (-t)^k P(s): coefficient of s^(k-i) is (-1)^i c_i / i!
    P = np.zeros(k + 1)
    for i, c in enumerate(cs):
        P[k - i] = float(c) * (-1) ** i / factorial(i)
    # expand r^(2m) into monomials of x
    poly = CaloricPoly.zero(d)
    r2 = CaloricPoly.zero(d)
    for a in range(d):
        beta = [0] * d
        beta[a] = 2
        r2 = r2 + CaloricPoly.monomial(d, tuple(beta))
    r2m = CaloricPoly.constant(d, Fraction(1))
    powers = [r2m]
    for _ in range(k):
        r2m = r2m * r2
        powers.append(r2m)
    for i, c in enumerate(cs):
        term = powers[k - i].scale(c * Fraction(1, factorial(i)))
        term = CaloricPoly(d, {(b, j + i): cc for (b, j), cc in term.coeffs.items()})
        poly = poly + term
    return poly, P


def laguerre_constants(k: int, d: int, n_scan: int = 20000) -> tuple[float, float]:
    """Constants (c1, c2) for the radial decay bound d_r p <= -c2 r^(2k-1).

    Scans P'(s) on (0, s_max], s_max = 10 (d + 2k), picks c1 at the most
    negative value of P', and returns c2 = -2 P'(c1) / c1^(k-1) so that
    d_r p = -c2 r^(2k-1) exactly on the parabola c1 t = -r^2.
    """
    if k < 2:
        raise ValueError("need k >= 2")
    _, P = radial_caloric(k, d)
    dP = np.polynomial.polynomial.polyder(P)
    s_max = 10.0 * (d + 2 * k)
    s = np.linspace(s_max / n_scan, s_max, n_scan)
    vals = np.polynomial.polynomial.polyval(s, dP)
    i = int(np.argmin(vals))
    if vals[i] >= 0:
        raise RuntimeError(
            f"no sign change of P' found in (0, {s_max}] for k={k}, d={d}; "
            "this contradicts the radial decay lemma and indicates a bug"
        )
    c1 = float(s[i])
    c2 = -2.0 * float(vals[i]) / c1 ** (k - 1)
    return c1, c2


# ---------------------------------------------------------------------------
# Lojasiewicz-type checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticForm:
    """f(x) = A x . x for a symmetric matrix A."""

    matrix: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        if not np.array_equal(A, A.T):
            raise ValueError("matrix must be exactly symmetric")
        object.__setattr__(self, "matrix", A)

    def __call__(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.matrix @ x)

    def min_nonzero_abs_eigenvalue(self, tol: float = 1e-12) -> float:
        eig = np.linalg.eigvalsh(self.matrix)
        nz = np.abs(eig)[np.abs(eig) > tol * max(1.0, np.abs(eig).max())]
        if nz.size == 0:
            raise ValueError("quadratic form is zero")
        return float(nz.min())


def _cone_project(z: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Retract z onto the cone {sum lam_i z_i^2 = 0} by rescaling the +/- parts."""
    pos = lam > 0
    neg = lam < 0
    p = float(np.sum(lam[pos] * z[pos] ** 2))
    n = float(np.sum(-lam[neg] * z[neg] ** 2))
    if p == 0.0 and n == 0.0:
        return z
    if p == 0.0 or n == 0.0:
        # one side empty: the nearest cone point zeroes the active part
        out = z.copy()
        out[pos if p > 0 else neg] = 0.0
        return out
    # scale positive part by a, negative part by a*sqrt(p/n); minimize
    # (a-1)^2 |u|^2 + (a g - 1)^2 |v|^2 with g = sqrt(p/n)
    g = np.sqrt(p / n)
    u2 = float(np.sum(z[pos] ** 2))
    v2 = float(np.sum(z[neg] ** 2))
    a = (u2 + g * v2) / (u2 + g * g * v2)
    out = z.copy()
    out[pos] *= a
    out[neg] *= a * g
    return out


def distance_to_quadric(A: QuadraticForm, x: np.ndarray, tol: float = 1e-8,
                        n_starts: int = 24, seed: int = 0) -> float:
    """Distance from x to {A y . y = 0} by multi-start projected descent.

    The form is diagonalized first.  Semidefinite forms admit a closed-form
    answer (the zero set is the kernel); indefinite ones are handled by
    gradient steps on |z - y|^2 retracted onto the cone, from several starts.
    The returned value is the norm to a feasible cone point, hence an upper
    bound on the true distance, certified to the descent tolerance.
    """
    x = np.asarray(x, dtype=float)
    lam, Q = np.linalg.eigh(A.matrix)
    scale = np.abs(lam).max()
    if scale == 0:
        raise ValueError("quadratic form is zero")
    active = np.abs(lam) > 1e-12 * scale
    lam = np.where(active, lam, 0.0)
    y = Q.T @ x
    if not ((lam > 0).any() and (lam < 0).any()):
        # semidefinite: zero set is the kernel of A
        return float(np.linalg.norm(y[lam != 0]))
    rng = np.random.default_rng(seed)
    best = np.inf
    starts = [_cone_project(y, lam)]
    for _ in range(n_starts - 1):
        starts.append(_cone_project(y + rng.normal(scale=max(np.linalg.norm(y), 1.0), size=y.shape), lam))
    for z0 in starts:
        z = z0.copy()
        step = 0.5
        d_prev = np.linalg.norm(z - y)
        for _ in range(400):
            z_new = _cone_project(z + step * (y - z), lam)
            d_new = np.linalg.norm(z_new - y)
            if d_new <= d_prev - 1e-16:
                z, d_prev = z_new, d_new
            else:
                step *= 0.5
                if step < tol * 1e-3:
                    break
        best = min(best, d_prev)
    return float(best)


def lojasiewicz_quadratic_check(A: QuadraticForm, x, tol: float = 1e-6
                                ) -> tuple[float, float, bool]:
    """Check dist(x, {f=0}) <= |f(x)|^(1/2) / sqrt(alpha) for f = A x . x.

    Returns (distance, bound, pass).  alpha is the smallest nonzero
    |eigenvalue| of A; the distance comes from the certified descent oracle.
    """
    x = np.asarray(x, dtype=float)
    alpha = A.min_nonzero_abs_eigenvalue()
    dist = distance_to_quadric(A, x)
    bound = np.sqrt(abs(A(x))) / np.sqrt(alpha)
    return dist, float(bound), dist <= bound + tol


def _poly_eval_spatial(h: CaloricPoly, pts: np.ndarray) -> np.ndarray:
    xs = [pts[:, a] for a in range(h.dim)]
    return h(xs, np.zeros(len(pts)))


def _poly_grad_spatial(h: CaloricPoly, pts: np.ndarray) -> np.ndarray:
    out = np.zeros_like(pts)
    for a in range(h.dim):
        out[:, a] = _poly_eval_spatial(gradient(h, a), pts)
    return out


def lojasiewicz_harmonic_check(
    h: CaloricPoly,
    x0,
    sample_points: np.ndarray,
    n_zero_samples: int = 4000,
    seed: int = 0,
) -> dict:
    """Empirical constant for |h(x)| >= c ||h||_inf dist(x, {h=0})^k.

    ``h`` must be harmonic (checked exactly) and x0 a point on its zero set.
    The zero set is sampled densely in B_1(x0) (sign-change bisection along
    random segments plus gradient-flow refinement from each sample point);
    the reported ``c`` is the minimum ratio over the usable samples.
    """
    if not laplacian(h).is_zero():
        raise ValueError("polynomial is not harmonic")
    x0 = np.asarray(x0, dtype=float)
    k = h.degree()
    if abs(float(_poly_eval_spatial(h, x0[None, :])[0])) > 1e-10:
        raise ValueError("x0 is not on the zero set of h")
    pts = np.asarray(sample_points, dtype=float).reshape(-1, h.dim)
    rng = np.random.default_rng(seed)
    d = h.dim

    # sup norm of h over B_1(x0), sampled
    dirs = rng.normal(size=(2048, d))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    radii = rng.uniform(0, 1, size=2048) ** (1.0 / d)
    ball = x0 + dirs * radii[:, None]
    sup_h = float(np.abs(_poly_eval_spatial(h, ball)).max())
    if sup_h == 0:
        raise ValueError("polynomial vanishes identically on the sampled ball")

    # dense zero-set sampling: bisection on random segments with a sign change
    a_pts = x0 + rng.normal(size=(n_zero_samples, d)) * 0.6
    b_pts = x0 + rng.normal(size=(n_zero_samples, d)) * 0.6
    fa = _poly_eval_spatial(h, a_pts)
    fb = _poly_eval_spatial(h, b_pts)
    mask = fa * fb < 0
    lo, hi = a_pts[mask], b_pts[mask]
    flo = fa[mask]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = _poly_eval_spatial(h, mid)
        go_hi = flo * fm <= 0
        hi = np.where(go_hi[:, None], mid, hi)
        lo = np.where(go_hi[:, None], lo, mid)
        flo = np.where(go_hi, flo, fm)
    zeros = 0.5 * (lo + hi)
    zeros = np.vstack([zeros, x0[None, :]])

    ratios = []
    records = []
    for x in pts:
        val = abs(float(_poly_eval_spatial(h, x[None, :])[0]))
        # gradient-flow refinement toward {h=0} from x itself
        z = x.copy()
        for _ in range(200):
            hz = float(_poly_eval_spatial(h, z[None, :])[0])
            g = _poly_grad_spatial(h, z[None, :])[0]
            g2 = float(g @ g)
            if abs(hz) < 1e-14 * max(sup_h, 1.0) or g2 < 1e-30:
                break
            z = z - hz * g / g2
        cand = [np.linalg.norm(x - z)] if abs(float(_poly_eval_spatial(h, z[None, :])[0])) < 1e-10 * max(sup_h, 1.0) else []
        cand.append(float(np.min(np.linalg.norm(zeros - x, axis=1))))
        dist = min(cand)
        if dist < 1e-6 or val < 1e-12:
            records.append({"x": x.tolist(), "skipped": True})
            continue
        ratio = val / (sup_h * dist**k)
        ratios.append(ratio)
        records.append({"x": x.tolist(), "dist": dist, "value": val, "ratio": ratio})
    return {
        "degree": k,
        "sup_norm": sup_h,
        "empirical_c": min(ratios) if ratios else None,
        "n_used": len(ratios),
        "n_skipped": len(pts) - len(ratios),
        "samples": records,
    }


# ---------------------------------------------------------------------------
# CALP1 plain-text serialization: header "CALP1 dim", one term per line
# "coeff beta_1 [... beta_dim] j"
# ---------------------------------------------------------------------------


def poly_dumps(p: CaloricPoly) -> str:
    lines = [f"CALP1 {p.dim}"]
    for (beta, j), c in sorted(p.coeffs.items()):
        if isinstance(c, Fraction):
            cs = f"{c.numerator}/{c.denominator}"
        else:
            cs = f"{float(c):.17g}"
        lines.append(" ".join([cs, *map(str, beta), str(j)]))
    return "\n".join(lines) + "\n"


def poly_loads(text: str) -> CaloricPoly:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("CALP1"):
        raise ValueError("missing CALP1 header")
    parts = lines[0].split()
    if len(parts) != 2:
        raise ValueError("malformed CALP1 header")
    dim = int(parts[1])
    coeffs: dict[Term, object] = {}
    for ln in lines[1:]:
        toks = ln.split()
        if len(toks) != dim + 2:
            raise ValueError(f"term line has {len(toks)} tokens, expected {dim + 2}")
        c = Fraction(toks[0]) if "/" in toks[0] else float(toks[0])
        beta = tuple(int(b) for b in toks[1 : 1 + dim])
        j = int(toks[-1])
        coeffs[(beta, j)] = coeffs.get((beta, j), 0) + c
    return CaloricPoly(dim, coeffs)
