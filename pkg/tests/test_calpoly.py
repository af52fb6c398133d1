from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stefanlab.calpoly import (
    CaloricPoly, QuadraticForm, RankDeficientError, caloric_basis,
    caloric_extension, gaussian_inner, gradient, heat_op, laguerre_constants,
    lojasiewicz_harmonic_check, lojasiewicz_quadratic_check, poly_dumps,
    poly_h, poly_loads, project_caloric, radial_caloric, spatial_monomials,
    z_op,
)


def P(dim, terms):
    return CaloricPoly(dim, terms)


class TestHeatOp:
    def test_canonical_caloric_quadratic(self):
        p = P(1, {((2,), 0): Fraction(1, 2), ((0,), 1): 1})
        assert heat_op(p).is_zero()

    def test_minus_t(self):
        p = P(1, {((0,), 1): -1})
        assert heat_op(p).coeffs == {((0,), 0): 1}

    def test_cubic_caloric(self):
        p = P(1, {((3,), 0): 1, ((1,), 1): 6})
        assert heat_op(p).is_zero()


class TestZOp:
    def test_minus_t(self):
        p = P(1, {((0,), 1): -1})
        assert z_op(p).coeffs == {((0,), 1): -2}

    def test_constant(self):
        assert z_op(CaloricPoly.constant(1, 1)).is_zero()

    def test_homogeneous_cubic(self):
        p = P(1, {((3,), 0): 1, ((1,), 1): 6})
        assert z_op(p).coeffs == {((3,), 0): 3, ((1,), 1): 18}


class TestCaloricExtension:
    def test_x_squared(self):
        q = caloric_extension(CaloricPoly.monomial(1, (2,)))
        assert q.coeffs == {((2,), 0): Fraction(1), ((0,), 1): Fraction(2)}

    def test_harmonic_one_term(self):
        q = caloric_extension(CaloricPoly.monomial(1, (1,)))
        assert q.coeffs == {((1,), 0): Fraction(1)}

    def test_x_fourth(self):
        q = caloric_extension(CaloricPoly.monomial(1, (4,)))
        assert q.coeffs == {((4,), 0): Fraction(1), ((2,), 1): Fraction(12),
                            ((0,), 2): Fraction(12)}

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_extension_is_caloric_exactly(self, data):
        dim = data.draw(st.integers(1, 3))
        deg = data.draw(st.integers(0, 12))
        betas = spatial_monomials(dim, deg)
        betas = data.draw(st.lists(st.sampled_from(betas), min_size=1, max_size=5))
        coeffs = {}
        for b in betas:
            num = data.draw(st.integers(-50, 50))
            den = data.draw(st.integers(1, 20))
            coeffs[(b, 0)] = coeffs.get((b, 0), 0) + Fraction(num, den)
        h = CaloricPoly(dim, coeffs)
        q = caloric_extension(h)
        assert heat_op(q).is_zero()
        # agrees with h at t = 0
        t0_part = {k: c for k, c in q.coeffs.items() if k[1] == 0}
        assert t0_part == h.coeffs


class TestCaloricBasis:
    def test_dim1_k2(self):
        basis = caloric_basis(1, 2)
        assert len(basis) == 3
        for b in basis:
            assert heat_op(b).is_zero()

    def test_dim1_k0(self):
        basis = caloric_basis(1, 0)
        assert len(basis) == 1
        assert basis[0].coeffs == {((0,), 0): Fraction(1)}

    def test_dim2_k2_size_and_rank(self):
        basis = caloric_basis(2, 2)
        assert len(basis) == 6
        # rank oracle: evaluate on random points, check full column rank
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 2))
        T = rng.uniform(-1, -0.1, size=40)
        M = np.stack([b([X[:, 0], X[:, 1]], T) for b in basis], axis=1)
        assert np.linalg.matrix_rank(M) == 6


class TestGaussianInner:
    def test_kernel_mass(self):
        one = CaloricPoly.constant(1, 1)
        for r in (0.1, 0.5, 2.0):
            assert gaussian_inner(one, one, r) == pytest.approx(1.0, abs=1e-15)

    def test_height_of_minus_t(self):
        mt = P(1, {((0,), 1): -1})
        for r in (0.3, 1.0, 1.7):
            assert poly_h(mt, r) == pytest.approx(r**4, rel=1e-14)

    def test_height_of_caloric_quadratic(self):
        q = P(1, {((2,), 0): 0.5, ((0,), 1): 1.0})
        for r in (0.25, 1.0):
            assert poly_h(q, r) == pytest.approx(2 * r**4, rel=1e-13)

    def test_against_quadrature_oracle(self):
        # independent oracle: dense trapezoid quadrature of (p*q)(x,-r^2) G
        p = P(1, {((2,), 0): 0.5, ((0,), 1): 1.0})
        q = P(1, {((1,), 0): 1.0, ((0,), 1): 2.0})
        r = 0.6
        xs = np.linspace(-12, 12, 400001)
        G = (4 * np.pi * r**2) ** -0.5 * np.exp(-(xs**2) / (4 * r**2))
        pv = p([xs], np.full_like(xs, -r * r))
        qv = q([xs], np.full_like(xs, -r * r))
        oracle = np.trapezoid(pv * qv * G, xs)
        assert gaussian_inner(p, q, r) == pytest.approx(oracle, rel=1e-8)

    def test_positivity(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            coeffs = {}
            for b in spatial_monomials(2, 3):
                for j in range(2):
                    if rng.random() < 0.4:
                        coeffs[(b, j)] = rng.normal()
            if not coeffs:
                continue
            p = CaloricPoly(2, coeffs)
            assert gaussian_inner(p, p, 0.7) >= -1e-12

    def test_scaling_identity_homogeneous(self):
        # parabolically k-homogeneous p: H(r,p) = r^(2k) H(1,p)
        p = P(1, {((3,), 0): 1.0, ((1,), 1): 6.0})  # k = 3
        for r in (0.3, 0.9, 1.4):
            assert poly_h(p, r) == pytest.approx(r**6 * poly_h(p, 1.0), rel=1e-12)

    def test_integration_by_parts_identity(self):
        # 2<grad f, grad g> = <Zf, g> - 2<Hf, g> at r = 1 on random pairs
        rng = np.random.default_rng(7)
        betas = spatial_monomials(2, 4)
        for _ in range(10):
            def rand_poly():
                coeffs = {}
                for b in betas:
                    for j in range(3):
                        if sum(b) + 2 * j <= 4 and rng.random() < 0.35:
                            coeffs[(b, j)] = float(Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 7))))
                coeffs[((0, 0), 0)] = coeffs.get(((0, 0), 0), 0.0) + 1.0
                return CaloricPoly(2, coeffs)

            f, g = rand_poly(), rand_poly()
            lhs = 2 * sum(gaussian_inner(gradient(f, a), gradient(g, a), 1.0) for a in range(2))
            rhs = gaussian_inner(z_op(f), g, 1.0) - 2 * gaussian_inner(heat_op(f), g, 1.0)
            scale = max(1.0, abs(lhs))
            assert abs(lhs - rhs) / scale < 1e-10


class TestProjection:
    def sample_grid(self, nt=4):
        xs = np.linspace(-2, 2, 21)
        ts = np.linspace(-1.5, -0.5, nt)
        X, T = np.meshgrid(xs, ts, indexing="ij")
        return X.ravel()[:, None], T.ravel()

    def test_reproduces_caloric_input(self):
        X, T = self.sample_grid()
        q = P(1, {((2,), 0): 1.0, ((0,), 1): 2.0})
        V = q([X[:, 0]], T)
        poly, res = project_caloric((X, T, V, np.ones_like(V)), 1, 2)
        assert res < 1e-12
        assert poly.coefficient((2,), 0) == pytest.approx(1.0, abs=1e-12)
        assert poly.coefficient((0,), 1) == pytest.approx(2.0, abs=1e-12)

    def test_five_point_hand_oracle(self):
        # samples of x^2 at t = -1 on x in {-2..2}: normal equations solved by
        # hand give fit = (x^2 + 2t) + 2, exact on this single slice
        xs = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        T = np.full(5, -1.0)
        V = xs**2
        poly, res = project_caloric((xs[:, None], T, V, np.ones(5)), 1, 2)
        assert poly.coefficient((2,), 0) == pytest.approx(1.0, abs=1e-12)
        assert poly.coefficient((0,), 1) == pytest.approx(2.0, abs=1e-12)
        assert poly.coefficient((0,), 0) == pytest.approx(2.0, abs=1e-12)
        assert res < 1e-12  # a single slice of x^2 is exactly representable

    def test_noncaloric_two_slices_residual_positive(self):
        # two time slices of the non-caloric x^2 cannot be matched exactly;
        # oracle: solve the 3-parameter normal equations directly
        xs = np.linspace(-2, 2, 9)
        X, T = np.meshgrid(xs, [-1.0, -2.0], indexing="ij")
        x, t = X.ravel(), T.ravel()
        V = x**2
        design = np.stack([np.ones_like(x), x, x**2 + 2 * t], axis=1)
        coef = np.linalg.solve(design.T @ design, design.T @ V)
        poly, res = project_caloric((x[:, None], t, V, np.ones(V.size)), 1, 2)
        assert res > 1e-3
        assert poly.coefficient((0,), 0) == pytest.approx(coef[0], abs=1e-10)
        assert poly.coefficient((1,), 0) == pytest.approx(coef[1], abs=1e-10)
        assert poly.coefficient((2,), 0) == pytest.approx(coef[2], abs=1e-10)
        assert poly.coefficient((0,), 1) == pytest.approx(2 * coef[2], abs=1e-10)

    def test_empty_samples_rank_error(self):
        with pytest.raises(RankDeficientError):
            project_caloric([], 1, 2)

    def test_rank_deficient_names_directions(self):
        # all samples at x = 0: the x-direction is undetermined
        T = np.linspace(-2, -1, 8)
        X = np.zeros((8, 1))
        V = np.ones(8)
        with pytest.raises(RankDeficientError, match="x1"):
            project_caloric((X, T, V, np.ones(8)), 1, 2)

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        X, T = self.sample_grid()
        V = rng.normal(size=len(T))
        W = np.ones_like(V)
        p1, _ = project_caloric((X, T, V, W), 1, 3)
        V2 = p1([X[:, 0]], T)
        p2, res2 = project_caloric((X, T, V2, W), 1, 3)
        assert res2 < 1e-12
        for key in set(p1.coeffs) | set(p2.coeffs):
            assert float(p1.coeffs.get(key, 0)) == pytest.approx(
                float(p2.coeffs.get(key, 0)), abs=1e-10)


class TestRadialCaloric:
    @pytest.mark.parametrize("k", [2, 3, 4, 5])
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_caloric_and_homogeneous(self, k, d):
        p, P_coeffs = radial_caloric(k, d)
        assert heat_op(p).is_zero()
        assert z_op(p).coeffs == {key: 2 * k * c for key, c in p.coeffs.items()}

    def test_normalization_k2_d1(self):
        # d^(2k) p / dr^(2k) = 1: the pure x^(2k) coefficient is 1/(2k)!
        from math import factorial

        p, _ = radial_caloric(2, 1)
        assert p.coefficient((4,), 0) == Fraction(1, factorial(4))

    @pytest.mark.parametrize("k", [2, 3, 4, 5])
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_laguerre_constants_positive(self, k, d):
        c1, c2 = laguerre_constants(k, d)
        assert c1 > 0
        assert c2 > 0
        # the inequality holds with equality on the parabola c1 t = -r^2:
        # d_r p = 2 P'(c1) c1^(1-k) r^(2k-1) = -c2 r^(2k-1)
        _, P_coeffs = radial_caloric(k, d)
        dP = np.polynomial.polynomial.polyder(P_coeffs)
        val = np.polynomial.polynomial.polyval(c1, dP)
        assert val < 0
        assert -2.0 * val / c1 ** (k - 1) == pytest.approx(c2, rel=1e-12)


class TestLojasiewiczQuadratic:
    def test_identity_form(self):
        A = QuadraticForm(np.eye(2))
        dist, bound, ok = lojasiewicz_quadratic_check(A, [1.0, 0.0])
        assert dist == pytest.approx(1.0, abs=1e-10)
        assert bound == pytest.approx(1.0, abs=1e-12)
        assert ok

    def test_point_on_zero_set(self):
        A = QuadraticForm(np.diag([1.0, -1.0]))
        dist, bound, ok = lojasiewicz_quadratic_check(A, [1.0, 1.0])
        assert dist <= 1e-7
        assert ok

    def test_indefinite_cone_distance(self):
        A = QuadraticForm(np.diag([1.0, -1.0]))
        dist, bound, ok = lojasiewicz_quadratic_check(A, [1.0, 0.0])
        assert dist == pytest.approx(1 / np.sqrt(2), abs=1e-6)
        assert bound == pytest.approx(1.0, abs=1e-12)
        assert ok

    def test_zero_form_rejected(self):
        with pytest.raises(ValueError):
            lojasiewicz_quadratic_check(QuadraticForm(np.zeros((2, 2))), [1.0, 0.0])

    @pytest.mark.parametrize("d", [2, 3])
    def test_random_matrices_pass(self, d):
        rng = np.random.default_rng(11)
        for i in range(100):
            M = rng.normal(size=(d, d))
            A = QuadraticForm(M + M.T)
            x = rng.normal(size=d) * rng.uniform(0.1, 3)
            dist, bound, ok = lojasiewicz_quadratic_check(A, x)
            assert ok, f"failed at trial {i}: dist={dist}, bound={bound}"


class TestLojasiewiczHarmonic:
    def test_linear_ratio_one(self):
        h = CaloricPoly.monomial(2, (1, 0))
        pts = np.array([[0.3, 0.1], [-0.2, 0.4], [0.05, -0.3]])
        rep = lojasiewicz_harmonic_check(h, [0.0, 0.0], pts)
        assert rep["empirical_c"] == pytest.approx(1.0, rel=2e-2)

    def test_saddle_hand_case(self):
        # h = x1 x2, x = (a, a): dist = a, |h| = a^2, sup bounded
        h = CaloricPoly.monomial(2, (1, 1))
        a = 0.2
        rep = lojasiewicz_harmonic_check(h, [0.0, 0.0], np.array([[a, a]]))
        assert rep["empirical_c"] is not None
        samp = rep["samples"][0]
        assert samp["dist"] == pytest.approx(a, rel=5e-2)
        assert samp["value"] == pytest.approx(a * a, abs=1e-12)

    def test_point_on_zero_set_skipped(self):
        h = CaloricPoly(2, {((2, 0), 0): 1, ((0, 2), 0): -1})
        rep = lojasiewicz_harmonic_check(h, [0.0, 0.0], np.array([[0.1, 0.1]]))
        assert rep["n_skipped"] == 1

    def test_non_harmonic_rejected(self):
        with pytest.raises(ValueError, match="harmonic"):
            lojasiewicz_harmonic_check(CaloricPoly.monomial(2, (2, 0)), [0.0, 0.0],
                                       np.array([[0.1, 0.1]]))


class TestSerialization:
    def test_roundtrip_rational_and_float(self):
        p = CaloricPoly(2, {((2, 0), 0): Fraction(3, 4), ((0, 0), 1): -1.25,
                            ((1, 1), 2): Fraction(-7, 3)})
        text = poly_dumps(p)
        q = poly_loads(text)
        assert q.dim == 2
        for key in p.coeffs:
            assert float(q.coeffs[key]) == pytest.approx(float(p.coeffs[key]), rel=1e-16)

    def test_header_required(self):
        with pytest.raises(ValueError, match="CALP1"):
            poly_loads("1 2 0\n")

    def test_header_line(self):
        p = CaloricPoly.constant(1, Fraction(1, 2))
        assert poly_dumps(p).splitlines()[0] == "CALP1 1"
