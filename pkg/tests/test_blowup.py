import numpy as np
import pytest

from stefanlab.calpoly import CaloricPoly, caloric_extension
from stefanlab.field import DomainError, Field, SpaceTimeGrid, SpaceTimePoint, sample_function
from stefanlab import blowup as bl


def unit_cylinder_field(fn, dim=1):
    n = bl.RESCALE_NODES
    g = SpaceTimeGrid(dim, (n,) * dim, n, dx=2.0 / (n - 1), dt=1.0 / (n - 1),
                      origin_x=(-1.0,) * dim, origin_t=-1.0)
    return sample_function(g, fn)


class TestRescale:
    def test_planar_scale_invariant(self, planar_example):
        fld = planar_example.field
        pt = SpaceTimePoint((0.0,), 0.25)
        for r in (0.1, 0.3):
            rs = bl.rescale(fld, pt, r)
            ts = rs.grid.times()
            expect = np.maximum(-ts, 0.0)[:, None]
            assert np.abs(rs.values - expect).max() < 1e-12

    def test_halfspace_profile_scale_invariant(self):
        # 2-homogeneous profile: output is the profile itself, up to the
        # O(dx^2 / r^2) interpolation error of the non-affine square
        g = SpaceTimeGrid(1, (257,), 101, 2 / 256, 0.01, (-1.0,), -1.0)
        fld = sample_function(g, lambda x, t: 0.5 * np.maximum(x, 0.0) ** 2 + 0 * t)
        r = 0.2
        rs = bl.rescale(fld, SpaceTimePoint((0.0,), -0.2), r)
        xs = rs.grid.axis_coords(0)
        expect = 0.5 * np.maximum(xs, 0.0) ** 2
        assert np.abs(rs.values - expect[None, :]).max() <= g.dx**2 / r**2

    def test_semigroup_of_rescalings(self, radial_example):
        fld = radial_example.field
        T = radial_example.provenance["extinction_time"]
        pt = SpaceTimePoint((0.0, 0.0), T)
        r1, r2 = 0.2, 0.5
        once = bl.rescale(fld, pt, r1 * r2)
        twice = bl.rescale(bl.rescale(fld, pt, r1), SpaceTimePoint((0.0, 0.0), 0.0), r2)
        dx = fld.grid.dx
        tol = 10 * dx**2 / (r1 * r2) ** 2
        assert np.abs(once.values - twice.values).max() <= tol

    def test_domain_escape_rejected(self, planar_example):
        with pytest.raises(DomainError):
            bl.rescale(planar_example.field, SpaceTimePoint((0.9,), 0.25), 0.3)

    def test_radius_floor(self, planar_example):
        with pytest.raises(ValueError, match="3 dx"):
            bl.rescale(planar_example.field, SpaceTimePoint((0.0,), 0.25),
                       planar_example.field.grid.dx)


class TestFitProfile:
    def test_minus_t_is_singular_m1(self):
        fld = unit_cylinder_field(lambda x, t: np.maximum(-t, 0.0) + 0 * x)
        prof = bl.fit_profile(fld)
        assert prof.kind == "singular"
        assert prof.m == pytest.approx(1.0, abs=1e-9)
        assert np.abs(prof.A).max() < 1e-9
        assert prof.residual < 1e-6

    def test_halfspace_regular_direction(self):
        theta = 0.7
        e = np.array([np.cos(theta), np.sin(theta)])
        fld = unit_cylinder_field(
            lambda x1, x2, t: 0.5 * np.maximum(e[0] * x1 + e[1] * x2, 0.0) ** 2 + 0 * t,
            dim=2)
        prof = bl.fit_profile(fld)
        assert prof.kind == "regular"
        assert np.arccos(np.clip(abs(prof.e @ e), -1, 1)) < 1e-3

    def test_full_square_singular_stratum_one(self):
        fld = unit_cylinder_field(lambda x1, x2, t: 0.5 * x1**2 + 0 * x2 + 0 * t, dim=2)
        prof = bl.fit_profile(fld)
        assert prof.kind == "singular"
        assert prof.m == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(prof.A, np.diag([1.0, 0.0]), atol=1e-9)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_random_members_recovered(self, dim):
        rng = np.random.default_rng(9)
        for _ in range(10):
            m = rng.uniform(0, 1)
            if dim == 1:
                A = np.array([[1 - m]])
            else:
                lam = rng.uniform(0, 1, size=2)
                lam = lam / lam.sum() * (1 - m)
                th = rng.uniform(0, np.pi)
                Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
                A = Q @ np.diag(lam) @ Q.T
                A = 0.5 * (A + A.T)

            def w(x1, x2=None, t=None):
                if dim == 1:
                    t = x2 if t is None else t
                    return np.maximum(-m * t + 0.5 * A[0, 0] * x1**2, 0.0)
                return np.maximum(
                    -m * t + 0.5 * (A[0, 0] * x1**2 + 2 * A[0, 1] * x1 * x2 + A[1, 1] * x2**2),
                    0.0)

            prof = bl.fit_profile(unit_cylinder_field(w, dim=dim))
            assert prof.kind == "singular"
            assert prof.m == pytest.approx(m, abs=1e-3)
            assert np.abs(prof.A - A).max() < 1e-3

    def test_random_regular_profiles_recovered(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            th = rng.uniform(0, 2 * np.pi)
            e = np.array([np.cos(th), np.sin(th)])
            fld = unit_cylinder_field(
                lambda x1, x2, t: 0.5 * np.maximum(e[0] * x1 + e[1] * x2, 0.0) ** 2 + 0 * t,
                dim=2)
            prof = bl.fit_profile(fld)
            assert prof.kind == "regular"
            assert np.arccos(np.clip(abs(prof.e @ e), -1, 1)) < 1e-3

    def test_singular_constraints_exact_after_projection(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            noise = 0.05 * rng.standard_normal((bl.RESCALE_NODES,) * 3)
            base = unit_cylinder_field(
                lambda x1, x2, t: np.maximum(-0.5 * t + 0.2 * x1**2 + 0.1 * x2**2, 0.0),
                dim=2)
            vals = np.maximum(base.values + np.abs(noise) * 0.01, 0.0)
            vals = np.minimum.accumulate(vals, axis=0)
            fld = Field(base.grid, vals, mono_tol=1.0)
            prof = bl.fit_profile(fld)
            if prof.kind == "singular":
                eig = np.linalg.eigvalsh(prof.A)
                assert eig.min() >= -1e-12
                assert abs(np.trace(prof.A) - (1 - prof.m)) < 1e-6
                assert 0.0 <= prof.m <= 1.0


class TestClassify:
    def test_planar_top_stratum_infinite(self, planar_example):
        fld = planar_example.field
        cls = bl.classify(fld, SpaceTimePoint((0.0,), 0.25), [0.05, 0.1, 0.2, 0.4])
        assert cls.kind == "singular"
        assert cls.family == "dynamic"
        assert cls.stratum == 1
        assert cls.frequency == "infinite"
        assert cls.eta_discontinuous
        assert not cls.family_eta_conflict

    def test_radial_sigma_d2(self, radial_example):
        fld = radial_example.field
        T = radial_example.provenance["extinction_time"]
        cls = bl.classify(fld, SpaceTimePoint((0.0, 0.0), T), [0.03, 0.06, 0.12, 0.24])
        assert cls.kind == "singular"
        assert cls.family == "dynamic"
        assert cls.stratum == 2
        assert cls.frequency == 2
        assert 1.8 <= cls.lam <= 2.3

    def test_regular_point_fields_absent(self):
        g = SpaceTimeGrid(1, (257,), 101, 2 / 256, 0.01, (-1.0,), -1.0)
        fld = sample_function(g, lambda x, t: 0.5 * np.maximum(x, 0.0) ** 2 + 0 * t)
        cls = bl.classify(fld, SpaceTimePoint((0.0,), -0.5), [0.05, 0.1, 0.2])
        assert cls.kind == "regular"
        assert cls.stratum is None
        assert cls.family is None
        assert not cls.eta_discontinuous

    def test_scale_consistency(self, radial_example):
        fld = radial_example.field
        T = radial_example.provenance["extinction_time"]
        pt = SpaceTimePoint((0.0, 0.0), T)
        cls0 = bl.classify(fld, pt, [0.03, 0.06, 0.12])
        rs = bl.rescale(fld, pt, 0.2)
        cls1 = bl.classify(rs, SpaceTimePoint((0.0, 0.0), 0.0),
                           [0.2, 0.4, 0.8])
        assert cls0.kind == cls1.kind == "singular"
        assert cls0.family == cls1.family
        assert cls0.stratum == cls1.stratum

    def test_unstable_gives_undetermined(self):
        # random-noise field: no stable profile
        g = SpaceTimeGrid(1, (257,), 101, 2 / 256, 0.01, (-1.0,), -1.0)
        rng = np.random.default_rng(0)
        vals = np.minimum.accumulate(1.0 + 0.5 * rng.random((101, 257)), axis=0)
        fld = Field(g, vals, mono_tol=1.0)
        cls = bl.classify(fld, SpaceTimePoint((0.0,), -0.5), [0.05, 0.1, 0.2],
                          residual_tol=1e-6)
        assert cls.kind == "undetermined"


class TestSecondBlowup:
    def test_synthetic_quartic_recovered(self):
        # w = (-t) - eps * (x^4 + 12 t x^2 + 12 t^2), clamped at 0
        eps = 1e-3
        q4 = caloric_extension(CaloricPoly.monomial(1, (4,)))

        def w(x, t):
            val = np.maximum(-t, 0.0) - eps * (x**4 + 12 * t * x**2 + 12 * t**2)
            return np.maximum(val, 0.0)

        g = SpaceTimeGrid(1, (801,), 801, 1 / 400, 1 / 3200, (-1.0,), -0.25)
        fld = sample_function(g, w)
        sb = bl.second_blowup(fld, SpaceTimePoint((0.0,), 0.0), 4.0, radius=0.3)
        assert not sb.degenerate
        c4 = sb.poly.coefficient((4,), 0)
        assert c4 != 0
        # proportional to the caloric extension of x^4
        assert sb.poly.coefficient((2,), 1) / c4 == pytest.approx(12.0, rel=1e-2)
        assert sb.poly.coefficient((0,), 2) / c4 == pytest.approx(12.0, rel=1e-2)

    def test_radial_quadratic_structure(self, radial_example):
        fld = radial_example.field
        T = radial_example.provenance["extinction_time"]
        sb = bl.second_blowup(fld, SpaceTimePoint((0.0, 0.0), T), 2.0)
        assert not sb.degenerate
        assert sb.a > 0
        assert sb.psd_defect <= 1e-6
        assert sb.trace_gap <= 1e-6 * max(1.0, abs(sb.a))

    def test_tychonoff_degenerate(self, tychonoff_example):
        fld = tychonoff_example.field
        sb = bl.second_blowup(fld, SpaceTimePoint((0.0,), 0.0), 2.0, radius=0.1)
        assert sb.degenerate
        assert "infinite-order" in sb.note


class TestTaylorFit:
    def test_synthetic_cubic_recovered(self):
        eps = 2e-3
        g = SpaceTimeGrid(1, (401,), 401, 1 / 200, 1 / 1600, (-1.0,), -0.25)
        fld = sample_function(
            g, lambda x, t: np.maximum(np.maximum(-t, 0.0) - eps * (x**3 + 6 * t * x), 0.0))
        tf = bl.taylor_fit(fld, SpaceTimePoint((0.0,), 0.0), 3, 0.6, r0=0.4)
        assert tf.poly.coefficient((3,), 0) == pytest.approx(-eps, rel=1e-6)
        assert tf.poly.coefficient((1,), 1) == pytest.approx(-6 * eps, rel=1e-6)
        assert tf.slope >= 3.5

    @pytest.mark.parametrize("k", [3, 4, 5, 6])
    def test_tychonoff_superpolynomial(self, tychonoff_example, k):
        tf = bl.taylor_fit(tychonoff_example.field, SpaceTimePoint((0.0,), 0.0),
                           k, 0.6, r0=0.45)
        assert tf.poly.max_abs_coeff() <= 1e-10
        assert tf.slope >= k + 0.5

    def test_planar_zero(self, planar_example):
        tf = bl.taylor_fit(planar_example.field, SpaceTimePoint((0.0,), 0.25),
                           4, 0.6, r0=0.45)
        assert tf.poly.max_abs_coeff() == 0.0
        assert (tf.residuals <= 1e-13).all()

    def test_beta_range_enforced(self, planar_example):
        with pytest.raises(ValueError, match="beta"):
            bl.taylor_fit(planar_example.field, SpaceTimePoint((0.0,), 0.25), 4, 0.4)

    def test_underresolved_region_rejected(self):
        g = SpaceTimeGrid(1, (9,), 9, 0.25, 0.02, (-1.0,), -0.15)
        fld = sample_function(g, lambda x, t: np.maximum(-t, 0.0) + 0 * x)
        with pytest.raises(ValueError, match="under-resolved|time domain"):
            bl.taylor_fit(fld, SpaceTimePoint((0.0,), 0.0), 3, 0.6, r0=0.35)
