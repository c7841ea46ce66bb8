"""Tests for circle/sphere geometry, the projected normal family, and the
scalar samplers (slice step, accept-reject, log Bessel)."""

import numpy as np
import pytest
import scipy.integrate
import scipy.special
import scipy.stats

from projdlm import directional as dr
from projdlm._errors import NumericalError

from oracles import length_target_pdf, length_target_sampler

TWO_PI = 2.0 * np.pi


class TestAngleConversions:
    def test_angle_to_unit_cardinal(self):
        np.testing.assert_allclose(dr.angle_to_unit(0.0), [1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(dr.angle_to_unit(np.pi / 2), [0.0, 1.0], atol=1e-15)
        np.testing.assert_allclose(dr.angle_to_unit(np.pi), [-1.0, 0.0], atol=1e-15)

    def test_unit_to_angle_cases(self):
        assert dr.unit_to_angle(np.array([0.0, -1.0])) == pytest.approx(3 * np.pi / 2)
        assert dr.unit_to_angle(np.array([1.0, 0.0])) == pytest.approx(0.0)

    def test_roundtrip(self):
        a = np.linspace(0.0, TWO_PI, 1000, endpoint=False)
        back = dr.unit_to_angle(dr.angle_to_unit(a))
        np.testing.assert_allclose(back, a, atol=1e-12)
        assert dr.unit_to_angle(dr.angle_to_unit(5.5)) == pytest.approx(5.5, abs=1e-12)

    def test_unit_to_angle_dimension_error(self):
        with pytest.raises(ValueError):
            dr.unit_to_angle(np.array([1.0, 0.0, 0.0]))

    def test_to_unit_vector(self):
        u = dr.to_unit_vector([3.0, 4.0])
        np.testing.assert_allclose(u, [0.6, 0.8])
        with pytest.raises(ValueError):
            dr.to_unit_vector([1.0])
        with pytest.raises(ValueError):
            dr.to_unit_vector([0.0, 0.0])


class TestCircularDistance:
    def test_identity_antipode_quarter(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, TWO_PI, 50)
        np.testing.assert_allclose(dr.circular_distance(x, x), 0.0, atol=1e-15)
        assert dr.circular_distance(0.0, np.pi) == pytest.approx(2.0)
        assert dr.circular_distance(0.0, np.pi / 2) == pytest.approx(1.0)

    def test_bounded_symmetric(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(0, TWO_PI, 200)
        b = rng.uniform(0, TWO_PI, 200)
        d = dr.circular_distance(a, b)
        assert np.all(d >= 0.0) and np.all(d <= 2.0)
        np.testing.assert_allclose(d, dr.circular_distance(b, a), atol=1e-15)


class TestSigmaStructured:
    def test_identity_assembly(self):
        s = dr.SigmaStructured(Gamma=np.eye(1), gamma=np.zeros(1))
        np.testing.assert_allclose(dr.assemble_sigma(s), np.eye(2))

    def test_direct_substitution(self):
        s = dr.SigmaStructured(Gamma=np.eye(1), gamma=np.ones(1))
        np.testing.assert_allclose(dr.assemble_sigma(s), [[2.0, 1.0], [1.0, 1.0]])

    def test_three_dimensional(self):
        s = dr.SigmaStructured(Gamma=np.eye(2), gamma=np.zeros(2))
        np.testing.assert_allclose(dr.assemble_sigma(s), np.eye(3))

    def test_bottom_right_always_one(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            k = rng.integers(1, 4)
            A = rng.standard_normal((k, k))
            s = dr.SigmaStructured(Gamma=A @ A.T + 0.1 * np.eye(k),
                                   gamma=rng.standard_normal(k))
            Sig = dr.assemble_sigma(s)
            assert Sig[-1, -1] == 1.0
            np.linalg.cholesky(Sig)

    def test_split_roundtrip(self):
        s = dr.SigmaStructured(Gamma=np.array([[2.0]]), gamma=np.array([0.5]))
        back = dr.split_sigma(dr.assemble_sigma(s))
        np.testing.assert_allclose(back.Gamma, s.Gamma)
        np.testing.assert_allclose(back.gamma, s.gamma)

    def test_invalid_gamma_matrix(self):
        with pytest.raises(NumericalError):
            dr.SigmaStructured(Gamma=-np.eye(1), gamma=np.zeros(1))


class TestProjectedNormalSampling:
    def test_unit_norm(self):
        rng = np.random.default_rng(4)
        u = dr.sample_projected_normal(np.zeros(3), np.eye(3), rng, size=1000)
        np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0, atol=1e-12)

    def test_isotropic_zero_mean_uniform_angle(self):
        rng = np.random.default_rng(5)
        u = dr.sample_projected_normal(np.zeros(2), np.eye(2), rng, size=10**5)
        ang = dr.unit_to_angle(u)
        stat = scipy.stats.kstest(ang / TWO_PI, "uniform")
        assert stat.pvalue > 0.01

    def test_concentrated_mean_direction(self):
        rng = np.random.default_rng(6)
        u = dr.sample_projected_normal(np.array([10.0, 0.0]), np.eye(2), rng, size=10**5)
        ang = dr.unit_to_angle(u)
        circ_mean = np.arctan2(np.sin(ang).mean(), np.cos(ang).mean())
        assert abs(circ_mean) < 0.02

    @pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
    def test_scale_invariance(self, c):
        rng = np.random.default_rng(7)
        mu = np.array([1.0, 0.5])
        Sigma = np.array([[1.0, 0.3], [0.3, 1.0]])
        a1 = dr.unit_to_angle(dr.sample_projected_normal(mu, Sigma, rng, size=10**5))
        a2 = dr.unit_to_angle(dr.sample_projected_normal(c * mu, c * c * Sigma, rng, size=10**5))
        assert scipy.stats.ks_2samp(a1, a2).pvalue > 0.01


class TestPolarLogKernel:
    def test_direct_evaluation(self):
        val = dr.polar_log_kernel(1.0, np.array([1.0, 0.0]), np.zeros(2), np.eye(2))
        assert val == pytest.approx(-0.5 - np.log(TWO_PI), abs=1e-12)

    def test_mean_shift_matches_gaussian(self):
        rng = np.random.default_rng(8)
        u = dr.to_unit_vector(rng.standard_normal(3))
        S = np.eye(3) * 0.7
        m1, m2 = rng.standard_normal(3), rng.standard_normal(3)
        r = 1.7
        diff = dr.polar_log_kernel(r, u, m1, S) - dr.polar_log_kernel(r, u, m2, S)
        expected = scipy.stats.multivariate_normal.logpdf(r * u, m1, S) - \
            scipy.stats.multivariate_normal.logpdf(r * u, m2, S)
        assert diff == pytest.approx(expected, abs=1e-10)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            dr.polar_log_kernel(0.0, np.array([1.0, 0.0]), np.zeros(2), np.eye(2))

    def test_integral_matches_angle_density(self):
        # integrating the r-kernel recovers the n=2 angle density
        mu = np.array([1.2, -0.4])
        Sigma = np.array([[1.0, 0.2], [0.2, 0.8]])
        for a in (0.3, 2.0, 4.5):
            u = dr.angle_to_unit(a)
            val, _ = scipy.integrate.quad(
                lambda r: np.exp(dr.polar_log_kernel(r, u, mu, Sigma)), 0, 30,
                epsabs=1e-12, epsrel=1e-12, limit=200)
            assert val == pytest.approx(dr.pn_density_angle(a, mu, Sigma), rel=1e-8)


class TestPnDensityAngle:
    def test_isotropic_uniform(self):
        for a in (0.0, 1.0, 3.0, 6.0):
            assert dr.pn_density_angle(a, np.zeros(2), np.eye(2)) == pytest.approx(
                1.0 / TWO_PI, rel=1e-9)

    def test_normalization(self):
        mu = np.array([2.0, 1.0])
        Sigma = np.array([[1.5, -0.4], [-0.4, 1.0]])
        grid = np.linspace(0.0, TWO_PI, 4096, endpoint=False)
        vals = dr.pn_density_angle(grid, mu, Sigma)
        total = np.trapezoid(np.append(vals, vals[0]), dx=TWO_PI / 4096)
        assert abs(total - 1.0) < 1e-6

    def test_mode_and_symmetry(self):
        mu = np.array([2.0, 0.0])
        grid = np.linspace(0.0, TWO_PI, 721, endpoint=False)
        vals = dr.pn_density_angle(grid, mu, np.eye(2))
        assert grid[np.argmax(vals)] == pytest.approx(0.0, abs=TWO_PI / 721 + 1e-12)
        plus = dr.pn_density_angle(np.linspace(0.1, 3.0, 12), mu, np.eye(2))
        minus = dr.pn_density_angle(TWO_PI - np.linspace(0.1, 3.0, 12), mu, np.eye(2))
        np.testing.assert_allclose(plus, minus, rtol=1e-8)


class TestSliceStep:
    def test_identity_covariance_coefficient(self):
        rng = np.random.default_rng(9)
        for n in (2, 3, 4):
            u = dr.to_unit_vector(rng.standard_normal(n))
            Si_u = np.linalg.solve(np.eye(n), u)
            assert u @ Si_u == pytest.approx(1.0, abs=1e-12)

    def test_deterministic_trace(self):
        # n=2, a=1, b=0, injected v=e^-2 and w=0.25: interval (0, 2), return 1
        r_new = dr._slice_interval_update(a=1.0, b=0.0, n=2, log_v=-2.0, w=0.25)
        assert float(r_new) == pytest.approx(1.0, abs=1e-14)

    def test_domain_error(self):
        rng = np.random.default_rng(10)
        with pytest.raises(ValueError):
            dr.slice_step_length(0.0, np.array([1.0, 0.0]), np.zeros(2), np.eye(2), rng)

    def test_long_run_total_variation(self):
        # acceptance-style check at (n, m, S) = (2, (1,1), I)
        rng = np.random.default_rng(11)
        u = dr.to_unit_vector(np.array([1.0, 1.0]))  # direction of observation
        m = np.array([1.0, 1.0])
        S = np.eye(2)
        n_steps = 50_000
        r = 1.0
        samples = np.empty(n_steps)
        for i in range(n_steps):
            r = dr.slice_step_length(r, u, m, S, rng)
            samples[i] = r
        edges = np.linspace(0.0, 6.0, 31)
        draw, grid, pdf = length_target_sampler(S, u, m)
        cdf_vals = np.interp(edges, grid,
                             scipy.integrate.cumulative_trapezoid(pdf, grid, initial=0.0))
        cdf_vals /= cdf_vals[-1]
        probs = np.diff(cdf_vals)
        counts, _ = np.histogram(samples, bins=edges)
        frac = counts / n_steps
        tv = 0.5 * (np.abs(frac - probs).sum() + abs((1.0 - frac.sum()) - (1.0 - probs.sum())))
        assert tv < 0.05

    def test_stationarity_from_exact_start(self):
        # start chains at exact draws; one step; compare against fresh draws
        rng = np.random.default_rng(12)
        u = dr.to_unit_vector(np.array([0.5, -1.0]))
        m = np.array([0.8, 0.3])
        S = np.array([[1.0, 0.2], [0.2, 0.7]])
        draw, _, _ = length_target_sampler(S, u, m)
        start = draw(rng, 10_000)
        Si_u = np.linalg.solve(S, u)
        a = float(u @ Si_u)
        b = float(Si_u @ m)
        stepped = dr.slice_steps_batch(start, a, b, 2, rng)
        fresh = draw(rng, 10_000)
        assert scipy.stats.ks_2samp(stepped, fresh).pvalue > 0.01


class TestLogBesselI0:
    def test_zero(self):
        assert dr.log_bessel_i0(0.0) == 0.0

    def test_series_value_at_one(self):
        assert dr.log_bessel_i0(1.0) == pytest.approx(np.log(1.2660658777520084), abs=1e-12)

    def test_against_scipy_scaled(self):
        xs = np.concatenate([np.linspace(0, 14.9, 80), np.linspace(15, 700, 120)])
        ours = dr.log_bessel_i0(xs)
        ref = np.log(scipy.special.i0e(xs)) + xs
        np.testing.assert_allclose(ours, ref, rtol=1e-10, atol=1e-13)

    def test_asymptotic_regime(self):
        val = dr.log_bessel_i0(500.0)
        approx = 500.0 - 0.5 * np.log(TWO_PI * 500.0)
        assert np.isfinite(val)
        assert abs(val - approx) / abs(approx) < 1e-3

    def test_series_oracle_crossover(self):
        import mpmath

        from oracles import bessel_i0_series

        for x in (0.5, 5.0, 14.9, 15.1, 30.0):
            ref = float(mpmath.log(bessel_i0_series(x)))
            assert dr.log_bessel_i0(x) == pytest.approx(ref, rel=1e-10)


class TestAcceptRejectAngle:
    def test_zero_mean_uniform(self):
        rng = np.random.default_rng(13)
        draws = np.array([dr.accept_reject_angle(1.0, np.zeros(2), rng) for _ in range(20000)])
        assert scipy.stats.kstest(draws / TWO_PI, "uniform").pvalue > 0.01

    def test_von_mises_case(self):
        rng = np.random.default_rng(14)
        lam = 1.1
        mu = np.array([np.cos(lam), np.sin(lam)])
        draws = np.array([dr.accept_reject_angle(1.0, mu, rng) for _ in range(20000)])
        centered = np.mod(draws - lam + np.pi, TWO_PI) - np.pi
        assert scipy.stats.kstest(centered, scipy.stats.vonmises(1.0).cdf).pvalue > 0.01

    def test_chi_square_gof_against_density(self):
        rng = np.random.default_rng(15)
        r, mu = 2.0, np.array([1.0, 1.0])
        n_draws = 10**5
        draws = np.array([dr.accept_reject_angle(r, mu, rng) for _ in range(n_draws)])
        edges = np.linspace(0.0, TWO_PI, 41)
        counts, _ = np.histogram(draws, bins=edges)
        probs = np.empty(len(edges) - 1)
        for i in range(len(probs)):
            probs[i], _ = scipy.integrate.quad(
                lambda a: dr.angle_density_given_length(a, r, mu), edges[i], edges[i + 1])
        probs /= probs.sum()
        res = scipy.stats.chisquare(counts, f_exp=probs * n_draws)
        assert res.pvalue > 0.01

    def test_acceptance_rate(self):
        rng = np.random.default_rng(16)
        r, mu = 1.5, np.array([0.6, -0.3])
        kappa = r * np.linalg.norm(mu)
        expected = np.exp(dr.log_bessel_i0(kappa) - kappa)
        trials = 10**5
        draws = 0
        accepts = 0
        while accepts < trials:
            v = rng.uniform(0.0, TWO_PI)
            log_u = np.log1p(-rng.random())
            draws += 1
            if log_u < r * (mu[0] * np.cos(v) + mu[1] * np.sin(v)) - kappa:
                accepts += 1
        rate = accepts / draws
        se = np.sqrt(expected * (1 - expected) / draws)
        assert abs(rate - expected) < 3 * se
