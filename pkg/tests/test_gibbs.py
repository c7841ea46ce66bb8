"""Tests for the conditional draws and the full Gibbs sweep."""

import numpy as np
import pytest
import scipy.special
import scipy.stats

from projdlm import directional as dr
from projdlm import gibbs
from projdlm._errors import ConfigError
from projdlm.kalman import StateSpaceParams, simulate_series


def small_spec(rng, n=2, p=2, T=6, fixed=None, truncate=True):
    priors = gibbs.default_priors(n, p)
    F = rng.standard_normal((T, n, p))
    return gibbs.ModelSpec(n=n, p=p, F=F, priors=priors,
                           fixed=fixed or gibbs.FixedTheta(), truncate_G=truncate)


def random_state(rng, spec, T):
    theta = gibbs.ThetaDraw.from_blocks(
        Gamma=np.eye(spec.n - 1), gamma=0.2 * np.ones(spec.n - 1),
        G=0.5 * np.eye(spec.p), W=0.5 * np.eye(spec.p))
    states = rng.standard_normal((T + 1, spec.p))
    lengths = rng.gamma(2.0, 1.0, T) + 0.1
    return gibbs.GibbsState(theta=theta, states=states, lengths=lengths)


class TestInverseWishart:
    def test_mean_against_rule(self):
        rng = np.random.default_rng(40)
        df, scale = 9.0, np.array([[2.0, 0.3], [0.3, 1.0]])
        draws = np.array([gibbs.sample_inverse_wishart(df, scale, rng)
                          for _ in range(10**5)])
        p = 2
        expected = scale / (df - p - 1)
        sd = draws.std(axis=0)
        err = np.abs(draws.mean(axis=0) - expected)
        np.testing.assert_array_less(err, 4 * sd / np.sqrt(10**5))

    def test_matches_scaled_inverse_chi_square(self):
        # for a 1x1 scale s: s / IW_1(df, s) ~ chi2(df)
        rng = np.random.default_rng(4141)
        df, scale = 7.0, np.array([[1.5]])
        ours = np.array([gibbs.sample_inverse_wishart(df, scale, rng)[0, 0]
                         for _ in range(20000)])
        assert scipy.stats.kstest(scale[0, 0] / ours, scipy.stats.chi2(df).cdf).pvalue > 0.01


class TestDrawStates:
    def test_degenerate_deterministic(self):
        rng = np.random.default_rng(42)
        n = p = 2
        priors = gibbs.default_priors(n, p)
        priors.P0 = np.zeros((p, p))
        spec = gibbs.ModelSpec(n=n, p=p, F=np.eye(n), priors=priors)
        T = 4
        obs = dr.to_unit_vector(rng.standard_normal((T, n)))
        state = random_state(rng, spec, T)
        G = state.theta.G
        state.theta = gibbs.ThetaDraw.from_blocks(
            state.theta.Gamma, state.theta.gamma, G, np.zeros((p, p)))
        path = gibbs.draw_states(state, obs, spec, rng)
        expected = np.array([np.linalg.matrix_power(G, t) @ priors.s0_mean
                             for t in range(T + 1)])
        np.testing.assert_allclose(path, expected, atol=1e-12)


class TestDrawGamma:
    def test_dof_arithmetic(self):
        rng = np.random.default_rng(43)
        spec = small_spec(rng, T=5)
        obs = dr.to_unit_vector(rng.standard_normal((5, 2)))
        state = random_state(rng, spec, 5)
        spec.priors.d0 = 4.0
        d_T, _ = gibbs.Gamma_posterior_params(state, obs, spec)
        assert d_T == 9.0

    def test_zero_residuals_recover_prior_scale(self):
        rng = np.random.default_rng(44)
        n, p, T = 3, 2, 4
        spec = small_spec(rng, n=n, p=p, T=T)
        state = random_state(rng, spec, T)
        # craft observations so that z_t = y_t - F_t s_t = 0 exactly:
        F = spec.F
        mu = np.einsum("tnp,tp->tn", F, state.states[1:])
        lengths = np.linalg.norm(mu, axis=1)
        obs = mu / lengths[:, None]
        state.lengths = lengths
        d_T, Phi_T = gibbs.Gamma_posterior_params(state, obs, spec)
        np.testing.assert_allclose(Phi_T, spec.priors.Phi0, atol=1e-10)
        assert d_T == spec.priors.d0 + T

    def test_iw_mean_of_draws(self):
        rng = np.random.default_rng(45)
        spec = small_spec(rng, n=3, T=4)
        obs = dr.to_unit_vector(rng.standard_normal((4, 3)))
        state = random_state(rng, spec, 4)
        d_T, Phi_T = gibbs.Gamma_posterior_params(state, obs, spec)
        draws = np.array([gibbs.draw_Gamma(state, obs, spec, rng) for _ in range(10**5)])
        expected = Phi_T / (d_T - spec.n)  # (n-1)-dim IW mean rule
        sd = draws.std(axis=0)
        np.testing.assert_array_less(np.abs(draws.mean(axis=0) - expected),
                                     4 * sd / np.sqrt(10**5))


class TestDrawGammaVector:
    def test_no_signal_returns_prior(self):
        rng = np.random.default_rng(46)
        n, p, T = 2, 2, 4
        spec = small_spec(rng, n=n, p=p, T=T)
        state = random_state(rng, spec, T)
        # z_{n,t} = 0: make residuals live only in the first coordinate
        F = spec.F
        mu = np.einsum("tnp,tp->tn", F, state.states[1:])
        y = mu + np.column_stack([np.ones(T), np.zeros(T)])
        lengths = np.linalg.norm(y, axis=1)
        obs = y / lengths[:, None]
        state.lengths = lengths
        mean, cov = gibbs.gamma_posterior_moments(state, obs, spec)
        np.testing.assert_allclose(mean, spec.priors.gammabar0, atol=1e-10)
        np.testing.assert_allclose(cov, spec.priors.Lambda0, atol=1e-10)

    def test_flat_prior_limit_scalar_regression(self):
        rng = np.random.default_rng(47)
        n, p, T = 2, 1, 1
        priors = gibbs.default_priors(n, p)
        priors.Lambda0 = np.array([[1e12]])
        spec = gibbs.ModelSpec(n=n, p=p, F=rng.standard_normal((T, n, p)), priors=priors)
        state = random_state(rng, spec, T)
        obs = dr.to_unit_vector(rng.standard_normal((T, n)))
        z = state.lengths[:, None] * obs - np.einsum(
            "tnp,tp->tn", spec.F, state.states[1:])
        mean, _ = gibbs.gamma_posterior_moments(state, obs, spec)
        assert mean[0] == pytest.approx(z[0, 0] / z[0, 1], rel=1e-6)

    def test_collapsed_equals_dense_kronecker(self):
        rng = np.random.default_rng(48)
        for _ in range(20):
            n = int(rng.integers(2, 5))
            p = int(rng.integers(1, 3))
            T = int(rng.integers(1, 5))
            spec = small_spec(rng, n=n, p=p, T=T)
            state = random_state(rng, spec, T)
            obs = dr.to_unit_vector(rng.standard_normal((T, n)))
            mean, cov = gibbs.gamma_posterior_moments(state, obs, spec)

            # dense evaluation of the literal Kronecker formulas
            z = state.lengths[:, None] * obs - np.einsum(
                "tnp,tp->tn", spec.F, state.states[1:])
            w = z[:, :-1].ravel()
            v = z[:, -1]
            k = n - 1
            V = np.kron(v[:, None], np.eye(k))
            Gi = np.linalg.inv(state.theta.Gamma)
            big = np.kron(np.eye(T), Gi)
            Lam0_inv = np.linalg.inv(spec.priors.Lambda0)
            Lam_T = np.linalg.inv(Lam0_inv + V.T @ big @ V)
            mean_dense = Lam_T @ (Lam0_inv @ spec.priors.gammabar0 + V.T @ big @ w)
            np.testing.assert_allclose(cov, Lam_T, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(mean, mean_dense, rtol=1e-10, atol=1e-12)


class TestDrawGW:
    def test_dof_arithmetic(self):
        rng = np.random.default_rng(49)
        p = 2
        priors = gibbs.default_priors(2, p)
        priors.nu0 = 5.0
        states = rng.standard_normal((8, p))  # T = 7 transitions
        nu_T, _, _, _ = gibbs.var_posterior_params(states, priors)
        assert nu_T == 12.0

    def test_zero_states_recover_prior(self):
        rng = np.random.default_rng(50)
        p = 3
        priors = gibbs.default_priors(2, p)
        states = np.zeros((6, p))
        nu_T, Psi_T, Bbar, Om_T = gibbs.var_posterior_params(states, priors)
        np.testing.assert_allclose(Om_T, priors.Omega0)
        np.testing.assert_allclose(Bbar, priors.Gbar0.T)
        np.testing.assert_allclose(Psi_T, priors.Psi0)

    def test_mean_of_G_draws_matches_posterior_mean(self):
        rng = np.random.default_rng(51)
        n, p, T = 2, 2, 30
        spec = small_spec(rng, n=n, p=p, T=T, truncate=False)
        state = random_state(rng, spec, T)
        _, _, Bbar, _ = gibbs.var_posterior_params(state.states, spec.priors)
        draws = np.array([gibbs.draw_G_W(state, spec, rng, truncate=False)[0]
                          for _ in range(10**5)])
        sd = draws.std(axis=0)
        np.testing.assert_array_less(np.abs(draws.mean(axis=0) - Bbar.T),
                                     4 * sd / np.sqrt(10**5))

    def test_truncation_active(self):
        rng = np.random.default_rng(52)
        spec = small_spec(rng, T=6)
        state = random_state(rng, spec, 6)
        for _ in range(50):
            G, _ = gibbs.draw_G_W(state, spec, rng, truncate=True)
            assert np.max(np.abs(np.linalg.eigvals(G))) < 1.0

    def test_partially_fixed(self):
        rng = np.random.default_rng(53)
        Gfix = 0.3 * np.eye(2)
        Wfix = 0.7 * np.eye(2)
        spec = small_spec(rng, fixed=gibbs.FixedTheta(G=Gfix), T=6)
        state = random_state(rng, spec, 6)
        G, W = gibbs.draw_G_W(state, spec, rng)
        np.testing.assert_array_equal(G, Gfix)
        assert not np.allclose(W, state.theta.W)
        spec2 = small_spec(rng, fixed=gibbs.FixedTheta(W=Wfix), T=6)
        G2, W2 = gibbs.draw_G_W(state, spec2, rng)
        np.testing.assert_array_equal(W2, Wfix)


class TestDrawLengths:
    def test_chi_distribution_moments(self):
        # Sigma = I and F_t s_t = 0: the target is the chi distribution
        rng = np.random.default_rng(54)
        n, p, T = 3, 1, 5000
        priors = gibbs.default_priors(n, p)
        spec = gibbs.ModelSpec(n=n, p=p, F=np.zeros((n, p)), priors=priors)
        state = random_state(rng, spec, T)
        state.states = np.zeros((T + 1, p))
        state.theta = gibbs.ThetaDraw.from_blocks(
            np.eye(n - 1), np.zeros(n - 1), state.theta.G, state.theta.W)
        obs = dr.to_unit_vector(rng.standard_normal((T, n)))
        r = np.ones(T)
        for _ in range(300):
            state.lengths = r
            r = gibbs.draw_lengths(state, obs, spec, rng)
        chi_mean = np.sqrt(2) * np.exp(
            scipy.special.gammaln((n + 1) / 2) - scipy.special.gammaln(n / 2))
        chi_var = n - chi_mean**2
        se_mean = np.sqrt(chi_var / T)
        assert abs(r.mean() - chi_mean) < 4 * se_mean
        emp_var = r.var()
        se_var = chi_var * np.sqrt(2.0 / T) * 2  # loose bound on var-of-variance
        assert abs(emp_var - chi_var) < 4 * se_var

    def test_positive_lengths(self):
        rng = np.random.default_rng(55)
        spec = small_spec(rng, T=50)
        state = random_state(rng, spec, 50)
        obs = dr.to_unit_vector(rng.standard_normal((50, 2)))
        for _ in range(100):
            state.lengths = gibbs.draw_lengths(state, obs, spec, rng)
            assert np.all(state.lengths > 0)


class TestSweepAndDriver:
    def test_all_fixed_only_states_and_lengths_move(self):
        rng = np.random.default_rng(56)
        n = p = 2
        fixed = gibbs.FixedTheta(Sigma=np.eye(n), G=0.5 * np.eye(p), W=0.3 * np.eye(p))
        spec = small_spec(rng, n=n, p=p, T=8, fixed=fixed)
        obs = dr.to_unit_vector(rng.standard_normal((8, n)))
        state = gibbs.initial_state(obs, spec)
        new = gibbs.gibbs_sweep(state, obs, spec, rng)
        np.testing.assert_array_equal(new.theta.G, fixed.G)
        np.testing.assert_array_equal(new.theta.W, fixed.W)
        np.testing.assert_array_equal(new.theta.Sigma, fixed.Sigma)
        assert not np.array_equal(new.states, state.states)
        assert not np.array_equal(new.lengths, state.lengths)

    def test_sweep_preserves_invariants(self):
        rng = np.random.default_rng(57)
        spec = small_spec(rng, n=3, p=2, T=10)
        obs = dr.to_unit_vector(rng.standard_normal((10, 3)))
        state = gibbs.initial_state(obs, spec)
        for _ in range(25):
            state = gibbs.gibbs_sweep(state, obs, spec, rng)
            assert np.all(state.lengths > 0)
            np.linalg.cholesky(state.theta.W)
            np.linalg.cholesky(state.theta.Sigma)
            assert state.theta.Sigma[-1, -1] == 1.0
            assert np.max(np.abs(np.linalg.eigvals(state.theta.G))) < 1.0

    def test_run_gibbs_reproducible(self):
        rng = np.random.default_rng(58)
        spec = small_spec(rng, T=6)
        obs = dr.to_unit_vector(rng.standard_normal((6, 2)))
        d1 = gibbs.run_gibbs(obs, spec, n_iter=40, burn_in=10, thin=3, seed=99)
        d2 = gibbs.run_gibbs(obs, spec, n_iter=40, burn_in=10, thin=3, seed=99)
        np.testing.assert_array_equal(d1.G, d2.G)
        np.testing.assert_array_equal(d1.Sigma, d2.Sigma)
        np.testing.assert_array_equal(d1.s_last, d2.s_last)

    def test_thinning_and_counts(self):
        rng = np.random.default_rng(59)
        spec = small_spec(rng, T=5)
        obs = dr.to_unit_vector(rng.standard_normal((5, 2)))
        d = gibbs.run_gibbs(obs, spec, n_iter=20, burn_in=8, thin=4, seed=1)
        np.testing.assert_array_equal(d.iterations, [9, 13, 17])

    def test_config_validation(self):
        rng = np.random.default_rng(60)
        spec = small_spec(rng, T=5)
        obs = dr.to_unit_vector(rng.standard_normal((5, 2)))
        with pytest.raises(ConfigError):
            gibbs.run_gibbs(obs, spec, n_iter=5, burn_in=5, seed=1)
        with pytest.raises(ConfigError):
            gibbs.run_gibbs(obs, spec, n_iter=5, burn_in=1, thin=0, seed=1)

    def test_store_paths_and_lengths(self):
        rng = np.random.default_rng(61)
        spec = small_spec(rng, T=5)
        obs = dr.to_unit_vector(rng.standard_normal((5, 2)))
        d = gibbs.run_gibbs(obs, spec, n_iter=10, burn_in=2, seed=3,
                            store_paths=True, store_lengths=True)
        assert d.paths.shape == (8, 6, spec.p)
        assert d.lengths.shape == (8, 5)
        assert np.all(d.lengths > 0)
