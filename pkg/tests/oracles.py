"""Independent oracles used across the test suite.

Everything here is deliberately brute force (dense joint Gaussians, naive
double loops, quadrature, series expansions) and never calls the code paths
it is used to check.
"""

import numpy as np
import scipy.integrate
import scipy.stats

from projdlm._linalg import mvn_logpdf, psd_solve, psd_sqrt, symmetrize


def joint_gaussian_moments(params, T):
    """Mean and covariance of the stacked vector (s_0..s_T, y_1..y_T).

    The stacked vector is an affine map of independent standard normals
    (state prior noise, transition innovations, measurement noise), built
    column by column with no Kalman recursions.
    """
    n, p = params.n, params.p
    F = params.design(T)
    d_states = (T + 1) * p
    d_obs = T * n
    d_noise = p + T * p + T * n
    A = np.zeros((d_states + d_obs, d_noise))
    mean = np.zeros(d_states + d_obs)

    L0 = psd_sqrt(params.P0)
    LW = psd_sqrt(params.W)
    LS = psd_sqrt(params.Sigma)

    rows = [slice(t * p, (t + 1) * p) for t in range(T + 1)]
    mean[rows[0]] = params.s0_mean
    A[rows[0], :p] = L0
    for t in range(1, T + 1):
        mean[rows[t]] = params.G @ mean[rows[t - 1]]
        A[rows[t], :] = params.G @ A[rows[t - 1], :]
        A[rows[t], p + (t - 1) * p : p + t * p] += LW
    for t in range(1, T + 1):
        row = slice(d_states + (t - 1) * n, d_states + t * n)
        mean[row] = F[t - 1] @ mean[rows[t]]
        A[row, :] = F[t - 1] @ A[rows[t], :]
        A[row, p + T * p + (t - 1) * n : p + T * p + t * n] += LS
    return mean, A @ A.T


def conditional_gaussian(mean, cov, idx_keep, idx_cond, values):
    """Moments of x[idx_keep] | x[idx_cond] = values for a joint Gaussian."""
    mk = mean[idx_keep]
    mc = mean[idx_cond]
    Kkk = cov[np.ix_(idx_keep, idx_keep)]
    Kkc = cov[np.ix_(idx_keep, idx_cond)]
    Kcc = cov[np.ix_(idx_cond, idx_cond)]
    gain = psd_solve(Kcc, Kkc.T).T
    return mk + gain @ (values - mc), symmetrize(Kkk - gain @ Kkc.T)


def filtered_moments_oracle(params, lengths, obs, t):
    """p(s_t | y_{1:t}) by dense conditioning (t is 1-based)."""
    T = len(lengths)
    p = params.p
    n = params.n
    mean, cov = joint_gaussian_moments(params, T)
    y = (np.asarray(lengths)[:, None] * np.asarray(obs)).ravel()
    d_states = (T + 1) * p
    idx_keep = np.arange(t * p, (t + 1) * p)
    idx_cond = np.arange(d_states, d_states + t * n)
    return conditional_gaussian(mean, cov, idx_keep, idx_cond, y[: t * n])


def smoother_moments_oracle(params, lengths, obs):
    """p(s_{0:T} | y_{1:T}) moments by dense conditioning."""
    T = len(lengths)
    p, n = params.p, params.n
    mean, cov = joint_gaussian_moments(params, T)
    y = (np.asarray(lengths)[:, None] * np.asarray(obs)).ravel()
    d_states = (T + 1) * p
    idx_keep = np.arange(d_states)
    idx_cond = np.arange(d_states, d_states + T * n)
    return conditional_gaussian(mean, cov, idx_keep, idx_cond, y)


def loglik_oracle(params, lengths, obs):
    """Marginal log density of the stacked pseudo-observations."""
    T = len(lengths)
    p = params.p
    mean, cov = joint_gaussian_moments(params, T)
    y = (np.asarray(lengths)[:, None] * np.asarray(obs)).ravel()
    d_states = (T + 1) * p
    return float(mvn_logpdf(y, mean[d_states:], cov[d_states:, d_states:]))


def crps_naive(draws, realization):
    """O(J^2) double-loop circular CRPS."""
    draws = np.asarray(draws, dtype=float).ravel()
    J = draws.size
    first = np.mean(1.0 - np.cos(draws - realization))
    second = 0.0
    for j in range(J):
        for k in range(J):
            second += 1.0 - np.cos(draws[j] - draws[k])
    return first - 0.5 * second / (J * J)


def length_target_pdf(S, u, m, r_grid):
    """Quadrature-normalized density of p(r | u, m, S) on a grid."""
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    Si = np.linalg.inv(S)
    a = float(u @ Si @ u)
    b = float(u @ Si @ np.asarray(m, dtype=float))
    log_kernel = (n - 1) * np.log(r_grid) - 0.5 * a * (r_grid - b / a) ** 2
    kernel = np.exp(log_kernel - log_kernel.max())
    Z = scipy.integrate.simpson(kernel, x=r_grid)
    return kernel / Z


def length_target_sampler(S, u, m, n_grid=20001, r_max=None):
    """Exact inverse-CDF sampler for p(r | u, m, S) built on quadrature."""
    u = np.asarray(u, dtype=float)
    if r_max is None:
        Si = np.linalg.inv(S)
        a = float(u @ Si @ u)
        b = float(u @ Si @ np.asarray(m, dtype=float))
        r_max = max(b / a, 0.0) + 12.0 / np.sqrt(a)
    grid = np.linspace(1e-9, r_max, n_grid)
    pdf = length_target_pdf(S, u, m, grid)
    cdf = scipy.integrate.cumulative_trapezoid(pdf, grid, initial=0.0)
    cdf /= cdf[-1]

    def draw(rng, size):
        us = rng.random(size)
        return np.interp(us, cdf, grid)

    return draw, grid, pdf


def bessel_i0_series(x, terms=400):
    """Power series sum_k (x^2/4)^k / (k!)^2, in extended precision."""
    from mpmath import mp, mpf

    mp.dps = 50
    xx = mpf(x)
    q = xx * xx / 4
    term = mpf(1)
    total = mpf(1)
    for k in range(1, terms):
        term = term * q / (k * k)
        total += term
        if term < total * mpf(10) ** (-40):
            break
    return total


def two_sample_ks(a, b):
    """KS statistic and p-value (scipy)."""
    res = scipy.stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)
