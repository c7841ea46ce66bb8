"""Offline fully Bayesian inference: the slice-within-Gibbs sampler.

One sweep updates, in order: the state path (simulation smoother on the
pseudo-data r_t u_t), the covariance blocks (Gamma, gamma), the transition
pair (G, W) from its conjugate matrix-normal inverse-Wishart posterior, and
the latent lengths (one slice step each). Any subset of the static
parameters can be held fixed.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ._errors import ConfigError, NumericalError
from ._linalg import chol_lower, psd_solve, symmetrize
from .directional import SigmaStructured, assemble_sigma, slice_steps_batch, split_sigma
from .kalman import StateSpaceParams, simulation_smoother


def sample_inverse_wishart(df, scale, rng):
    """Draw from IW(df, scale) via the Bartlett decomposition.

    Mean is scale / (df - p - 1) for df > p + 1.
    """
    scale = np.asarray(scale, dtype=float)
    p = scale.shape[0]
    if df <= p - 1:
        raise ValueError("inverse-Wishart degrees of freedom must exceed p - 1")
    L = chol_lower(scale)
    A = np.zeros((p, p))
    for i in range(p):
        A[i, i] = np.sqrt(rng.chisquare(df - i))
        A[i, :i] = rng.standard_normal(i)
    Mt = sla.solve_triangular(A, L.T, lower=True, check_finite=False)
    return symmetrize(Mt.T @ Mt)


def _sample_regression_matrix(Bbar, col_prec, W, rng):
    """Draw B ~ MN(Bbar, col_prec^{-1}, W) (row cov = inverse precision)."""
    p = Bbar.shape[0]
    R = chol_lower(col_prec)
    Z = rng.standard_normal(Bbar.shape)
    return Bbar + sla.solve_triangular(R.T, Z, lower=False, check_finite=False) @ chol_lower(W).T


@dataclass
class Priors:
    """Hyperparameters of the conjugate priors and the state prior."""

    nu0: float
    Psi0: np.ndarray
    Gbar0: np.ndarray
    Omega0: np.ndarray
    d0: float
    Phi0: np.ndarray
    gammabar0: np.ndarray
    Lambda0: np.ndarray
    s0_mean: np.ndarray
    P0: np.ndarray

    def __post_init__(self):
        for name in ("Psi0", "Gbar0", "Omega0", "Phi0", "Lambda0", "P0"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        self.gammabar0 = np.atleast_1d(np.asarray(self.gammabar0, dtype=float))
        self.s0_mean = np.atleast_1d(np.asarray(self.s0_mean, dtype=float))
        p = self.Psi0.shape[0]
        n = self.Phi0.shape[0] + 1
        if self.nu0 <= p + 1:
            raise ConfigError("nu0 must exceed p + 1 for a proper W prior mean")
        if self.d0 <= n:
            raise ConfigError("d0 must exceed n")
        for name in ("Psi0", "Omega0", "Phi0", "Lambda0"):
            chol_lower(symmetrize(getattr(self, name)))

    @property
    def p(self):
        return self.Psi0.shape[0]

    @property
    def n(self):
        return self.Phi0.shape[0] + 1


def default_priors(n, p):
    """Weakly informative defaults: identity scales, zero means."""
    return Priors(
        nu0=p + 2,
        Psi0=np.eye(p),
        Gbar0=np.zeros((p, p)),
        Omega0=np.eye(p),
        d0=n + 1,
        Phi0=np.eye(n - 1),
        gammabar0=np.zeros(n - 1),
        Lambda0=np.eye(n - 1),
        s0_mean=np.zeros(p),
        P0=np.eye(p),
    )


@dataclass
class FixedTheta:
    """Static parameters held fixed during sampling (None = free)."""

    Sigma: np.ndarray | None = None
    G: np.ndarray | None = None
    W: np.ndarray | None = None

    def __post_init__(self):
        for name in ("Sigma", "G", "W"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float))
        if self.Sigma is not None:
            split_sigma(self.Sigma)  # validates the identification normalization


@dataclass
class ModelSpec:
    """Dimensions, design matrices, priors, and the fixed-parameter mask."""

    n: int
    p: int
    F: np.ndarray
    priors: Priors
    fixed: FixedTheta = field(default_factory=FixedTheta)
    truncate_G: bool = True

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=float)
        if self.priors.p != self.p or self.priors.n != self.n:
            raise ConfigError("prior hyperparameter shapes do not match (n, p)")
        shape_tail = self.F.shape[-2:]
        if shape_tail != (self.n, self.p):
            raise ConfigError(f"design matrices must be ({self.n}, {self.p}), got {shape_tail}")

    def params_for(self, theta):
        return StateSpaceParams(
            F=self.F,
            G=theta.G,
            W=theta.W,
            Sigma=theta.Sigma,
            s0_mean=self.priors.s0_mean,
            P0=self.priors.P0,
        )


@dataclass
class ThetaDraw:
    """One value of the static parameters, with Sigma kept assembled."""

    Gamma: np.ndarray
    gamma: np.ndarray
    G: np.ndarray
    W: np.ndarray
    Sigma: np.ndarray

    @classmethod
    def from_blocks(cls, Gamma, gamma, G, W):
        Sigma = assemble_sigma(SigmaStructured(Gamma=Gamma, gamma=gamma))
        return cls(Gamma=np.atleast_2d(Gamma), gamma=np.atleast_1d(gamma),
                   G=np.asarray(G, float), W=np.asarray(W, float), Sigma=Sigma)


def prior_mean_theta(spec):
    """Initialization of theta: prior means, overridden by fixed values."""
    pri, fx = spec.priors, spec.fixed
    n, p = spec.n, spec.p
    if fx.Sigma is not None:
        s = split_sigma(fx.Sigma)
        Gamma, gamma = s.Gamma, s.gamma
    else:
        Gamma = pri.Phi0 / (pri.d0 - n)
        gamma = pri.gammabar0.copy()
    G = fx.G.copy() if fx.G is not None else pri.Gbar0.copy()
    W = fx.W.copy() if fx.W is not None else pri.Psi0 / (pri.nu0 - p - 1)
    return ThetaDraw.from_blocks(Gamma, gamma, G, W)


@dataclass
class GibbsState:
    """Current position of the chain."""

    theta: ThetaDraw
    states: np.ndarray  # (T+1, p)
    lengths: np.ndarray  # (T,)
    iteration: int = 0


def initial_state(obs, spec):
    """Deterministic start: r_t = 1, zero state path, theta at prior means."""
    T = np.asarray(obs).shape[0]
    return GibbsState(
        theta=prior_mean_theta(spec),
        states=np.zeros((T + 1, spec.p)),
        lengths=np.ones(T),
        iteration=0,
    )


def _residuals(state, obs, spec):
    """z_t = r_t u_t - F_t s_t, shape (T, n)."""
    obs = np.asarray(obs, dtype=float)
    T = obs.shape[0]
    F = spec.params_for(state.theta).design(T)
    mu = np.einsum("tnp,tp->tn", F, state.states[1:])
    return state.lengths[:, None] * obs - mu


def draw_states(state, obs, spec, rng):
    """Exact conditional draw of s_{0:T} via the simulation smoother."""
    params = spec.params_for(state.theta)
    return simulation_smoother(state.lengths, obs, params, rng)


def Gamma_posterior_params(state, obs, spec):
    """(d_T, Phi_T) of the inverse-Wishart conditional for Gamma."""
    z = _residuals(state, obs, spec)
    e = z[:, :-1] - np.outer(z[:, -1], state.theta.gamma)
    d_T = spec.priors.d0 + z.shape[0]
    Phi_T = symmetrize(spec.priors.Phi0 + e.T @ e)
    chol_lower(Phi_T)
    return d_T, Phi_T


def draw_Gamma(state, obs, spec, rng):
    """Inverse-Wishart conditional for the (n-1) x (n-1) block."""
    d_T, Phi_T = Gamma_posterior_params(state, obs, spec)
    return sample_inverse_wishart(d_T, Phi_T, rng)


def gamma_posterior_moments(state, obs, spec):
    """Mean and covariance of the Gaussian conditional for gamma.

    The Kronecker-structured regression collapses to the precision
    Lambda_0^{-1} + (sum_t z_{n,t}^2) Gamma^{-1}, so no T(n-1)-sized
    matrices are formed.
    """
    pri = spec.priors
    z = _residuals(state, obs, spec)
    zn = z[:, -1]
    k = spec.n - 1
    eye = np.eye(k)
    Lam0_inv = psd_solve(pri.Lambda0, eye)
    Gamma_inv = psd_solve(state.theta.Gamma, eye)
    prec = Lam0_inv + np.sum(zn**2) * Gamma_inv
    rhs = Lam0_inv @ pri.gammabar0 + Gamma_inv @ (z[:, :-1].T @ zn)
    Lam_T = symmetrize(psd_solve(prec, eye))
    return Lam_T @ rhs, Lam_T


def draw_gamma(state, obs, spec, rng):
    """Gaussian conditional draw for gamma."""
    mean, Lam_T = gamma_posterior_moments(state, obs, spec)
    return mean + chol_lower(Lam_T) @ rng.standard_normal(spec.n - 1)


def var_posterior_params(states, priors):
    """Conjugate posterior of the state VAR(1), in regression form.

    The transition s_t = G s_{t-1} + eta_t is the multivariate regression
    Y = X B + E with B = G^T, Y rows s_1..s_T and X rows s_0..s_{T-1}.
    Returns (nu_T, Psi_T, Bbar_T, Omega_T).
    """
    Y = states[1:]
    X = states[:-1]
    B0 = priors.Gbar0.T
    Om_T = symmetrize(X.T @ X + priors.Omega0)
    Bbar = psd_solve(Om_T, X.T @ Y + priors.Omega0 @ B0)
    resid = Y - X @ Bbar
    dB = Bbar - B0
    Psi_T = symmetrize(priors.Psi0 + resid.T @ resid + dB.T @ priors.Omega0 @ dB)
    nu_T = priors.nu0 + Y.shape[0]
    return nu_T, Psi_T, Bbar, Om_T


def _spectral_radius(G):
    return np.max(np.abs(np.linalg.eigvals(G)))


MAX_TRUNCATION_TRIES = 10**4


def draw_G_W(state, spec, rng, truncate=None):
    """MNIW conditional for (G, W), with optional stationarity truncation.

    Honors partially fixed parameters: with W fixed only G is drawn from
    its matrix-normal conditional; with G fixed only W is drawn from its
    inverse-Wishart conditional.
    """
    if truncate is None:
        truncate = spec.truncate_G
    pri, fx = spec.priors, spec.fixed
    nu_T, Psi_T, Bbar, Om_T = var_posterior_params(state.states, pri)

    if fx.G is not None and fx.W is not None:
        return fx.G.copy(), fx.W.copy()
    if fx.G is not None:
        B = fx.G.T
        Y, X = state.states[1:], state.states[:-1]
        resid = Y - X @ B
        dB = B - pri.Gbar0.T
        scale = symmetrize(pri.Psi0 + resid.T @ resid + dB.T @ pri.Omega0 @ dB)
        W = sample_inverse_wishart(pri.nu0 + Y.shape[0] + spec.p, scale, rng)
        return fx.G.copy(), W
    tries = MAX_TRUNCATION_TRIES if truncate else 1
    for _ in range(tries):
        W = fx.W.copy() if fx.W is not None else sample_inverse_wishart(nu_T, Psi_T, rng)
        G = _sample_regression_matrix(Bbar, Om_T, W, rng).T
        if not truncate or _spectral_radius(G) < 1.0:
            return G, W
    raise NumericalError(
        f"stationarity truncation rejected {MAX_TRUNCATION_TRIES} consecutive "
        "(G, W) draws; the prior and data may be in conflict"
    )


def sample_G_W_prior(priors, rng, truncate=True):
    """Joint draw from the (optionally truncated) MNIW prior."""
    tries = MAX_TRUNCATION_TRIES if truncate else 1
    for _ in range(tries):
        W = sample_inverse_wishart(priors.nu0, priors.Psi0, rng)
        G = _sample_regression_matrix(priors.Gbar0.T, priors.Omega0, W, rng).T
        if not truncate or _spectral_radius(G) < 1.0:
            return G, W
    raise NumericalError("truncated prior rejected too many consecutive draws")


def draw_lengths(state, obs, spec, rng, n_steps=1):
    """Advance each latent length by slice steps on its full conditional.

    The T updates are conditionally independent given (states, theta); the
    quadratic coefficients are computed for all t at once.
    """
    obs = np.asarray(obs, dtype=float)
    T = obs.shape[0]
    Sigma = state.theta.Sigma
    F = spec.params_for(state.theta).design(T)
    mu = np.einsum("tnp,tp->tn", F, state.states[1:])
    SiU = psd_solve(Sigma, obs.T)  # (n, T)
    a = np.einsum("tn,nt->t", obs, SiU)
    b = np.einsum("tn,nt->t", mu, SiU)
    r = state.lengths
    for _ in range(n_steps):
        r = slice_steps_batch(r, a, b, spec.n, rng)
    return r


def gibbs_sweep(state, obs, spec, rng, n_slice_steps=1):
    """One full scan in the order: states, Gamma, gamma, (G, W), lengths."""
    theta = state.theta
    states = draw_states(state, obs, spec, rng)
    state = GibbsState(theta=theta, states=states, lengths=state.lengths,
                       iteration=state.iteration)
    if spec.fixed.Sigma is None:
        Gamma = draw_Gamma(state, obs, spec, rng)
        state.theta = ThetaDraw.from_blocks(Gamma, theta.gamma, theta.G, theta.W)
        gamma = draw_gamma(state, obs, spec, rng)
        state.theta = ThetaDraw.from_blocks(Gamma, gamma, theta.G, theta.W)
    G, W = draw_G_W(state, spec, rng)
    state.theta = ThetaDraw.from_blocks(state.theta.Gamma, state.theta.gamma, G, W)
    lengths = draw_lengths(state, obs, spec, rng, n_steps=n_slice_steps)
    return GibbsState(theta=state.theta, states=state.states, lengths=lengths,
                      iteration=state.iteration + 1)


@dataclass
class GibbsDraws:
    """Retained posterior draws plus the metadata needed to reproduce them."""

    Gamma: np.ndarray
    gamma: np.ndarray
    G: np.ndarray
    W: np.ndarray
    Sigma: np.ndarray
    s_last: np.ndarray
    iterations: np.ndarray
    n: int
    p: int
    T: int
    seed: int | None = None
    paths: np.ndarray | None = None
    lengths: np.ndarray | None = None

    def __len__(self):
        return self.G.shape[0]


def run_gibbs(obs, spec, n_iter, burn_in, thin=1, seed=None, rng=None,
              store_paths=False, store_lengths=False, n_slice_steps=1,
              init=None):
    """Run the sampler and collect every ``thin``-th post-burn-in draw.

    Deterministic given (obs, spec, n_iter, burn_in, thin, seed). State
    paths and lengths are kept only on request since they dominate memory.
    """
    if burn_in < 0 or n_iter <= burn_in:
        raise ConfigError("need n_iter > burn_in >= 0")
    if thin < 1:
        raise ConfigError("thin must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    obs = np.asarray(obs, dtype=float)
    T = obs.shape[0]
    state = initial_state(obs, spec) if init is None else init

    kept = []
    for it in range(1, n_iter + 1):
        state = gibbs_sweep(state, obs, spec, rng, n_slice_steps=n_slice_steps)
        if it > burn_in and (it - burn_in - 1) % thin == 0:
            kept.append((it, state))
    K = len(kept)
    k = spec.n - 1
    out = GibbsDraws(
        Gamma=np.empty((K, k, k)),
        gamma=np.empty((K, k)),
        G=np.empty((K, spec.p, spec.p)),
        W=np.empty((K, spec.p, spec.p)),
        Sigma=np.empty((K, spec.n, spec.n)),
        s_last=np.empty((K, spec.p)),
        iterations=np.array([it for it, _ in kept], dtype=int),
        n=spec.n,
        p=spec.p,
        T=T,
        seed=seed,
        paths=np.empty((K, T + 1, spec.p)) if store_paths else None,
        lengths=np.empty((K, T)) if store_lengths else None,
    )
    for i, (_, st) in enumerate(kept):
        out.Gamma[i] = st.theta.Gamma
        out.gamma[i] = st.theta.gamma
        out.G[i] = st.theta.G
        out.W[i] = st.theta.W
        out.Sigma[i] = st.theta.Sigma
        out.s_last[i] = st.states[-1]
        if store_paths:
            out.paths[i] = st.states
        if store_lengths:
            out.lengths[i] = st.lengths
    return out
