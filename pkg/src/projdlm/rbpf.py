"""Online inference: Rao-Blackwellized particle filtering over the lengths.

Each particle carries a latent length trajectory summarized by its exact
per-particle Gaussian state posterior. Because the covariance recursions do
not depend on the lengths (only the mean updates do), the covariance track
is shared by the whole swarm and per-particle work reduces to vectorized
mean updates, proposals, and weights.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from ._errors import ConfigError, NumericalError
from ._linalg import LOG_2PI, logsumexp, mvn_logpdf_chol, psd_solve, psd_sqrt, symmetrize
from .directional import slice_steps_batch, unit_to_angle
from .kalman import KalmanStats


@dataclass
class SwarmConfig:
    """Tuning parameters of the filter.

    M particles, resampling once the effective sample size drops below the
    absolute threshold tau, log-normal random-walk proposals with log-scale
    sd sigma_g, and L slice-sampling rejuvenation steps per period. The
    period-1 bootstrap proposal LogNormal(0, sigma_init^2) has its own,
    wider scale: the random-walk scale is tuned for step-to-step moves and
    does not cover the length target under a diffuse state prior.
    """

    M: int = 1000
    tau: float | None = None
    sigma_g: float = 0.25
    L: int = 2
    resampling: str = "multinomial"
    sigma_init: float = 1.0

    def __post_init__(self):
        if self.tau is None:
            self.tau = self.M / 2.0
        if self.M < 1:
            raise ConfigError("need at least one particle")
        if not (1 <= self.tau <= self.M):
            raise ConfigError("tau must lie in [1, M]")
        if self.sigma_g <= 0 or self.sigma_init <= 0:
            raise ConfigError("proposal scales must be positive")
        if self.L < 0:
            raise ConfigError("L must be >= 0")
        if self.resampling not in ("multinomial", "systematic"):
            raise ConfigError(f"unknown resampling scheme '{self.resampling}'")


@dataclass
class Particle:
    """Single-particle view: exact state posterior, length, weight."""

    stats: KalmanStats
    length: float
    weight: float


@dataclass
class Swarm:
    """Weighted particle population after the period-t recursion.

    Per-particle state is stored as arrays over the particle index; the
    covariance statistics are scalars of the period (identical across
    particles because they are length-free).
    """

    t: int
    lengths: np.ndarray          # (M,)
    log_weights: np.ndarray      # (M,) unnormalized
    s_pred: np.ndarray           # (M, p)
    s_filt: np.ndarray           # (M, p)
    y_pred: np.ndarray           # (M, n)
    P_pred: np.ndarray           # (p, p) shared
    P_filt: np.ndarray           # (p, p) shared
    Omega_pred: np.ndarray       # (n, n) shared
    gain: np.ndarray             # (p, n) shared
    ess: float = math.nan
    resampled: bool = False
    dropped: int = 0             # particles zeroed for non-finite weights
    _chol_omega: np.ndarray | None = field(default=None, repr=False)

    @property
    def M(self):
        return self.lengths.shape[0]

    @property
    def weights(self):
        """Normalized weights (sum to one)."""
        lw = self.log_weights
        z = logsumexp(lw)
        if not np.isfinite(z):
            raise NumericalError("all particle weights vanished")
        return np.exp(lw - z)

    def particle(self, m):
        """Materialize particle m with the shared covariance statistics."""
        stats = KalmanStats(
            s_pred=self.s_pred[m].copy(),
            P_pred=self.P_pred.copy(),
            y_pred=self.y_pred[m].copy(),
            Omega_pred=self.Omega_pred.copy(),
            s_filt=self.s_filt[m].copy(),
            P_filt=self.P_filt.copy(),
        )
        return Particle(stats=stats, length=float(self.lengths[m]),
                        weight=float(self.weights[m]))


def effective_sample_size(weights):
    """(sum w)^2 / sum w^2, in [1, M] for nonnegative, not-all-zero weights."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError("weights must not all be zero")
    return float(total**2 / np.sum(w**2))


def _covariance_step(P_filt_prev, F_t, params):
    """Shared covariance recursion: P_pred, Omega, gain, P_filt, chol(Omega)."""
    G, W, Sigma = params.G, params.W, params.Sigma
    P_pred = symmetrize(G @ P_filt_prev @ G.T + W)
    Omega = symmetrize(F_t @ P_pred @ F_t.T + Sigma)
    try:
        L = np.linalg.cholesky(Omega)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("predictive covariance not positive definite") from exc
    FP = F_t @ P_pred
    gain = sla.cho_solve((L, True), FP, check_finite=False).T
    P_filt = symmetrize(P_pred - gain @ FP)
    return P_pred, Omega, gain, P_filt, L


def log_proposal_density(r_new, r_prev, sigma_g):
    """Log-normal random-walk density, including the 1/r Jacobian term."""
    r_new = np.asarray(r_new, dtype=float)
    z = (np.log(r_new) - np.log(r_prev)) / sigma_g
    return -np.log(r_new) - np.log(sigma_g) - 0.5 * LOG_2PI - 0.5 * z**2


def log_weight_increment(r_new, r_prev, u, y_pred, chol_omega, sigma_g, n):
    """Importance-weight increment in log scale.

    (n-1) log r + log N_n(r u; y_pred, Omega) - log g(r | r_prev).
    """
    dev = np.multiply.outer(np.asarray(r_new), np.asarray(u)) - y_pred
    loglike = mvn_logpdf_chol(np.atleast_2d(dev), chol_omega)
    incr = (n - 1) * np.log(r_new) + loglike - log_proposal_density(r_new, r_prev, sigma_g)
    return incr


def init_swarm(params, config, first_obs, rng):
    """Bootstrap at t = 1: propose lengths from LogNormal(0, sigma_init^2).

    Weights are the importance ratio of the period-1 target kernel to the
    proposal, normalized in log space.
    """
    u = np.asarray(first_obs, dtype=float)
    M, n, p = config.M, params.n, params.p
    F1 = params.design(1)[0]
    P_pred, Omega, gain, P_filt, L = _covariance_step(params.P0, F1, params)
    s_pred = np.broadcast_to(params.G @ params.s0_mean, (M, p)).copy()
    y_pred = np.broadcast_to(F1 @ (params.G @ params.s0_mean), (M, n)).copy()
    r = np.exp(config.sigma_init * rng.standard_normal(M))
    lw = log_weight_increment(r, 1.0, u, y_pred, L, config.sigma_init, n)
    bad = ~np.isfinite(lw)
    lw[bad] = -np.inf
    if not np.any(np.isfinite(lw)):
        raise NumericalError("all initial particle weights are zero")
    lw = lw - logsumexp(lw)
    dev = r[:, None] * u - y_pred
    s_filt = s_pred + dev @ gain.T
    swarm = Swarm(
        t=1, lengths=r, log_weights=lw, s_pred=s_pred, s_filt=s_filt,
        y_pred=y_pred, P_pred=P_pred, P_filt=P_filt, Omega_pred=Omega,
        gain=gain, dropped=int(bad.sum()), _chol_omega=L,
    )
    swarm.ess = effective_sample_size(swarm.weights)
    return swarm


def correction_swarm(swarm, u_t, F_t, params, config, rng):
    """Correction phase: propose, advance statistics, reweight."""
    u = np.asarray(u_t, dtype=float)
    n = u.shape[0]
    P_pred, Omega, gain, P_filt, L = _covariance_step(swarm.P_filt, F_t, params)
    s_pred = swarm.s_filt @ params.G.T
    y_pred = s_pred @ F_t.T
    r_prev = swarm.lengths
    r = r_prev * np.exp(config.sigma_g * rng.standard_normal(swarm.M))
    incr = log_weight_increment(r, r_prev, u, y_pred, L, config.sigma_g, n)
    lw = swarm.log_weights + incr
    bad = ~np.isfinite(lw)
    lw[bad] = -np.inf
    if not np.any(np.isfinite(lw)):
        raise NumericalError(f"all particle weights vanished at t={swarm.t + 1}")
    dev = r[:, None] * u - y_pred
    s_filt = s_pred + dev @ gain.T
    out = Swarm(
        t=swarm.t + 1, lengths=r, log_weights=lw, s_pred=s_pred, s_filt=s_filt,
        y_pred=y_pred, P_pred=P_pred, P_filt=P_filt, Omega_pred=Omega,
        gain=gain, dropped=swarm.dropped + int(bad.sum()), _chol_omega=L,
    )
    out.ess = effective_sample_size(out.weights)
    return out


def correction(particle, u_t, F_t, params, config, rng):
    """Single-particle correction (contract surface; swarm path is batched)."""
    u = np.asarray(u_t, dtype=float)
    n = u.shape[0]
    P_pred, Omega, gain, P_filt, L = _covariance_step(particle.stats.P_filt, F_t, params)
    s_pred = params.G @ particle.stats.s_filt
    y_pred = F_t @ s_pred
    r = particle.length * math.exp(config.sigma_g * rng.standard_normal())
    incr = float(log_weight_increment(r, particle.length, u, y_pred, L,
                                      config.sigma_g, n)[0])
    weight = particle.weight * math.exp(incr) if math.isfinite(incr) else 0.0
    s_filt = s_pred + gain @ (r * u - y_pred)
    stats = KalmanStats(s_pred, P_pred, y_pred, Omega, s_filt, P_filt)
    return Particle(stats=stats, length=r, weight=weight)


def _resample_indices(weights, M, scheme, rng):
    if scheme == "multinomial":
        return rng.choice(M, size=M, replace=True, p=weights)
    # systematic
    positions = (np.arange(M) + rng.random()) / M
    return np.searchsorted(np.cumsum(weights), positions).clip(max=M - 1)


def selection(swarm, config, rng):
    """Resample proportional to weights when ESS < tau; else identity."""
    ess = effective_sample_size(swarm.weights)
    swarm.ess = ess
    if ess >= config.tau:
        swarm.resampled = False
        return swarm
    idx = _resample_indices(swarm.weights, swarm.M, config.resampling, rng)
    out = replace(
        swarm,
        lengths=swarm.lengths[idx].copy(),
        log_weights=np.full(swarm.M, -math.log(swarm.M)),
        s_pred=swarm.s_pred[idx].copy(),
        s_filt=swarm.s_filt[idx].copy(),
        y_pred=swarm.y_pred[idx].copy(),
        resampled=True,
        ess=ess,
    )
    return out


def mutation_swarm(swarm, u_t, config, rng):
    """Rejuvenate lengths with L slice steps, then redo the mean update.

    The slice target is r^{n-1} N_n(r u; y_pred, Omega); covariances are
    untouched (the filtered covariance does not depend on r).
    """
    if config.L == 0:
        return swarm
    u = np.asarray(u_t, dtype=float)
    n = u.shape[0]
    Si_u = psd_solve(swarm.Omega_pred, u)
    a = float(u @ Si_u)
    b = swarm.y_pred @ Si_u
    r = swarm.lengths
    for _ in range(config.L):
        r = slice_steps_batch(r, a, b, n, rng)
    dev = r[:, None] * u - swarm.y_pred
    return replace(swarm, lengths=r, s_filt=swarm.s_pred + dev @ swarm.gain.T)


def mutation(particle, u_t, F_t, config, rng):
    """Single-particle mutation (contract surface).

    L slice steps on the length, then the filtered mean is recomputed from
    the final length; the filtered covariance is untouched.
    """
    if config.L == 0:
        return particle
    u = np.asarray(u_t, dtype=float)
    n = u.shape[0]
    st = particle.stats
    Si_u = psd_solve(st.Omega_pred, u)
    a = float(u @ Si_u)
    b = float(st.y_pred @ Si_u)
    r = particle.length
    for _ in range(config.L):
        r = float(slice_steps_batch(np.asarray(r), a, b, n, rng))
    gain = psd_solve(st.Omega_pred, F_t @ st.P_pred).T
    s_filt = st.s_pred + gain @ (r * u - st.y_pred)
    stats = KalmanStats(st.s_pred.copy(), st.P_pred.copy(), st.y_pred.copy(),
                        st.Omega_pred.copy(), s_filt, st.P_filt.copy())
    return Particle(stats=stats, length=r, weight=particle.weight)


def rbpf_step(swarm, u_t, params, config, rng, F_t=None):
    """One full recursion: correction, selection, mutation."""
    if F_t is None:
        F_t = params.design(swarm.t + 1)[swarm.t]
    swarm = correction_swarm(swarm, u_t, F_t, params, config, rng)
    swarm = selection(swarm, config, rng)
    swarm = mutation_swarm(swarm, u_t, config, rng)
    return swarm


def predictive_sample(swarm, F_next, params, n_draws, rng):
    """Draw from the one-step-ahead predictive of the next unit observation.

    Particle index ~ weights; s_t ~ N(s_filt, P_filt); propagate through the
    transition; emit a projected-normal observation.
    """
    F_next = np.asarray(F_next, dtype=float)
    w = swarm.weights
    idx = rng.choice(swarm.M, size=n_draws, replace=True, p=w)
    p = params.p
    Lf = psd_sqrt(swarm.P_filt)
    s_t = swarm.s_filt[idx] + rng.standard_normal((n_draws, p)) @ Lf.T
    LW = psd_sqrt(params.W)
    s_next = s_t @ params.G.T + rng.standard_normal((n_draws, p)) @ LW.T
    mu = s_next @ F_next.T
    LS = psd_sqrt(params.Sigma)
    x = mu + rng.standard_normal((n_draws, params.n)) @ LS.T
    norms = np.linalg.norm(x, axis=1)
    while np.any(norms < 1e-300):
        bad = norms < 1e-300
        x[bad] = mu[bad] + rng.standard_normal((int(bad.sum()), params.n)) @ LS.T
        norms = np.linalg.norm(x, axis=1)
    return x / norms[:, None]


def filter_series(obs, params, config, rng, n_pred_draws=0, pred_quantiles=(),
                  on_record=None):
    """Run the filter over a sequence (or stream) of unit observations.

    Yields one record per period with ESS/resampling diagnostics and, when
    ``n_pred_draws`` > 0 and n = 2, circular quantiles of the one-step-ahead
    predictive angle. Returns (records, final_swarm).
    """
    from .forecast import circular_quantile

    records = []
    swarm = None
    t = 0
    for u in obs:
        u = np.asarray(u, dtype=float)
        t += 1
        if swarm is None:
            swarm = init_swarm(params, config, u, rng)
            swarm = selection(swarm, config, rng)
            swarm = mutation_swarm(swarm, u, config, rng)
        else:
            swarm = rbpf_step(swarm, u, params, config, rng)
        rec = {"t": t, "ess": float(swarm.ess), "resampled": bool(swarm.resampled)}
        if n_pred_draws > 0:
            F_next = params.design(t + 1)[t] if np.asarray(params.F).ndim == 3 \
                else params.design(1)[0]
            draws = predictive_sample(swarm, F_next, params, n_pred_draws, rng)
            if params.n == 2:
                ang = unit_to_angle(draws)
                rec["predictive_quantiles"] = {
                    str(q): float(circular_quantile(ang, q)) for q in pred_quantiles
                }
        records.append(rec)
        if on_record is not None:
            on_record(rec)
    return records, swarm
