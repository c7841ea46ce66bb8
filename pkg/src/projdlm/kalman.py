"""Exact linear-Gaussian machinery for the length-augmented model.

Treating the lengths r_{1:T} as known turns the model into a fully observed
linear state space model with pseudo-observations y_t = r_t u_t, so filtered
moments, the marginal likelihood, and exact posterior path draws (via
forward-filter backward-sampling) are all available in closed form.
"""

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels, kernels_py
from ._errors import KernelDegeneracy, NumericalError
from ._linalg import psd_solve, psd_sqrt, symmetrize


def _as_design(F, T, n, p):
    """Broadcast or slice a design matrix spec to a (T, n, p) array."""
    F = np.asarray(F, dtype=float)
    if F.ndim == 2:
        F = np.broadcast_to(F, (T, n, p))
    elif F.shape[0] > T:
        F = F[:T]
    if F.shape != (T, n, p):
        raise ValueError(f"design matrices must have shape ({T}, {n}, {p}), got {F.shape}")
    return np.ascontiguousarray(F)


@dataclass
class StateSpaceParams:
    """Static parameters of the state space model.

    ``F`` may be a single (n, p) matrix (tiled over time by ``design``) or a
    (T, n, p) stack. ``s0_mean`` and ``P0`` are the time-0 filtered moments;
    the first prediction is derived as G s0_mean, G P0 G^T + W.
    """

    F: np.ndarray
    G: np.ndarray
    W: np.ndarray
    Sigma: np.ndarray
    s0_mean: np.ndarray
    P0: np.ndarray

    def __post_init__(self):
        self.G = np.ascontiguousarray(self.G, dtype=float)
        self.W = np.ascontiguousarray(symmetrize(np.asarray(self.W, dtype=float)))
        self.Sigma = np.ascontiguousarray(symmetrize(np.asarray(self.Sigma, dtype=float)))
        self.s0_mean = np.ascontiguousarray(self.s0_mean, dtype=float)
        self.P0 = np.ascontiguousarray(symmetrize(np.asarray(self.P0, dtype=float)))
        self.F = np.asarray(self.F, dtype=float)
        p = self.G.shape[0]
        n = self.Sigma.shape[0]
        if self.G.shape != (p, p) or self.W.shape != (p, p) or self.P0.shape != (p, p):
            raise ValueError("G, W, P0 must be square with matching size p")
        if self.s0_mean.shape != (p,):
            raise ValueError("s0_mean must have length p")
        if self.F.ndim == 2 and self.F.shape != (n, p):
            raise ValueError(f"constant design must have shape ({n}, {p})")
        if self.F.ndim == 3 and self.F.shape[1:] != (n, p):
            raise ValueError(f"design stack must have shape (T, {n}, {p})")
        for name, mat in (("W", self.W), ("Sigma", self.Sigma), ("P0", self.P0)):
            if np.linalg.eigvalsh(mat).min() < -1e-8:
                raise ValueError(f"{name} must be positive semidefinite")

    @property
    def n(self):
        return self.Sigma.shape[0]

    @property
    def p(self):
        return self.G.shape[0]

    def design(self, T):
        return _as_design(self.F, T, self.n, self.p)


@dataclass
class KalmanStats:
    """The six per-period statistics of the filtering recursions."""

    s_pred: np.ndarray
    P_pred: np.ndarray
    y_pred: np.ndarray
    Omega_pred: np.ndarray
    s_filt: np.ndarray
    P_filt: np.ndarray


def initial_stats(params):
    """Pseudo-statistics at t = 0: filtered slots hold the state prior."""
    p = params.p
    return KalmanStats(
        s_pred=params.s0_mean.copy(),
        P_pred=params.P0.copy(),
        y_pred=np.zeros(params.n),
        Omega_pred=params.Sigma.copy(),
        s_filt=params.s0_mean.copy(),
        P_filt=params.P0.copy(),
    )


def kalman_predict_update(prev, r, u, t, params):
    """One filtering recursion (K_{t-1}, r_t, u_t) -> K_t.

    ``prev`` holds the filtered moments at t-1 (``initial_stats`` for t=1);
    ``t`` indexes the design matrix (1-based).
    """
    if r <= 0.0:
        raise ValueError("length r must be positive")
    u = np.asarray(u, dtype=float)
    T_needed = t
    F = params.design(T_needed)[t - 1]
    G, W, Sigma = params.G, params.W, params.Sigma

    s_pred = G @ prev.s_filt
    P_pred = symmetrize(G @ prev.P_filt @ G.T + W)
    y_pred = F @ s_pred
    Omega = symmetrize(F @ P_pred @ F.T + Sigma)
    cond = np.linalg.cond(Omega)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalError(f"predictive covariance ill-conditioned (cond={cond:.3e})")
    dev = r * u - y_pred
    FP = F @ P_pred
    K = psd_solve(Omega, FP).T
    s_filt = s_pred + K @ dev
    P_filt = symmetrize(P_pred - K @ FP)
    return KalmanStats(s_pred, P_pred, y_pred, Omega, s_filt, P_filt)


@dataclass
class FilterResult:
    """Stacked filter output over t = 1..T plus the log-likelihood."""

    s_pred: np.ndarray
    P_pred: np.ndarray
    y_pred: np.ndarray
    Omega_pred: np.ndarray
    s_filt: np.ndarray
    P_filt: np.ndarray
    loglik: float
    params: StateSpaceParams = field(repr=False)

    def __len__(self):
        return self.s_pred.shape[0]

    def stats_at(self, t):
        """KalmanStats for period t (1-based)."""
        i = t - 1
        return KalmanStats(
            s_pred=self.s_pred[i],
            P_pred=self.P_pred[i],
            y_pred=self.y_pred[i],
            Omega_pred=self.Omega_pred[i],
            s_filt=self.s_filt[i],
            P_filt=self.P_filt[i],
        )


def kalman_filter_pass(lengths, obs, params):
    """Run the filter over y_t = r_t u_t; compiled kernel when available."""
    lengths = np.asarray(lengths, dtype=float)
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    T = obs.shape[0]
    if lengths.shape != (T,):
        raise ValueError("lengths and observations must have equal length")
    if np.any(lengths <= 0.0):
        raise ValueError("lengths must be strictly positive")
    y = np.ascontiguousarray(lengths[:, None] * obs)
    F = params.design(T)
    try:
        out = kernels.filter_pass(y, F, params.G, params.W, params.Sigma,
                                  params.s0_mean, params.P0)
    except KernelDegeneracy:
        out = kernels_py.filter_pass(y, F, params.G, params.W, params.Sigma,
                                     params.s0_mean, params.P0)
    return FilterResult(*out, params=params)


def simulation_smoother(lengths, obs, params, rng):
    """Exact joint draw of the state path s_{0:T} given lengths and directions.

    Forward filter then backward sampling; the (T+1, p) standard-normal
    block is drawn once up front so both kernel backends consume identical
    randomness.
    """
    fr = kalman_filter_pass(lengths, obs, params)
    T = len(fr)
    z = rng.standard_normal((T + 1, params.p))
    try:
        return kernels.ffbs_pass(params.G, fr.s_pred, fr.P_pred, fr.s_filt,
                                 fr.P_filt, params.s0_mean, params.P0, z)
    except KernelDegeneracy:
        return kernels_py.ffbs_pass(params.G, fr.s_pred, fr.P_pred, fr.s_filt,
                                    fr.P_filt, params.s0_mean, params.P0, z)


def simulate_states(params, T, rng):
    """Draw s_{0:T} from the state prior and VAR(1) transition."""
    p = params.p
    path = np.empty((T + 1, p))
    path[0] = params.s0_mean + psd_sqrt(params.P0) @ rng.standard_normal(p)
    LW = psd_sqrt(params.W)
    for t in range(1, T + 1):
        path[t] = params.G @ path[t - 1] + LW @ rng.standard_normal(p)
    return path


def simulate_series(params, T, rng):
    """Simulate (states, lengths, unit observations) from the full model."""
    states = simulate_states(params, T, rng)
    F = params.design(T)
    LS = psd_sqrt(params.Sigma)
    n = params.n
    y = np.einsum("tnp,tp->tn", F, states[1:]) + rng.standard_normal((T, n)) @ LS.T
    lengths = np.linalg.norm(y, axis=1)
    obs = y / lengths[:, None]
    return states, lengths, obs


