"""Geometry of the circle/sphere and the projected normal family.

Angles are plain floats (radians in [0, 2*pi)); points on the sphere are
numpy arrays of unit norm. ``wrap_angle`` and ``to_unit_vector`` are the
constructors that enforce those invariants at the boundaries.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg as sla

from ._errors import NumericalError
from ._linalg import LOG_2PI, chol_lower, mvn_logpdf, psd_solve, symmetrize

TWO_PI = 2.0 * np.pi


def wrap_angle(a):
    """Reduce an angle (or array of angles) to [0, 2*pi)."""
    return np.mod(a, TWO_PI)


def to_unit_vector(u, tol=1e-10):
    """Validate and renormalize a point (or batch of points) on S^{n-1}.

    Raises ValueError for dimension < 2 or (near-)zero vectors; inputs with
    norm within ``tol`` of 1 are renormalized silently.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] < 2:
        raise ValueError("unit observations need dimension n >= 2")
    norms = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise ValueError("cannot normalize zero or non-finite vector")
    return u / norms


def angle_to_unit(a):
    """Map angle(s) to points on the unit circle: a -> (cos a, sin a)."""
    a = np.asarray(a, dtype=float)
    return np.stack([np.cos(a), np.sin(a)], axis=-1)


def unit_to_angle(u):
    """Map points on S^1 to angles in [0, 2*pi); errors for n != 2."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != 2:
        raise ValueError(f"angle representation requires n = 2, got n = {u.shape[-1]}")
    return wrap_angle(np.arctan2(u[..., 1], u[..., 0]))


def circular_distance(a, b):
    """Cosine distance on the circle: 1 - cos(a - b), in [0, 2]."""
    return 1.0 - np.cos(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


@dataclass(frozen=True)
class SigmaStructured:
    """Measurement covariance in identified form: blocks (Gamma, gamma).

    Gamma is (n-1) x (n-1) SPD, gamma has length n-1; the assembled n x n
    covariance has bottom-right entry pinned to 1.
    """

    Gamma: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        Gamma = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if Gamma.shape[0] != Gamma.shape[1] or Gamma.shape[0] != gamma.shape[0]:
            raise ValueError("Gamma must be square with one row per entry of gamma")
        chol_lower(symmetrize(Gamma))
        object.__setattr__(self, "Gamma", symmetrize(Gamma))
        object.__setattr__(self, "gamma", gamma)

    @property
    def n(self):
        return self.Gamma.shape[0] + 1


def assemble_sigma(s):
    """Assemble [[Gamma + gamma gamma^T, gamma], [gamma^T, 1]]."""
    k = s.Gamma.shape[0]
    out = np.empty((k + 1, k + 1))
    out[:k, :k] = s.Gamma + np.outer(s.gamma, s.gamma)
    out[:k, k] = s.gamma
    out[k, :k] = s.gamma
    out[k, k] = 1.0
    chol_lower(out)
    return out


def split_sigma(Sigma, tol=1e-8):
    """Inverse of assemble_sigma; validates the unit bottom-right entry."""
    Sigma = np.asarray(Sigma, dtype=float)
    if abs(Sigma[-1, -1] - 1.0) > tol:
        raise ValueError("identified covariance must have bottom-right entry 1")
    gamma = Sigma[:-1, -1].copy()
    Gamma = Sigma[:-1, :-1] - np.outer(gamma, gamma)
    return SigmaStructured(Gamma=Gamma, gamma=gamma)


def sample_projected_normal(mu, Sigma, rng, size=None):
    """Draw from PN(mu, Sigma): normalize x ~ N(mu, Sigma).

    Returns one unit vector, or a (size, n) batch. The measure-zero event
    ||x|| < 1e-300 is handled by redrawing.
    """
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[0]
    L = chol_lower(Sigma)
    m = 1 if size is None else int(size)
    x = mu + rng.standard_normal((m, n)) @ L.T
    norms = np.linalg.norm(x, axis=1)
    bad = norms < 1e-300
    while np.any(bad):
        k = int(bad.sum())
        x[bad] = mu + rng.standard_normal((k, n)) @ L.T
        norms[bad] = np.linalg.norm(x[bad], axis=1)
        bad = norms < 1e-300
    u = x / norms[:, None]
    return u[0] if size is None else u


def polar_log_kernel(r, u, m, S):
    """r-dependent part of the polar-coordinates log density.

    (n-1) log r + log N_n(r u; m, S); the angular Jacobian factor is an
    additive constant in r and is omitted.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise ValueError("length r must be positive")
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    x = np.multiply.outer(r, u)
    out = (n - 1) * np.log(r) + mvn_logpdf(x, np.asarray(m, dtype=float), S)
    return float(out) if np.ndim(r) == 0 else out


def pn_density_angle(a, mu, Sigma, tol=1e-10):
    """Projected normal density on the circle at angle(s) ``a``.

    Computed by adaptive quadrature of r * N_2(r u(a); mu, Sigma) over
    (0, r_max) with r_max = ||mu|| + 10 sqrt(lambda_max(Sigma)).
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape[0] != 2:
        raise ValueError("angle density is defined for n = 2 only")
    Sigma = np.asarray(Sigma, dtype=float)
    r_max = np.linalg.norm(mu) + 10.0 * np.sqrt(np.linalg.eigvalsh(Sigma).max())
    Si_mu = psd_solve(Sigma, mu)
    L = chol_lower(Sigma)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    const = -0.5 * (2.0 * LOG_2PI + logdet + mu @ Si_mu)

    def density_one(angle):
        uv = np.array([np.cos(angle), np.sin(angle)])
        qa = float(uv @ psd_solve(Sigma, uv))
        qb = float(uv @ Si_mu)

        def integrand(r):
            return r * np.exp(const - 0.5 * qa * r * r + qb * r)

        val, abserr = scipy.integrate.quad(
            integrand, 0.0, r_max, epsabs=tol, epsrel=tol, limit=200
        )
        if abserr > max(1e-8, 1e-6 * abs(val)):
            warnings.warn(
                f"angle-density quadrature tolerance not met (abserr={abserr:.2e})",
                RuntimeWarning,
                stacklevel=3,
            )
        return val

    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return density_one(float(a))
    return np.array([density_one(x) for x in a.ravel()]).reshape(a.shape)


def _slice_interval_update(a, b, n, log_v, w):
    """Deterministic core of the length slice step.

    Given the slice height (via log_v) and the uniform w, return the new
    length from the kernel r^{n-1} exp(-(a/2)(r - b/a)^2) restricted to the
    slice interval [c, d].
    """
    ratio = b / a
    half = np.sqrt(-2.0 * log_v / a)
    c = ratio + np.maximum(-ratio, -half)
    d = ratio + half
    cn = c**n
    r_new = ((d**n - cn) * w + cn) ** (1.0 / n)
    return np.maximum(r_new, 1e-300)


def slice_steps_batch(r_old, a, b, n, rng):
    """Vectorized slice transitions for independent length targets.

    ``a`` and ``b`` are the per-target quadratic coefficients
    u^T S^{-1} u and u^T S^{-1} m; each entry advances one slice step.
    """
    r_old = np.asarray(r_old, dtype=float)
    log_u1 = np.log1p(-rng.random(r_old.shape))
    w = rng.random(r_old.shape)
    log_v = -0.5 * a * (r_old - b / a) ** 2 + log_u1
    return _slice_interval_update(a, b, n, log_v, w)


def slice_step_length(r_old, u, m, S, rng):
    """One slice-sampling transition for p(r | u, m, S).

    The target kernel is r^{n-1} N_n(r u; m, S) on r > 0; the step leaves it
    invariant. Raises for r_old <= 0.
    """
    if r_old <= 0.0:
        raise ValueError("slice step requires r_old > 0")
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    Si_u = psd_solve(S, u)
    a = float(u @ Si_u)
    b = float(Si_u @ np.asarray(m, dtype=float))
    return float(slice_steps_batch(np.asarray(r_old), a, b, n, rng))


_I0_SWITCH = 15.0


def log_bessel_i0(x):
    """log I_0(x) for x >= 0, overflow-free.

    Power series below x = 15, log-scaled asymptotic expansion above;
    relative error below 1e-10 across [0, 700].
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("log_bessel_i0 requires x >= 0")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)

    small = x < _I0_SWITCH
    if np.any(small):
        xs = x[small]
        q = 0.25 * xs * xs
        term = np.ones_like(xs)
        total = np.ones_like(xs)
        for k in range(1, 60):
            term = term * q / (k * k)
            total += term
            if np.all(term < 1e-17 * total):
                break
        out[small] = np.log(total)
    if np.any(~small):
        xl = x[~small]
        t = np.ones_like(xl)
        total = np.ones_like(xl)
        for k in range(1, 40):
            t = t * (2 * k - 1) ** 2 / (8.0 * k * xl)
            total += t
            if np.all(t < 1e-17 * total):
                break
        out[~small] = xl - 0.5 * np.log(TWO_PI * xl) + np.log(total)
    return float(out[0]) if scalar else out


def accept_reject_angle(r, mu, rng, max_iter=10**6):
    """Exact draw from the angle density p(a | r, mu) on the circle.

    Target: exp(r mu_1 cos a + r mu_2 sin a) / (2 pi I_0(r ||mu||)), the
    conditional of the angle given the length when r u(a) ~ N_2(mu, I).
    Uniform proposals with envelope M = exp(r ||mu||) / I_0(r ||mu||);
    the acceptance test runs in log scale.
    """
    if r <= 0.0:
        raise ValueError("accept_reject_angle requires r > 0")
    mu = np.asarray(mu, dtype=float)
    rnorm = r * np.linalg.norm(mu)
    for _ in range(max_iter):
        v = rng.uniform(0.0, TWO_PI)
        log_u = np.log1p(-rng.random())
        if log_u < r * (mu[0] * np.cos(v) + mu[1] * np.sin(v)) - rnorm:
            return v
    raise NumericalError(
        f"accept-reject sampler exceeded {max_iter} iterations (r||mu|| = {rnorm:.3e})"
    )


def angle_density_given_length(a, r, mu):
    """Density targeted by accept_reject_angle, for oracles and plots."""
    a = np.asarray(a, dtype=float)
    mu = np.asarray(mu, dtype=float)
    kappa = r * np.linalg.norm(mu)
    return np.exp(
        r * (mu[0] * np.cos(a) + mu[1] * np.sin(a)) - log_bessel_i0(kappa)
    ) / TWO_PI
