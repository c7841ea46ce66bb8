"""Point, interval, and density forecasts on the circle, and their scores.

Quantiles follow the linearize-about-the-median construction; interval and
score definitions are wrap-aware throughout. All scoring functions are pure
and accept plain arrays of angles in [0, 2*pi).
"""

from dataclasses import dataclass

import numpy as np

from ._errors import DegenerateDirectionError
from ._linalg import psd_sqrt
from .directional import (
    TWO_PI,
    circular_distance,
    sample_projected_normal,
    unit_to_angle,
    wrap_angle,
)


def _deviation_sum(sample, candidates):
    """Sum over the sample of arc distance to each candidate angle."""
    out = np.empty(candidates.shape[0])
    J = sample.shape[0]
    block = max(1, int(2**22 // max(J, 1)))
    for start in range(0, candidates.shape[0], block):
        cand = candidates[start : start + block]
        d = np.abs(sample[None, :] - cand[:, None])
        out[start : start + len(cand)] = np.sum(np.pi - np.abs(np.pi - d), axis=1)
    return out


def circular_median(sample):
    """Minimizer of the mean circular absolute deviation.

    The objective is piecewise linear with breakpoints at the sample points
    and their antipodes, so it is minimized over that candidate set (plus
    the origin, so that flat minimizer arcs crossing 0 resolve to the
    smallest angle). Ties break toward the smallest angle.
    """
    sample = wrap_angle(np.asarray(sample, dtype=float).ravel())
    if sample.size == 0:
        raise ValueError("circular median of an empty sample")
    candidates = np.unique(np.concatenate([sample, wrap_angle(sample + np.pi), [0.0]]))
    values = _deviation_sum(sample, candidates)
    best = values.min()
    tol = 1e-9 * max(1.0, best)
    return float(candidates[values <= best + tol].min())


def circular_quantile(sample, alpha, median=None):
    """Sample circular quantile(s): linearize about the median, then invert.

    Recenters the sample by the circular median m, folds to (-pi, pi],
    takes the ordinary (linear-interpolation) quantile, and maps back.
    ``alpha`` may be a scalar or an array of levels in (0, 1).
    """
    sample = wrap_angle(np.asarray(sample, dtype=float).ravel())
    if sample.size == 0:
        raise ValueError("circular quantile of an empty sample")
    m = circular_median(sample) if median is None else median
    y = wrap_angle(sample - m)
    y = np.where(y > np.pi, y - TWO_PI, y)
    r = np.quantile(y, alpha)
    return wrap_angle(r + m)


@dataclass(frozen=True)
class ForecastInterval:
    """Circular credible set from two quantiles; may wrap through zero."""

    lower: float
    upper: float

    @property
    def wraps(self):
        return self.upper < self.lower

    @property
    def length(self):
        if self.wraps:
            return TWO_PI - (self.lower - self.upper)
        return self.upper - self.lower

    def contains(self, a):
        """Wrap-aware, endpoint-inclusive membership."""
        a = wrap_angle(np.asarray(a, dtype=float))
        if self.wraps:
            return (a <= self.upper) | (a >= self.lower)
        return (self.lower <= a) & (a <= self.upper)


def forecast_interval(draws, alpha):
    """Equal-tailed circular interval at coverage 1 - alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    draws = np.asarray(draws, dtype=float)
    m = circular_median(draws)
    lo = float(circular_quantile(draws, alpha / 2.0, median=m))
    hi = float(circular_quantile(draws, 1.0 - alpha / 2.0, median=m))
    return ForecastInterval(lower=lo, upper=hi)


def mce(forecasts, realizations):
    """Mean circular error: average of 1 - cos(a - ahat)."""
    forecasts = np.asarray(forecasts, dtype=float)
    realizations = np.asarray(realizations, dtype=float)
    if forecasts.shape != realizations.shape:
        raise ValueError("forecast and realization sequences differ in length")
    return float(np.mean(circular_distance(realizations, forecasts)))


def mil_and_coverage(intervals, realizations):
    """Mean interval length and empirical coverage of a sequence of sets."""
    realizations = np.asarray(realizations, dtype=float)
    if len(intervals) != realizations.shape[0]:
        raise ValueError("interval and realization sequences differ in length")
    lengths = np.array([iv.length for iv in intervals])
    hits = np.array([bool(iv.contains(a)) for iv, a in zip(intervals, realizations)])
    return float(lengths.mean()), float(hits.mean())


def crps(draws, realization):
    """Circular CRPS of an ensemble against one realization.

    Uses the O(J) identity sum_{j,k} [1 - cos(a_j - a_k)] =
    J^2 - (sum cos)^2 - (sum sin)^2 for the ensemble spread term.
    """
    draws = np.asarray(draws, dtype=float).ravel()
    J = draws.size
    first = float(np.mean(circular_distance(draws, realization)))
    c = np.sum(np.cos(draws))
    s = np.sum(np.sin(draws))
    spread = (J * J - c * c - s * s) / (J * J)
    return first - 0.5 * spread


def mcrps(scores):
    """Mean CRPS over forecast periods."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("no scores to average")
    return float(scores.mean())


def mean_direction(s, Sigma, n_draws, rng, return_angle=False):
    """Monte Carlo mean direction of PN(s, Sigma): normalized average draw.

    Raises DegenerateDirectionError when the resultant is too short to
    identify a direction. The threshold 2/sqrt(n_draws) is the scale of the
    resultant under a uniform direction distribution (capped at 0.5 so tiny
    ensembles are never rejected, floored at 1e-8).
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    s = np.asarray(s, dtype=float)
    draws = sample_projected_normal(s, Sigma, rng, size=n_draws)
    ubar = draws.mean(axis=0)
    norm = np.linalg.norm(ubar)
    if norm < max(1e-8, min(0.5, 2.0 / np.sqrt(n_draws))):
        raise DegenerateDirectionError(
            f"resultant length {norm:.3e} at {n_draws} draws: direction effectively uniform"
        )
    direction = ubar / norm
    if return_angle:
        return float(unit_to_angle(direction))
    return direction


def posterior_predictive(draws, F_next, n_draws, rng):
    """One-step-ahead predictive sample from stored posterior draws.

    For each selected posterior draw: propagate s_T through the transition,
    then emit a projected-normal observation with mean F_next s_{T+1}.
    Returns angles when n = 2, unit vectors otherwise.
    """
    F_next = np.asarray(F_next, dtype=float)
    J = len(draws)
    if n_draws == J:
        idx = np.arange(J)
    else:
        idx = rng.choice(J, size=n_draws, replace=True)
    n, p = draws.n, draws.p
    out = np.empty((len(idx), n))
    for row, j in enumerate(idx):
        eta = psd_sqrt(draws.W[j]) @ rng.standard_normal(p)
        s_next = draws.G[j] @ draws.s_last[j] + eta
        out[row] = sample_projected_normal(F_next @ s_next, draws.Sigma[j], rng)
    if n == 2:
        return unit_to_angle(out)
    return out
