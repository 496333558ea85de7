"""Deterministic grid posterior for scalar structural parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .collapsed import combine


@dataclass(frozen=True)
class GridPosterior:
    """Posterior on the open grid ``theta_i = i / (G + 1)``, ``i = 1..G``.

    ``density`` integrates to one under the trapezoid rule on ``[0, 1]`` with
    zero density at both endpoints.
    """

    theta: np.ndarray
    log_post: np.ndarray
    density: np.ndarray

    @property
    def step(self) -> float:
        return float(self.theta[1] - self.theta[0]) if self.theta.size > 1 else 1.0

    def _padded(self):
        t = np.concatenate([[0.0], self.theta, [1.0]])
        f = np.concatenate([[0.0], self.density, [0.0]])
        return t, f


def open_grid(G: int) -> np.ndarray:
    if G < 2:
        raise ValueError("grid needs at least 2 points")
    return np.arange(1, G + 1) / (G + 1.0)


def _normalize(theta, log_post) -> GridPosterior:
    mx = np.max(log_post)
    if not np.isfinite(mx):
        raise ArithmeticError("log posterior is not finite anywhere on the grid")
    f = np.exp(log_post - mx)
    h = 1.0 / (theta.size + 1)
    # trapezoid on [0, 1] with zero endpoints reduces to h * sum(f)
    f = f / (h * f.sum())
    return GridPosterior(theta, log_post, f)


def _check_scalar(problem):
    if problem.model.dim != 1:
        raise ValueError(f"grid posterior needs a scalar parameter, model has dim {problem.model.dim}")


def grid_posterior(problem, prior, G: int = 2001) -> GridPosterior:
    """Normalize ``loglik + log prior`` over the open uniform grid."""
    _check_scalar(problem)
    theta = open_grid(G)
    return _normalize(theta, problem.loglik_batch(theta) + prior.logpdf_batch(theta))


def grid_posteriors_multi(problem, prior, priors_nuisance, G: int = 2001) -> list[GridPosterior]:
    """Grid posteriors for several nuisance priors sharing the same Dirichlet parameter.

    The coefficient rows depend only on the data and the Dirichlet parameter,
    so they are convolved once and recombined with each prior's weights.
    """
    _check_scalar(problem)
    theta = open_grid(G)
    logc = problem.log_coefficients_batch(theta)
    lprior = prior.logpdf_batch(theta)
    out = []
    for nuis in priors_nuisance:
        pb = problem.with_prior(nuis)
        if pb._A is not problem._A:
            lc = pb.log_coefficients_batch(theta)
        else:
            lc = logc
        out.append(_normalize(theta, combine(lc, pb.log_weights) + pb.log_count_factorials + lprior))
    return out


def grid_mean_and_interval(gp: GridPosterior, level: float = 0.95):
    """Posterior mean and equal-tailed interval from the trapezoid CDF."""
    t, f = gp._padded()
    h = np.diff(t)
    mean = float(np.sum(0.5 * h * (t[:-1] * f[:-1] + t[1:] * f[1:])))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * h * (f[:-1] + f[1:]))])
    cdf /= cdf[-1]
    q = (1.0 - level) / 2.0
    return mean, _invert(t, f, cdf, q), _invert(t, f, cdf, 1.0 - q)


def _invert(t, f, cdf, q):
    # the cdf is piecewise quadratic between nodes; linear inversion is adequate at grid resolution
    i = int(np.searchsorted(cdf, q, side="left"))
    i = min(max(i, 1), t.size - 1)
    c0, c1 = cdf[i - 1], cdf[i]
    if c1 <= c0:
        return float(t[i])
    return float(t[i - 1] + (q - c0) / (c1 - c0) * (t[i] - t[i - 1]))
