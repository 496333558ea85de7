"""Score of the collapsed likelihood and the posterior in unconstrained coordinates.

The derivative rows ``D_l(R) = dC(R)/dtheta_l`` are convolved alongside the
coefficients. For a general Dirichlet parameter only ``p_j^r`` in a cell
coefficient depends on theta, so

    d c_{j,r} / d theta_l = (alpha_j)_{N_j-r} pdot_{jl} p_j^{r-1} / ((N_j-r)! (r-1)!),  r >= 1,

which is the same differentiation step as the ``alpha = 1`` recursion. Both
rows are divided by the same renormalization factor after each atom, so the
ratio giving the score is unaffected.
"""

from __future__ import annotations

import numpy as np

from .collapsed import CollapsedLikelihoodProblem


class BetaThetaPrior:
    """Independent Beta(a, b) prior on each coordinate of theta in the unit box."""

    def __init__(self, a: float = 1.0, b: float = 1.0):
        if not (a > 0 and b > 0):
            raise ValueError("Beta prior shapes must be positive")
        self.a = float(a)
        self.b = float(b)

    def __repr__(self):
        return f"BetaThetaPrior(a={self.a}, b={self.b})"

    def logpdf_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.a == 1.0 and self.b == 1.0:
            return 0.0, np.zeros_like(theta)
        from .core import log_beta

        lp = float(np.sum((self.a - 1) * np.log(theta) + (self.b - 1) * np.log1p(-theta) - log_beta(self.a, self.b)))
        return lp, (self.a - 1) / theta - (self.b - 1) / (1 - theta)

    def logpdf_batch(self, thetas) -> np.ndarray:
        t = np.asarray(thetas, dtype=float)
        if self.a == 1.0 and self.b == 1.0:
            return np.zeros(t.shape[0] if t.ndim > 1 else t.size)
        from .core import log_beta

        lp = (self.a - 1) * np.log(t) + (self.b - 1) * np.log1p(-t) - log_beta(self.a, self.b)
        return lp if lp.ndim == 1 else lp.sum(axis=1)


FLAT = BetaThetaPrior(1.0, 1.0)


def forward_convolve_with_grad(problem: CollapsedLikelihoodProblem, theta, renorm: bool = True):
    """Return ``(C, D)``: the coefficient vector and a ``(d, n + 1)`` array of its derivatives."""
    return problem.forward_convolve_with_grad(theta, renorm)


def log_marginal_score(problem: CollapsedLikelihoodProblem, theta) -> np.ndarray:
    return problem.loglik_and_score(theta)[1]


def log_posterior_and_score(problem, prior, z, score_scale: float = 1.0):
    """Log posterior density of ``z`` (logit coordinates) and its gradient.

    ``problem`` is anything exposing ``model`` and ``loglik_and_score``.
    ``score_scale = 0`` zeroes the returned gradient; it exists for tests
    that reduce the Langevin proposal to a random walk.
    """
    model = problem.model
    theta, log_jac = model.transform(z)
    ll, g = problem.loglik_and_score(theta)
    lp, gp = prior.logpdf_and_grad(theta)
    dtheta_dz = theta * (1.0 - theta)
    grad = (np.asarray(g) + gp) * dtheta_dz + (1.0 - 2.0 * theta)
    return ll + lp + log_jac, score_scale * grad
