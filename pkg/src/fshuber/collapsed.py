"""Exact collapsed marginal likelihood by forward convolution over atoms.

Convention: :func:`log_marginal_likelihood` returns the log of the allocation
sum exactly as written for the Beta(a, b) x Dirichlet(alpha) prior, i.e.

    sum_k prod_j C(N_j, k_j) (alpha_j)_{k_j} p_j^{N_j - k_j}
          * B(a + K, b + n - K) / (B(a, b) (alpha_0)_K)

with no multinomial coefficient ``n! / prod N_j!``. Internally the cell
polynomials carry a ``1 / N_j!`` factor each; the constant ``sum_j ln N_j!``
is added back at the end.

The coefficient row ``C(R)`` of the product of cell polynomials spans roughly
``R ln R`` orders of magnitude, so the kernels carry ``E(R) = C(R) R! / Q^R``
(``Q`` the total probability of the observed atoms) instead; that factor is
exposed as ``log_index_scale`` of the returned :class:`LogScaledVector`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import CountVector, LogScaledVector, NuisancePrior, log_factorials, log_gamma, log_pochhammer


class DegenerateLikelihoodError(ArithmeticError):
    """Every allocation term vanished."""


@dataclass(frozen=True)
class CellPolynomial:
    """Coefficients ``c_r = (alpha_j)_{N_j - r} p_j^r / ((N_j - r)! r!)``, ``r = 0..N_j``."""

    j: int
    coefficients: np.ndarray


def log_cell_factors(N_j: int, alpha_j: float) -> np.ndarray:
    """theta-free part of the log cell coefficients: ``ln (alpha_j)_{N-r} - ln (N-r)! - ln r!``."""
    lf = log_factorials(N_j)
    k = N_j - np.arange(N_j + 1)
    return log_pochhammer(alpha_j, k) - lf[k] - lf


def cell_polynomial(j: int, N_j: int, alpha_j: float, p_j: float) -> CellPolynomial:
    lb = log_cell_factors(N_j, alpha_j)
    r = np.arange(N_j + 1)
    if p_j == 0:
        coef = np.zeros(N_j + 1)
        coef[0] = math.exp(lb[0])
    else:
        coef = np.exp(lb + r * math.log(p_j))
    return CellPolynomial(j, coef)


def allocation_log_weights(counts: CountVector, prior: NuisancePrior) -> np.ndarray:
    """``ln W_R`` for clean totals ``R = 0..n``.

    ``W_R = B(a + K, b + R) / (B(a, b) (alpha_0)_K)`` with ``K = n - R``, using
    ``B(a + K, b + R) / B(a, b) = (a)_K (b)_R / (a + b)_n``.
    """
    n = counts.n
    R = np.arange(n + 1)
    K = n - R
    return (log_pochhammer(prior.a, K) + log_pochhammer(prior.b, R)
            - log_pochhammer(prior.a + prior.b, n) - log_pochhammer(prior.alpha0, K))


def combine(log_coef, log_weights: np.ndarray) -> np.ndarray:
    """``ln sum_R exp(log_weights[R] + log_coef[..., R])`` along the last axis."""
    t = np.asarray(log_coef) + log_weights
    mx = np.max(t, axis=-1, keepdims=True)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(t - safe), axis=-1)) + safe[..., 0]
    return out


class CollapsedLikelihoodProblem:
    """Counts, nuisance prior and structural model bound into one evaluation context.

    The theta-free cell factors and allocation weights are built once and
    never mutated, so one instance can serve concurrent evaluations.
    """

    def __init__(self, counts: CountVector, prior: NuisancePrior, model):
        if not isinstance(counts, CountVector):
            counts = CountVector(counts)
        if not (model.m == counts.m == prior.m):
            raise ValueError(f"support size mismatch: model {model.m}, counts {counts.m}, prior {prior.m}")
        self.counts = counts
        self.prior = prior
        self.model = model
        N = counts.counts
        # atoms with N_j = 0 contribute the constant polynomial [1]
        self.active = np.flatnonzero(N)
        self._lf = log_factorials(counts.n)
        self._set_cell_factors()
        self.log_weights = allocation_log_weights(counts, prior)
        self.log_count_factorials = float(np.sum(self._lf[N])) if counts.n else 0.0

    def _set_cell_factors(self):
        N = self.counts.counts
        parts, const = [], 0.0
        for j in self.active:
            # theta-free factor (alpha_j)_{N-r} / (N-r)!, scaled to a unit maximum
            k = N[j] - np.arange(N[j] + 1)
            la = log_pochhammer(float(self.prior.alpha[j]), k) - self._lf[k]
            top = float(la.max())
            parts.append(np.exp(la - top))
            const += top
        self._A = np.ascontiguousarray(np.concatenate(parts) if parts else np.zeros(0))
        self._offsets = np.zeros(len(parts) + 1, dtype=np.intp)
        self._offsets[1:] = np.cumsum([len(p) for p in parts], dtype=np.intp)
        self._log_A_const = const

    @property
    def n(self) -> int:
        return self.counts.n

    def with_prior(self, prior: NuisancePrior) -> "CollapsedLikelihoodProblem":
        """Same data and model under a different nuisance prior, reusing cell factors when alpha agrees."""
        new = object.__new__(CollapsedLikelihoodProblem)
        new.__dict__.update(self.__dict__)
        if not np.array_equal(prior.alpha, self.prior.alpha):
            return CollapsedLikelihoodProblem(self.counts, prior, self.model)
        new.prior = prior
        new.log_weights = allocation_log_weights(self.counts, prior)
        return new

    # -- coefficient convolution -------------------------------------------------
    def _active_logp(self, theta) -> np.ndarray:
        return np.ascontiguousarray(self.model.log_atom_probs(theta)[self.active], dtype=float)

    def _index_scale(self, logQ: float) -> np.ndarray:
        return np.arange(self.n + 1) * logQ - self._lf

    def forward_convolve(self, theta, renorm: bool = True) -> LogScaledVector:
        """Coefficients ``C_m(R; theta)``, ``R = 0..n``, of the product of cell polynomials."""
        E, ls, logQ = kernels.dp_forward(self._A, self._offsets, self._active_logp(theta), self._lf, renorm)
        return LogScaledVector(E, ls + self._log_A_const, self._index_scale(logQ))

    def forward_convolve_with_grad(self, theta, renorm: bool = True):
        """Coefficients and their theta derivatives.

        Returns ``(C, F)``: ``C`` as in :meth:`forward_convolve` and ``F`` a
        ``(d, n + 1)`` array with ``dC(R)/dtheta_l = F[l, R] * exp(C.log_scale
        + C.log_index_scale[R])``, i.e. the same scale as ``C.mantissas``.
        """
        theta = self.model.check_theta(theta)
        dlogp = np.ascontiguousarray(self.model.log_atom_prob_grads(theta)[:, self.active], dtype=float)
        pdot = np.ascontiguousarray(self.model.atom_prob_grads(theta)[:, self.active], dtype=float)
        E, F, ls, logQ = kernels.dp_forward_grad(self._A, self._offsets, self._active_logp(theta),
                                                 self._lf, dlogp, pdot, renorm)
        return LogScaledVector(E, ls + self._log_A_const, self._index_scale(logQ)), F

    def log_coefficients_batch(self, thetas) -> np.ndarray:
        """``ln C_m(R; theta)`` for each theta, shape ``(G, n + 1)``."""
        logp = self.model.log_atom_probs_batch(thetas)[:, self.active]
        E, scales, logQ = kernels.dp_forward_batch(self._A, self._offsets, np.ascontiguousarray(logp), self._lf)
        R = np.arange(self.n + 1)
        with np.errstate(divide="ignore"):
            return (np.log(E) + (scales + self._log_A_const)[:, None]
                    + logQ[:, None] * R[None, :] - self._lf[None, :])

    # -- likelihood --------------------------------------------------------------
    def log_marginal_likelihood(self, theta) -> float:
        v = self.forward_convolve(theta)
        return float(combine(v.log_values(), self.log_weights)) + self.log_count_factorials

    def loglik(self, theta) -> float:
        return self.log_marginal_likelihood(theta)

    def loglik_batch(self, thetas, log_weights: np.ndarray | None = None) -> np.ndarray:
        lw = self.log_weights if log_weights is None else log_weights
        return combine(self.log_coefficients_batch(thetas), lw) + self.log_count_factorials

    def log_marginal_score(self, theta) -> np.ndarray:
        return self.loglik_and_score(theta)[1]

    def loglik_and_score(self, theta):
        """Log marginal likelihood and its gradient in model coordinates."""
        C, D = self.forward_convolve_with_grad(theta)
        # weights and the per-index factor are shared by C and D, so fold them together
        lw = self.log_weights + C.log_index_scale
        mant = C.mantissas
        pos = mant > 0
        with np.errstate(divide="ignore"):
            t = np.where(pos, lw + np.log(np.where(pos, mant, 1.0)), -np.inf)
        L = np.max(t)
        if not np.isfinite(L):
            raise DegenerateLikelihoodError(f"all allocation terms vanish at theta={theta}")
        e = np.exp(t - L)
        den = e.sum()
        num = (D[:, pos] / mant[pos]) @ e[pos]
        if not pos.all():
            # D can be nonzero where C vanishes only through zero-probability atoms
            w0 = np.exp(np.minimum(lw[~pos] - L, 700.0))
            num = num + D[:, ~pos] @ w0
        ll = float(L + math.log(den) + C.log_scale + self.log_count_factorials)
        return ll, num / den


class PlainLikelihoodProblem:
    """Uncontaminated multinomial likelihood ``sum_j N_j ln p_j(theta)`` (the naive fit)."""

    def __init__(self, counts: CountVector, model):
        if not isinstance(counts, CountVector):
            counts = CountVector(counts)
        if model.m != counts.m:
            raise ValueError("support size mismatch")
        self.counts = counts
        self.model = model
        self._N = counts.counts.astype(float)
        self._active = self._N > 0

    @property
    def n(self) -> int:
        return self.counts.n

    def loglik(self, theta) -> float:
        lp = self.model.log_atom_probs(theta)
        return float(np.dot(self._N[self._active], lp[self._active]))

    def loglik_batch(self, thetas) -> np.ndarray:
        lp = self.model.log_atom_probs_batch(thetas)
        return lp[:, self._active] @ self._N[self._active]

    def loglik_and_score(self, theta):
        theta = self.model.check_theta(theta)
        p = self.model.atom_probs(theta)
        g = self.model.atom_prob_grads(theta)
        a = self._active
        return self.loglik(theta), g[:, a] @ (self._N[a] / p[a])


def forward_convolve(problem: CollapsedLikelihoodProblem, theta) -> LogScaledVector:
    return problem.forward_convolve(theta)


def log_marginal_likelihood(problem: CollapsedLikelihoodProblem, theta) -> float:
    return problem.log_marginal_likelihood(theta)


def log_sensitivity_likelihood(problem: CollapsedLikelihoodProblem, theta) -> float:
    """Log of the Beta(1, b) / Dirichlet(1) sensitivity-family sum

        sum_r prod_j p_j^{r_j} / r_j! * Gamma(n - R + 1) Gamma(b + R) / (m)_{n - R}

    obtained from the allocation-sum convention by the exact constant
    ``ln B(1, b) + ln Gamma(n + b + 1) - sum_j ln N_j!``.
    Requires ``a == 1`` and all ``alpha_j == 1``.
    """
    pr = problem.prior
    if pr.a != 1.0 or np.any(pr.alpha != 1.0):
        raise ValueError("sensitivity-family convention needs a = 1 and alpha_j = 1")
    return problem.log_marginal_likelihood(theta) + sensitivity_offset(problem)


def sensitivity_offset(problem: CollapsedLikelihoodProblem) -> float:
    b, n = problem.prior.b, problem.n
    return -math.log(b) + log_gamma(n + b + 1.0) - problem.log_count_factorials
