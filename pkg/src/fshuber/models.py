"""Structural models: atom probabilities, their derivatives and the logit transform."""

from __future__ import annotations

import math

import numpy as np

from .core import DomainError, log_factorials

_CLAMP = 700.0


def logit_transform(z):
    """Map unconstrained ``z`` into the open unit box.

    Returns ``(theta, log_jacobian)`` where the log-Jacobian is
    ``sum(log(theta) + log(1 - theta))``.
    """
    z = np.clip(np.atleast_1d(np.asarray(z, dtype=float)), -_CLAMP, _CLAMP)
    # log sigmoid(z) and log sigmoid(-z) without overflow
    log_t = -np.logaddexp(0.0, -z)
    log_1mt = -np.logaddexp(0.0, z)
    theta = np.exp(log_t)
    return theta, float(np.sum(log_t + log_1mt))


def inverse_logit_transform(theta):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.any((theta <= 0) | (theta >= 1)):
        raise DomainError("theta must lie in the open unit box")
    return np.log(theta) - np.log1p(-theta)


class StructuralModel:
    """Contract for a parametric family on a finite support.

    Subclasses provide ``dim``, ``m``, ``atom_probs`` and ``atom_prob_grads``
    (a ``dim x m`` array). Parameters live in the open unit box and are
    sampled through :func:`logit_transform`.
    """

    name = "abstract"
    dim: int
    m: int

    def atom_probs(self, theta) -> np.ndarray:
        raise NotImplementedError

    def atom_prob_grads(self, theta) -> np.ndarray:
        raise NotImplementedError

    def log_atom_probs(self, theta) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.atom_probs(theta))

    def log_atom_prob_grads(self, theta) -> np.ndarray:
        """``d log p_j / d theta_l`` as a ``dim x m`` array (0 where ``p_j == 0``)."""
        p = self.atom_probs(theta)
        g = self.atom_prob_grads(theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(p > 0, g / np.where(p > 0, p, 1.0), 0.0)

    def log_atom_probs_batch(self, thetas) -> np.ndarray:
        """``log p_j`` for each row of ``thetas``; shape ``(len(thetas), m)``."""
        thetas = np.asarray(thetas, dtype=float).reshape(-1, self.dim)
        return np.vstack([self.log_atom_probs(t) for t in thetas])

    def transform(self, z):
        return logit_transform(z)

    def inverse_transform(self, theta):
        return inverse_logit_transform(theta)

    def naive_fit(self, counts) -> np.ndarray | None:
        """Cheap point estimate used to start samplers; ``None`` means box centre."""
        return None

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim,):
            raise DomainError(f"{self.name} expects a parameter of length {self.dim}")
        if np.any(~((theta > 0) & (theta < 1))):
            raise DomainError(f"{self.name} parameter must lie in (0, 1), got {theta}")
        return theta


class BinomialModel(StructuralModel):
    """Binomial(M, theta) on the support ``0..M``."""

    name = "binomial"
    dim = 1

    def __init__(self, M: int):
        if int(M) != M or M < 1:
            raise ValueError("M must be a positive integer")
        self.M = int(M)
        self.m = self.M + 1
        self._j = np.arange(self.m, dtype=float)
        lf = log_factorials(self.M)
        self._log_binom = lf[self.M] - lf - lf[::-1]
        self._lower = None

    def __repr__(self):
        return f"BinomialModel(M={self.M})"

    def _log_pmf(self, t: float) -> np.ndarray:
        return self._log_binom + self._j * math.log(t) + (self.M - self._j) * math.log1p(-t)

    def atom_probs(self, theta) -> np.ndarray:
        t = float(self.check_theta(theta)[0])
        return np.exp(self._log_pmf(t))

    def log_atom_probs(self, theta) -> np.ndarray:
        t = float(self.check_theta(theta)[0])
        return self._log_pmf(t)

    def log_atom_probs_batch(self, thetas) -> np.ndarray:
        t = np.asarray(thetas, dtype=float).reshape(-1)
        if np.any((t <= 0) | (t >= 1)):
            raise DomainError("binomial parameter must lie in (0, 1)")
        return (self._log_binom[None, :] + np.log(t)[:, None] * self._j[None, :]
                + np.log1p(-t)[:, None] * (self.M - self._j)[None, :])

    def atom_prob_grads(self, theta) -> np.ndarray:
        # p_j * (j/t - (M-j)/(1-t)) written as M * (b_{M-1,j-1} - b_{M-1,j}): finite at j = 0, M
        t = float(self.check_theta(theta)[0])
        if self.M == 1:
            lower = np.array([1.0])
        else:
            if self._lower is None:
                self._lower = BinomialModel(self.M - 1)
            lower = self._lower.atom_probs(t)
        grad = np.zeros(self.m)
        grad[1:] += lower
        grad[:-1] -= lower
        return (self.M * grad)[None, :]

    def log_atom_prob_grads(self, theta) -> np.ndarray:
        t = float(self.check_theta(theta)[0])
        return (self._j / t - (self.M - self._j) / (1.0 - t))[None, :]

    def naive_fit(self, counts):
        c = np.asarray(counts, dtype=float)
        if c.sum() == 0:
            return None
        t = float(np.dot(c, self._j) / (c.sum() * self.M))
        return np.array([min(max(t, 0.01), 0.99)])


class TwoComponentBinomialModel(StructuralModel):
    """Equal-weight mixture of Binomial(M, theta_1) and Binomial(M, theta_2)."""

    name = "binomial2"
    dim = 2
    weight = 0.5

    def __init__(self, M: int):
        self._base = BinomialModel(M)
        self.M = self._base.M
        self.m = self._base.m

    def __repr__(self):
        return f"TwoComponentBinomialModel(M={self.M})"

    def atom_probs(self, theta) -> np.ndarray:
        t1, t2 = self.check_theta(theta)
        return self.weight * self._base.atom_probs(t1) + (1 - self.weight) * self._base.atom_probs(t2)

    def log_atom_probs(self, theta) -> np.ndarray:
        t1, t2 = self.check_theta(theta)
        lw = math.log(self.weight)
        return np.logaddexp(lw + self._base.log_atom_probs(t1), math.log1p(-self.weight) + self._base.log_atom_probs(t2))

    def log_atom_probs_batch(self, thetas) -> np.ndarray:
        t = np.asarray(thetas, dtype=float).reshape(-1, 2)
        lw = math.log(self.weight)
        return np.logaddexp(lw + self._base.log_atom_probs_batch(t[:, 0]),
                            math.log1p(-self.weight) + self._base.log_atom_probs_batch(t[:, 1]))

    def log_atom_prob_grads(self, theta) -> np.ndarray:
        # responsibilities times component scores, formed in logs so tiny atoms stay finite
        t1, t2 = self.check_theta(theta)
        lp = self.log_atom_probs(theta)
        r1 = np.exp(math.log(self.weight) + self._base.log_atom_probs(t1) - lp)
        r2 = np.exp(math.log1p(-self.weight) + self._base.log_atom_probs(t2) - lp)
        return np.vstack([r1 * self._base.log_atom_prob_grads(t1)[0], r2 * self._base.log_atom_prob_grads(t2)[0]])

    def atom_prob_grads(self, theta) -> np.ndarray:
        t1, t2 = self.check_theta(theta)
        return np.vstack([
            self.weight * self._base.atom_prob_grads(t1)[0],
            (1 - self.weight) * self._base.atom_prob_grads(t2)[0],
        ])

    def naive_fit(self, counts):
        c = np.asarray(counts, dtype=np.int64)
        if c.sum() < 2:
            return None
        obs = np.repeat(np.arange(self.m), c) / self.M
        half = obs.size // 2
        lo, hi = obs[:half].mean(), obs[half:].mean()
        return np.clip(np.array([lo, hi]), 0.01, 0.99)


def binomial_atom_probs(M: int, theta: float) -> np.ndarray:
    return BinomialModel(M).atom_probs(theta)


def binomial_atom_prob_grads(M: int, theta: float) -> np.ndarray:
    return BinomialModel(M).atom_prob_grads(theta)[0]


MODELS = {"binomial": BinomialModel, "binomial2": TwoComponentBinomialModel}


def make_model(name: str, M: int) -> StructuralModel:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(M)
