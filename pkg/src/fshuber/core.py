"""Shared domain types, special functions and log-scaled arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Lanczos approximation, g = 607/128, 15 terms (Godfrey).
_LANCZOS_G = 607.0 / 128.0
_LANCZOS_COEF = np.array([
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
])
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Taylor coefficients of ln Gamma(1 + d): -euler_gamma, then (-1)^k zeta(k) / k.
_LGAMMA1P_COEF = np.array([
    -0.5772156649015329,
    0.8224670334241132,
    -0.40068563438653143,
    0.27058080842778454,
    -0.20738555102867398,
    0.1695571769974082,
    -0.1440498967688461,
    0.12550966952474304,
    -0.11133426586956469,
    0.1000994575127818,
    -0.09095401714582904,
    0.083353840546109,
    -0.0769325164113522,
    0.07143294629536133,
    -0.06666870588242046,
    0.06250095514121304,
    -0.058823978658684585,
    0.055555767627403614,
    -0.05263167937961666,
    0.05000004769810169,
    -0.047619070330142226,
    0.04545455629320467,
    -0.04347826605304026,
    0.04166666915034121,
    -0.04000000119214014,
    0.03846153903467518,
])
_SERIES_RADIUS = 0.2


class DomainError(ValueError):
    """Argument outside the domain of a numerical routine."""


def _lanczos(x: np.ndarray) -> np.ndarray:
    # ln Gamma(x) for x >= 0.5
    xm1 = x - 1.0
    acc = np.full_like(x, _LANCZOS_COEF[0])
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (xm1 + i)
    t = xm1 + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (xm1 + 0.5) * np.log(t) - t + np.log(acc)


def _lgamma1p_series(d: np.ndarray) -> np.ndarray:
    # ln Gamma(1 + d) for |d| <= 0.2; avoids the cancellation Lanczos suffers near the roots
    acc = np.zeros_like(d)
    for c in _LGAMMA1P_COEF[::-1]:
        acc = (acc + c) * d
    return acc


def log_gamma(x):
    """Natural log of the gamma function for positive real ``x`` (scalar or array).

    Lanczos approximation away from the roots at 1 and 2; a Taylor series of
    ``ln Gamma(1 + d)`` inside a radius of 0.2 around them, and the recurrence
    ``Gamma(x) = Gamma(x + 1) / x`` below 0.5.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    small = arr < 0.5
    y = np.where(small, arr + 1.0, arr)
    out = np.array(_lanczos(y), dtype=float)
    d1 = y - 1.0
    near1 = np.abs(d1) <= _SERIES_RADIUS
    if near1.any():
        out[near1] = _lgamma1p_series(d1[near1])
    d2 = y - 2.0
    near2 = np.abs(d2) <= _SERIES_RADIUS
    if near2.any():
        out[near2] = np.log1p(d2[near2]) + _lgamma1p_series(d2[near2])
    if small.any():
        out[small] -= np.log(arr[small])
    if out.ndim == 0:
        return float(out)
    return out


def log_pochhammer(x, r):
    """ln of the rising factorial ``(x)_r = Gamma(x + r) / Gamma(x)``.

    Short products are summed directly; longer ones use gamma differences.
    ``r`` may be an integer array; the result is exactly 0 where ``r == 0``.
    """
    xa = np.asarray(x, dtype=float)
    ra = np.asarray(r)
    if np.any(~(xa > 0)):
        raise DomainError(f"log_pochhammer requires x > 0, got {x!r}")
    if np.any(ra < 0):
        raise DomainError("log_pochhammer requires r >= 0")
    if xa.ndim == 0 and ra.ndim == 0:
        xf, ri = float(xa), int(ra)
        if ri <= 32:
            return math.fsum(math.log(xf + i) for i in range(ri))
        return log_gamma(xf + ri) - log_gamma(xf)
    xb, rb = np.broadcast_arrays(xa, ra)
    out = np.empty(xb.shape)
    direct = rb <= 32
    if direct.any():
        xs, rs = xb[direct], rb[direct]
        acc = np.zeros(xs.shape)
        for i in range(int(rs.max())):
            acc += np.where(i < rs, np.log(xs + i), 0.0)
        out[direct] = acc
    far = ~direct
    if far.any():
        out[far] = log_gamma(xb[far] + rb[far]) - log_gamma(xb[far])
    return out


def log_beta(a, b):
    """ln B(a, b)."""
    if np.any(~(np.asarray(a) > 0)) or np.any(~(np.asarray(b) > 0)):
        raise DomainError(f"log_beta requires positive arguments, got ({a!r}, {b!r})")
    return log_gamma(a) + log_gamma(b) - log_gamma(np.asarray(a) + np.asarray(b))


def log_factorials(n: int) -> np.ndarray:
    """Array of ``ln k!`` for ``k = 0..n``."""
    out = np.zeros(n + 1)
    if n >= 1:
        out[1:] = np.cumsum(np.log(np.arange(1, n + 1, dtype=float)))
    big = np.arange(n + 1) > 64
    if big.any():
        out[big] = log_gamma(np.arange(n + 1)[big] + 1.0)
    return out


@dataclass(frozen=True)
class CountVector:
    """Observed counts on a fixed finite support."""

    counts: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("counts must be a non-empty 1-d sequence")
        if not np.all(np.equal(np.mod(c, 1), 0)) or np.any(c < 0):
            raise ValueError("counts must be nonnegative integers")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "n", int(c.sum()))

    @property
    def m(self) -> int:
        return int(self.counts.size)

    @classmethod
    def from_observations(cls, obs: Sequence[int], m: int) -> "CountVector":
        """Tabulate integer observations in ``0..m-1``."""
        obs = np.asarray(obs, dtype=np.int64)
        if obs.size and (obs.min() < 0 or obs.max() >= m):
            raise ValueError(f"observations must lie in 0..{m - 1}")
        return cls(np.bincount(obs, minlength=m))


@dataclass(frozen=True)
class NuisancePrior:
    """Beta(a, b) prior on the contamination fraction, Dirichlet(alpha) on the contaminant."""

    a: float
    b: float
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float)).copy()
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"Beta shapes must be positive, got a={self.a}, b={self.b}")
        if alpha.ndim != 1 or np.any(~(alpha > 0)):
            raise ValueError("Dirichlet parameters must be positive")
        alpha.setflags(write=False)
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "alpha", alpha)

    @property
    def alpha0(self) -> float:
        return float(self.alpha.sum())

    @property
    def m(self) -> int:
        return int(self.alpha.size)

    @classmethod
    def symmetric(cls, m: int, a: float = 1.0, b: float = 1.0, alpha: float = 1.0) -> "NuisancePrior":
        return cls(a, b, np.full(m, float(alpha)))

    def with_beta(self, a: float | None = None, b: float | None = None) -> "NuisancePrior":
        return NuisancePrior(self.a if a is None else a, self.b if b is None else b, self.alpha)


@dataclass(frozen=True)
class ProbabilityVector:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("not a probability vector")
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)


@dataclass
class LogScaledVector:
    """Nonnegative coefficients stored as ``mantissas * exp(log_scale + log_index_scale)``.

    ``log_index_scale`` is an optional known per-index factor (zeros when
    absent); it lets rows whose entries span far more than the double range
    keep mantissas of order one.
    """

    mantissas: np.ndarray
    log_scale: float = 0.0
    log_index_scale: np.ndarray | None = None

    @property
    def r_max(self) -> int:
        return self.mantissas.size - 1

    def values(self) -> np.ndarray:
        return np.exp(self.log_values())

    def log_values(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            out = np.log(self.mantissas) + self.log_scale
        if self.log_index_scale is not None:
            out = out + self.log_index_scale
        return out


def renormalize(v: LogScaledVector) -> LogScaledVector:
    """Rescale so the largest mantissa is 1, folding the factor into ``log_scale``."""
    mx = float(np.max(v.mantissas)) if v.mantissas.size else 0.0
    if mx == 0.0 or mx == 1.0:
        return LogScaledVector(v.mantissas.copy(), v.log_scale, v.log_index_scale)
    return LogScaledVector(v.mantissas / mx, v.log_scale + math.log(mx), v.log_index_scale)


def logsumexp(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    mx = np.max(x) if x.size else -np.inf
    if not np.isfinite(mx):
        return float(mx)
    return float(mx + np.log(np.sum(np.exp(x - mx))))
