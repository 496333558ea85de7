"""Slow independent references for the collapsed likelihood.

Two routes, neither sharing code with the convolution path:

* :func:`enumerate_log_marginal` sums the allocation formula term by term
  over every ``(k_1, ..., k_m)``, using only ``math.lgamma``.
* :func:`quadrature_log_marginal_m2` integrates the conditional likelihood
  against the Beta x Dirichlet prior densities for two-atom problems with a
  self-contained adaptive Gauss-Kronrod scheme.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .quadrature import QuadratureError, adaptive_gk15

__all__ = [
    "MAX_ALLOCATIONS",
    "OracleGuardError",
    "agreement_suite",
    "random_instance",
    "QuadratureError",
    "enumerate_coefficients",
    "enumerate_log_marginal",
    "enumerate_log_marginal_probs",
    "integrate_beta_weighted",
    "iter_allocations",
    "quadrature_log_marginal_m2",
    "quadrature_log_marginal_probs",
]

MAX_ALLOCATIONS = 10**6


class OracleGuardError(ValueError):
    """Problem too large for brute-force evaluation."""


def _lpoch(x: float, r: int) -> float:
    return math.lgamma(x + r) - math.lgamma(x)


def _lbeta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _lbinom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def iter_allocations(counts):
    """Yield every allocation ``(k_1..k_m)`` with ``0 <= k_j <= N_j`` in odometer order."""
    return itertools.product(*(range(int(N) + 1) for N in counts))


def enumerate_log_marginal_probs(counts, probs, a: float, b: float, alpha) -> float:
    """Allocation-sum log marginal likelihood for explicit atom probabilities."""
    N = [int(x) for x in counts]
    alpha = [float(x) for x in alpha]
    size = math.prod(x + 1 for x in N)
    if size > MAX_ALLOCATIONS:
        raise OracleGuardError(f"{size} allocations exceeds the guard of {MAX_ALLOCATIONS}")
    n = sum(N)
    alpha0 = sum(alpha)
    with np.errstate(divide="ignore"):
        logp = [math.log(p) if p > 0 else -math.inf for p in probs]
    # per-atom tables: ln C(N,k) + ln (alpha)_k + (N-k) ln p
    tables = []
    for Nj, aj, lp in zip(N, alpha, logp):
        row = []
        for k in range(Nj + 1):
            clean = Nj - k
            term = _lbinom(Nj, k) + _lpoch(aj, k)
            term += clean * lp if clean else 0.0
            row.append(term)
        tables.append(row)
    lb0 = _lbeta(a, b)
    run_max = -math.inf
    run_sum = 0.0
    for ks in iter_allocations(N):
        K = sum(ks)
        t = sum(tables[j][k] for j, k in enumerate(ks))
        if t == -math.inf:
            continue
        t += _lbeta(a + K, b + n - K) - lb0 - _lpoch(alpha0, K)
        if t > run_max:
            run_sum = run_sum * math.exp(run_max - t) + 1.0
            run_max = t
        else:
            run_sum += math.exp(t - run_max)
    if run_max == -math.inf:
        return -math.inf
    return run_max + math.log(run_sum)


def enumerate_coefficients(counts, probs, alpha) -> np.ndarray:
    """``C(R)``, the coefficient of ``u^R`` in ``prod_j sum_r (alpha_j)_{N_j-r} p_j^r u^r / ((N_j-r)! r!)``.

    Summed term by term over every clean allocation ``(r_1..r_m)``.
    """
    N = [int(x) for x in counts]
    size = math.prod(x + 1 for x in N)
    if size > MAX_ALLOCATIONS:
        raise OracleGuardError(f"{size} allocations exceeds the guard of {MAX_ALLOCATIONS}")
    n = sum(N)
    terms = [[] for _ in range(n + 1)]
    for rs in iter_allocations(N):
        val = 1.0
        for Nj, aj, pj, r in zip(N, alpha, probs, rs):
            k = Nj - r
            val *= math.exp(_lpoch(float(aj), k) - math.lgamma(k + 1) - math.lgamma(r + 1)) * float(pj) ** r
        terms[sum(rs)].append(val)
    return np.array([math.fsum(t) for t in terms])


def enumerate_log_marginal(problem, theta) -> float:
    p = problem.model.atom_probs(theta)
    pr = problem.prior
    return enumerate_log_marginal_probs(problem.counts.counts, p, pr.a, pr.b, pr.alpha)


def integrate_beta_weighted(g, s1: float, s2: float, rtol: float = 1e-11) -> float:
    """``int_0^1 g(x) Beta(x; s1, s2) dx`` with integrable endpoint singularities removed.

    Each half of [0, 1] is mapped by ``x = t^(1/s)`` (mirrored on the right) when
    the shape ``s`` at that endpoint is below one, which cancels the singular
    power exactly.
    """
    lb = _lbeta(s1, s2)

    def left(t):
        if s1 < 1:
            x = t ** (1.0 / s1)
            return g(x) * np.exp((s2 - 1) * np.log1p(-x) - lb) / s1
        return g(t) * np.exp((s1 - 1) * np.log(t) + (s2 - 1) * np.log1p(-t) - lb)

    def right(t):
        if s2 < 1:
            y = t ** (1.0 / s2)
            x = 1.0 - y
            return g(x) * np.exp((s1 - 1) * np.log1p(-y) - lb) / s2
        x = 1.0 - t
        return g(x) * np.exp((s1 - 1) * np.log1p(-t) + (s2 - 1) * np.log(t) - lb)

    hl = 0.5 ** s1 if s1 < 1 else 0.5
    hr = 0.5 ** s2 if s2 < 1 else 0.5
    return adaptive_gk15(left, 0.0, hl, rtol) + adaptive_gk15(right, 0.0, hr, rtol)


def quadrature_log_marginal_probs(counts, probs, a: float, b: float, alpha, rtol: float = 1e-10) -> float:
    """Nested quadrature of the two-atom marginal likelihood over (epsilon, q_1)."""
    if len(counts) != 2:
        raise ValueError("quadrature oracle supports two atoms only")
    N1, N2 = (int(x) for x in counts)
    p1, p2 = (float(x) for x in probs)
    a1, a2 = (float(x) for x in alpha)

    def outer(eps):
        out = np.empty(eps.shape)
        for i, e in enumerate(eps):
            def inner(q1, e=e):
                return ((1 - e) * p1 + e * q1) ** N1 * ((1 - e) * p2 + e * (1 - q1)) ** N2
            out[i] = integrate_beta_weighted(inner, a1, a2, rtol * 0.1)
        return out

    val = integrate_beta_weighted(outer, a, b, rtol)
    return math.log(val) if val > 0 else -math.inf


def quadrature_log_marginal_m2(problem, theta, rtol: float = 1e-10) -> float:
    if problem.counts.m != 2:
        raise ValueError("quadrature oracle supports m == 2 only")
    p = problem.model.atom_probs(theta)
    pr = problem.prior
    return quadrature_log_marginal_probs(problem.counts.counts, p, pr.a, pr.b, pr.alpha, rtol)


def random_instance(rng, n_max: int = 12, m_max: int = 5, n_min: int = 1):
    """Random ``(counts, probs, a, b, alpha)`` with ``n_min <= n <= n_max`` and ``2 <= m <= m_max``."""
    m = int(rng.integers(2, m_max + 1))
    n = int(rng.integers(n_min, n_max + 1))
    counts = rng.multinomial(n, np.full(m, 1.0 / m)) if n else np.zeros(m, dtype=np.int64)
    probs = rng.dirichlet(np.ones(m))
    a, b = rng.uniform(0.3, 5.0, 2)
    alpha = rng.uniform(0.3, 3.0, m)
    return counts, probs, float(a), float(b), alpha


def agreement_suite(count: int = 50, seed: int = 0, n_max: int = 12, m_max: int = 5, n_min: int = 1,
                    tol_dp: float = 1e-10, tol_quad: float = 1e-6, perturb: bool = False):
    """Compare the convolution likelihood with enumeration (and quadrature when m == 2).

    Returns a list of dicts, one per instance. ``perturb`` adds 1e-6 to the
    dominant log allocation weight of the convolution problem, which the
    suite must report as a failure.
    """
    from .collapsed import CollapsedLikelihoodProblem
    from .core import CountVector, NuisancePrior
    from .models import StructuralModel

    class _Fixed(StructuralModel):
        name = "fixed"
        dim = 1

        def __init__(self, p):
            self._p = np.asarray(p, dtype=float)
            self.m = self._p.size

        def atom_probs(self, theta):
            return self._p

    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        counts, probs, a, b, alpha = random_instance(rng, n_max, m_max, n_min)
        row = dict(index=i, m=len(counts), n=int(np.sum(counts)), dp=np.nan, enum=np.nan, quad=np.nan,
                   ok=True, note="")
        if row["n"] <= 0:
            row["note"] = "skipped: empty sample"
            rows.append(row)
            continue
        try:
            prob = CollapsedLikelihoodProblem(CountVector(counts), NuisancePrior(a, b, alpha), _Fixed(probs))
            if perturb:
                lc = prob.forward_convolve(0.5).log_values()
                lw = prob.log_weights.copy()
                lw[int(np.argmax(lc + lw))] += 1e-6
                prob.log_weights = lw
            row["dp"] = prob.loglik(0.5)
            row["enum"] = enumerate_log_marginal_probs(counts, probs, a, b, alpha)
            row["ok"] = abs(row["dp"] - row["enum"]) <= tol_dp
            if len(counts) == 2:
                row["quad"] = quadrature_log_marginal_probs(counts, probs, a, b, alpha)
                row["ok"] = row["ok"] and abs(row["quad"] - row["enum"]) <= tol_quad
        except (OracleGuardError, QuadratureError) as exc:
            row["ok"] = False
            row["note"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows
