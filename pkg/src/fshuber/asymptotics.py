"""Population-level criteria and numerical checks of the large-sample theory."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .collapsed import CollapsedLikelihoodProblem, log_sensitivity_likelihood
from .core import CountVector, DomainError, NuisancePrior, log_gamma
from .quadrature import adaptive_gk15


@dataclass(frozen=True)
class PopulationLaw:
    p0: np.ndarray

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float)
        if p0.ndim != 1 or np.any(p0 <= 0) or abs(p0.sum() - 1) > 1e-12:
            raise ValueError("population law needs strictly positive probabilities summing to one")
        object.__setattr__(self, "p0", p0)


def epsilon_min(p0, p_theta) -> float:
    """Smallest contamination fraction with ``p0 >= (1 - eps) * p_theta`` on every atom."""
    p0 = np.asarray(p0, dtype=float)
    pt = np.asarray(p_theta, dtype=float)
    if p0.shape != pt.shape:
        raise ValueError("probability vectors differ in length")
    pos = pt > 0
    if not pos.any():
        return 0.0
    val = float(np.max(1.0 - p0[pos] / pt[pos]))
    return min(max(val, 0.0), 1.0)


def epsilon_min_batch(p0, p_rows) -> np.ndarray:
    """:func:`epsilon_min` for each row of a ``(G, m)`` matrix."""
    p0 = np.asarray(p0, dtype=float)
    P = np.asarray(p_rows, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(P > 0, 1.0 - p0[None, :] / P, -np.inf)
    return np.clip(ratio.max(axis=1), 0.0, 1.0)


def rho_zero(p0, p_theta) -> float:
    return 1.0 - epsilon_min(p0, p_theta)


def a_zero_b(rho0: float, b: float, m: int) -> float:
    """``int_0^rho0 rho^(b-1) (1 - rho)^-(m-1) d rho``.

    The substitution ``rho = rho0 * u^(1/b)`` turns it into
    ``rho0^b / b * int_0^1 (1 - rho0 u^(1/b))^-(m-1) du``, which is smooth.
    """
    if not (rho0 < 1):
        raise DomainError("a_zero_b needs rho0 < 1")
    if rho0 < 0 or b <= 0 or m < 1:
        raise DomainError("a_zero_b needs rho0 >= 0, b > 0, m >= 1")
    if rho0 == 0:
        return 0.0

    def f(u):
        return (1.0 - rho0 * u ** (1.0 / b)) ** (-(m - 1))

    return rho0**b / b * adaptive_gk15(f, 0.0, 1.0, rtol=1e-12)


def tv_distance(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("probability vectors differ in length")
    return 0.5 * float(np.abs(u - v).sum())


def round_counts(n: int, p0) -> np.ndarray:
    """Largest-remainder rounding of ``n * p0`` to integers summing to ``n``."""
    raw = n * np.asarray(p0, dtype=float)
    base = np.floor(raw).astype(np.int64)
    short = n - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def solve_theta_for_rho0(model, p0, target: float, grid=None) -> float:
    """Grid point whose ``rho0(theta)`` is closest to ``target`` (first one on ties)."""
    grid = np.linspace(1e-3, 1 - 1e-3, 9999) if grid is None else np.asarray(grid)
    P = np.exp(model.log_atom_probs_batch(grid))
    rho = 1.0 - epsilon_min_batch(p0, P)
    return float(grid[int(np.argmin(np.abs(rho - target)))])


def _sensitivity_problem(model, p0, n: int, b: float) -> CollapsedLikelihoodProblem:
    counts = CountVector(round_counts(n, p0))
    return CollapsedLikelihoodProblem(counts, NuisancePrior.symmetric(model.m, a=1.0, b=b), model)


def check_theorem1_ratio(model, theta, p0, b: float, n_grid) -> list[float]:
    """``n^(m-b-1) L_b(theta) / (Gamma(m) A_{0,b}(theta))`` for each ``n`` in ``n_grid``.

    ``L_b`` is the Beta(1, b) / Dirichlet(1) sensitivity-family likelihood
    evaluated at deterministically rounded counts.
    """
    law = PopulationLaw(p0)
    m = model.m
    pt = model.atom_probs(theta)
    rho0 = rho_zero(law.p0, pt)
    log_target = log_gamma(float(m)) + math.log(a_zero_b(rho0, b, m))
    out = []
    for n in n_grid:
        prob = _sensitivity_problem(model, law.p0, int(n), b)
        ll = log_sensitivity_likelihood(prob, theta)
        out.append(math.exp((m - b - 1) * math.log(n) + ll - log_target))
    return out


def check_corollary_ratio(model, theta, theta0, b: float, n_grid) -> list[float]:
    """``L_b(theta) / L_b(theta0)`` with counts rounded from ``p(theta0)``."""
    p0 = model.atom_probs(theta0)
    out = []
    for n in n_grid:
        prob = _sensitivity_problem(model, p0, int(n), b)
        out.append(math.exp(prob.log_marginal_likelihood(theta) - prob.log_marginal_likelihood(theta0)))
    return out


@dataclass(frozen=True)
class StabilityCheck:
    theta_star: float
    eps_min_theta0: float
    tv: float
    bound_ok: bool


def check_theorem2_stability(model, theta0: float, eps0: float, q, theta_grid=None) -> StabilityCheck:
    """Minimize ``epsilon_min`` over a grid for the law ``(1 - eps0) p(theta0) + eps0 q``.

    ``bound_ok`` requires ``epsilon_min(theta0) <= eps0``, the total variation
    bound ``2 eps0`` and ``|theta* - theta0| <= 2 eps0``.
    """
    grid = np.arange(1, 1000) / 1000.0 if theta_grid is None else np.asarray(theta_grid)
    if np.max(np.diff(grid)) > 1e-3 + 1e-12:
        raise ValueError("theta grid step must be at most 1e-3")
    p_theta0 = model.atom_probs(theta0)
    p0 = (1 - eps0) * p_theta0 + eps0 * np.asarray(q, dtype=float)
    P = np.exp(model.log_atom_probs_batch(grid))
    eps = epsilon_min_batch(p0, P)
    theta_star = float(grid[int(np.argmin(eps))])
    e0 = epsilon_min(p0, p_theta0)
    tv = tv_distance(model.atom_probs(theta_star), p_theta0)
    tol = 1e-12
    ok = e0 <= eps0 + tol and tv <= 2 * eps0 + tol and abs(theta_star - theta0) <= 2 * eps0 + tol
    return StabilityCheck(theta_star, e0, tv, bool(ok))
