"""Metropolis-adjusted Langevin sampling on the logit scale."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .score import log_posterior_and_score


class NonFiniteScoreError(FloatingPointError):
    """Log posterior or gradient became non-finite during sampling."""

    def __init__(self, message, z=None, step=None, iteration=None):
        super().__init__(f"{message} (iteration={iteration}, step={step}, z={z})")
        self.z = None if z is None else np.array(z)
        self.step = step
        self.iteration = iteration


class DegenerateChainError(ValueError):
    """Chain has zero variance."""


@dataclass(frozen=True)
class MalaConfig:
    step_size: float = 0.5
    n_warmup: int = 5000
    n_keep: int = 20000
    target_accept: float = 0.574
    seed: int = 0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.n_keep < 1 or self.n_warmup < 0:
            raise ValueError("n_keep must be >= 1 and n_warmup >= 0")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class PosteriorRun:
    draws: np.ndarray
    accept_rate: float
    step_size: float
    log_posterior: np.ndarray
    accepted: np.ndarray
    ess: np.ndarray = field(default=None)
    mean: np.ndarray = field(default=None)
    lo: np.ndarray = field(default=None)
    hi: np.ndarray = field(default=None)

    def write_trace(self, path) -> None:
        """CSV ``iteration,theta_1..theta_d,log_posterior,accepted`` of the kept draws."""
        d = self.draws.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", *[f"theta_{i + 1}" for i in range(d)], "log_posterior", "accepted"])
            for i in range(self.draws.shape[0]):
                w.writerow([i, *[repr(float(x)) for x in self.draws[i]],
                            repr(float(self.log_posterior[i])), int(self.accepted[i])])


def _initial_z(problem, model):
    theta0 = model.naive_fit(problem.counts.counts) if problem.counts.n else None
    if theta0 is None:
        theta0 = np.full(model.dim, 0.5)
    return model.inverse_transform(theta0)


def mala_run(problem, prior, config: MalaConfig, score_scale: float = 1.0, z0=None) -> PosteriorRun:
    """Run one MALA chain and return its post-warmup draws in model coordinates.

    ``score_scale = 0`` drops the drift, leaving random-walk Metropolis (a test hook).
    """
    model = problem.model
    rng = np.random.default_rng(config.seed)
    z = np.asarray(_initial_z(problem, model) if z0 is None else z0, dtype=float)
    lp, g = log_posterior_and_score(problem, prior, z, score_scale)
    if not (np.isfinite(lp) and np.all(np.isfinite(g))):
        raise NonFiniteScoreError("non-finite log posterior at the initial point", z, config.step_size, 0)
    d = z.size
    log_h = math.log(config.step_size)
    total = config.n_warmup + config.n_keep
    draws = np.empty((config.n_keep, d))
    lps = np.empty(config.n_keep)
    acc = np.zeros(config.n_keep, dtype=bool)
    for it in range(1, total + 1):
        h = math.exp(log_h)
        half = 0.5 * h * h
        mean_fwd = z + half * g
        zp = mean_fwd + h * rng.standard_normal(d)
        lpp, gp = log_posterior_and_score(problem, prior, zp, score_scale)
        if not np.isfinite(lpp) or not np.all(np.isfinite(gp)):
            if np.isnan(lpp) or np.any(np.isnan(gp)) or lpp == np.inf:
                raise NonFiniteScoreError("non-finite log posterior or score", zp, h, it)
            log_alpha = -np.inf
        else:
            mean_rev = zp + half * gp
            log_q_fwd = -np.sum((zp - mean_fwd) ** 2) / (2 * h * h)
            log_q_rev = -np.sum((z - mean_rev) ** 2) / (2 * h * h)
            log_alpha = lpp - lp + log_q_rev - log_q_fwd
        u = rng.random()
        accepted = math.log(u) < log_alpha if u > 0 else True
        if accepted:
            z, lp, g = zp, lpp, gp
        if it <= config.n_warmup:
            log_h += it ** -0.6 * (float(accepted) - config.target_accept)
        else:
            k = it - config.n_warmup - 1
            draws[k] = z
            lps[k] = lp
            acc[k] = accepted
    thetas = np.vstack([model.transform(row)[0] for row in draws])
    run = PosteriorRun(thetas, float(acc.mean()), math.exp(log_h), lps, acc)
    summarize(run)
    return run


def effective_sample_size(chain) -> float:
    """ESS by Geyer's initial positive sequence estimator."""
    x = np.asarray(chain, dtype=float)
    n = x.size
    if n < 100:
        raise ValueError("effective_sample_size needs at least 100 draws")
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var <= 0:
        raise DegenerateChainError("chain has zero variance")
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    rho = acov / acov[0]
    # pair sums Gamma_k = rho_{2k} + rho_{2k+1}, truncated at the first non-positive one
    s = 0.0
    k = 0
    while 2 * k + 1 < n:
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0:
            break
        s += pair
        k += 1
    tau = 2.0 * s - 1.0
    return float(min(max(n / tau, 1e-12), n)) if tau > 0 else float(n)


def summarize(run: PosteriorRun, level: float = 0.95):
    """Per-dimension mean, equal-tailed interval and ESS; stored on ``run`` and returned."""
    q = (1.0 - level) / 2.0
    run.mean = run.draws.mean(axis=0)
    run.lo = np.quantile(run.draws, q, axis=0)
    run.hi = np.quantile(run.draws, 1.0 - q, axis=0)
    ess = []
    for col in run.draws.T:
        try:
            ess.append(effective_sample_size(col))
        except (ValueError, DegenerateChainError):
            ess.append(float("nan"))
    run.ess = np.array(ess)
    return run.mean, run.lo, run.hi
