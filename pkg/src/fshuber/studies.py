"""Contaminated-data simulation and the replication harness for sensitivity tables."""

from __future__ import annotations

import csv
import hashlib
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .collapsed import CollapsedLikelihoodProblem, PlainLikelihoodProblem
from .core import CountVector, NuisancePrior
from .grid import grid_mean_and_interval, grid_posterior, grid_posteriors_multi
from .models import BinomialModel
from .sampler import MalaConfig, mala_run
from .score import FLAT

CSV_HEADER = ["theta_c", "eps0", "alpha", "b", "method", "bias", "length", "coverage", "reps_ok"]
METHODS = ("naive", "huber")
_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix64(*words: int) -> int:
    """Fold integers into one well-mixed 64-bit seed (order sensitive)."""
    h = 0
    for w in words:
        h = _splitmix64(h ^ (int(w) & _MASK64))
    return h


@dataclass(frozen=True)
class Scenario:
    M: int = 20
    n: int = 300
    theta0: float = 0.30
    theta_c: float = 0.75
    eps0: float = 0.20
    b_list: tuple = (1.0, 4.0, 9.0, 19.0, 99.0)
    alpha: float = 1.0
    reps: int = 50
    master_seed: int = 0
    fixed_count: bool = False
    engine: str = "grid"
    grid_size: int = 2001
    mala_warmup: int = 2000
    mala_keep: int = 5000

    def __post_init__(self):
        if not 0.0 <= self.eps0 <= 1.0:
            raise ValueError(f"eps0 must lie in [0, 1], got {self.eps0}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.engine not in ("grid", "mala"):
            raise ValueError(f"engine must be 'grid' or 'mala', got {self.engine!r}")
        if not (0 < self.theta0 < 1 and 0 <= self.theta_c <= 1):
            raise ValueError("theta0 must lie in (0, 1) and theta_c in [0, 1]")
        object.__setattr__(self, "b_list", tuple(float(b) for b in self.b_list))

    def data_hash(self) -> int:
        """64-bit digest of the data-generating settings only.

        Scenarios that differ only in prior or engine share datasets.
        """
        blob = struct.pack("<qqdddq", self.M, self.n, self.theta0, self.theta_c, self.eps0, int(self.fixed_count))
        return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "little")


def simulate_contaminated(scenario: Scenario, rep_index: int, return_mask: bool = False):
    """``n`` draws from ``(1 - eps0) Binomial(M, theta0) + eps0 Binomial(M, theta_c)``.

    With ``return_mask`` the boolean contamination indicators are returned too.
    """
    s = scenario
    rng = np.random.default_rng(mix64(s.master_seed, s.data_hash(), rep_index))
    if s.fixed_count:
        n_bad = min(s.n, math.ceil(s.eps0 * s.n - 1e-9))
        bad = np.zeros(s.n, dtype=bool)
        bad[:n_bad] = True
    else:
        bad = rng.random(s.n) < s.eps0
    clean = rng.binomial(s.M, s.theta0, s.n)
    dirty = rng.binomial(s.M, s.theta_c, s.n)
    obs = np.where(bad, dirty, clean).astype(np.int64)
    return (obs, bad) if return_mask else obs


@dataclass(frozen=True)
class ResultRow:
    theta_c: float
    eps0: float
    alpha: float
    b: float | None
    method: str
    bias: float
    length: float
    coverage: float
    reps_ok: int
    reps_failed: int = 0


@dataclass
class ReplicationResult:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def row(self, method: str, b: float | None = None, **match):
        for r in self.rows:
            if r.method == method and r.b == b and all(getattr(r, k) == v for k, v in match.items()):
                return r
        raise KeyError((method, b, match))

    def extend(self, other: "ReplicationResult"):
        self.rows.extend(other.rows)
        self.failures.extend(other.failures)


def _summaries_grid(s: Scenario, counts: CountVector, model):
    out = {}
    naive = grid_posterior(PlainLikelihoodProblem(counts, model), FLAT, s.grid_size)
    out[("naive", None)] = grid_mean_and_interval(naive)
    base = NuisancePrior.symmetric(model.m, a=1.0, b=s.b_list[0], alpha=s.alpha)
    prob = CollapsedLikelihoodProblem(counts, base, model)
    priors = [base.with_beta(b=b) for b in s.b_list]
    for b, gp in zip(s.b_list, grid_posteriors_multi(prob, FLAT, priors, s.grid_size)):
        out[("huber", b)] = grid_mean_and_interval(gp)
    return out


def _summaries_mala(s: Scenario, counts: CountVector, model, rep: int):
    out = {}
    cfg = dict(n_warmup=s.mala_warmup, n_keep=s.mala_keep)
    run = mala_run(PlainLikelihoodProblem(counts, model), FLAT,
                   MalaConfig(seed=mix64(s.master_seed, s.data_hash(), rep, 1), **cfg))
    out[("naive", None)] = (float(run.mean[0]), float(run.lo[0]), float(run.hi[0]))
    base = NuisancePrior.symmetric(model.m, a=1.0, b=s.b_list[0], alpha=s.alpha)
    prob = CollapsedLikelihoodProblem(counts, base, model)
    for i, b in enumerate(s.b_list):
        run = mala_run(prob.with_prior(base.with_beta(b=b)), FLAT,
                       MalaConfig(seed=mix64(s.master_seed, s.data_hash(), rep, 2 + i), **cfg))
        out[("huber", b)] = (float(run.mean[0]), float(run.lo[0]), float(run.hi[0]))
    return out


def run_single_replication(scenario: Scenario, rep: int) -> dict:
    """Posterior ``(mean, lo95, hi95)`` per ``(method, b)`` for one simulated dataset."""
    model = BinomialModel(scenario.M)
    counts = CountVector.from_observations(simulate_contaminated(scenario, rep), model.m)
    if scenario.engine == "grid":
        return _summaries_grid(scenario, counts, model)
    return _summaries_mala(scenario, counts, model, rep)


def _task(args):
    scenario, rep = args
    try:
        return ("ok", run_single_replication(scenario, rep))
    except Exception as exc:  # recorded per rep, never dropped silently
        return ("fail", f"{type(exc).__name__}: {exc}")


def worker_count(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("HUBER_THREADS", "")
        threads = int(env) if env.strip() else (os.cpu_count() or 1)
    return max(1, int(threads))


def _aggregate(s: Scenario, outcomes) -> ReplicationResult:
    res = ReplicationResult()
    good = [o for _, o in outcomes if o[0] == "ok"]
    for rep, o in outcomes:
        if o[0] != "ok":
            res.failures.append((s, rep, o[1]))
    n_fail = len(outcomes) - len(good)
    keys = [("naive", None)] + [("huber", b) for b in s.b_list]
    for method, b in keys:
        stats = np.array([g[1][(method, b)] for g in good]) if good else np.zeros((0, 3))
        if stats.shape[0]:
            mean, lo, hi = stats.T
            bias = float(np.mean(mean - s.theta0))
            length = float(np.mean(hi - lo))
            cover = float(np.mean((lo <= s.theta0) & (s.theta0 <= hi)))
        else:
            bias = length = cover = float("nan")
        res.rows.append(ResultRow(s.theta_c, s.eps0, s.alpha, b, method, bias, length, cover,
                                  int(stats.shape[0]), n_fail))
    return res


def run_study(scenarios, threads: int | None = None) -> ReplicationResult:
    """Run every replication of every scenario and reduce in a fixed order."""
    scenarios = list(scenarios)
    tasks = [(s, r) for s in scenarios for r in range(s.reps)]
    workers = min(worker_count(threads), len(tasks)) if tasks else 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        outcomes = [_task(t) for t in tasks]
    result = ReplicationResult()
    i = 0
    for s in scenarios:
        block = [(r, outcomes[i + r]) for r in range(s.reps)]
        i += s.reps
        result.extend(_aggregate(s, block))
    return result


def run_replication_study(scenario: Scenario, threads: int | None = None) -> ReplicationResult:
    return run_study([scenario], threads)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".6f")


def emit_tables(results: ReplicationResult, path, methods=METHODS, plot_path=None) -> int:
    """Write the result table as CSV (and optionally a figure); returns the row count."""
    methods = tuple(methods)
    if not methods:
        raise ValueError("method filter is empty")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    rows = [r for r in results.rows if r.method in methods]
    if not rows:
        raise ValueError("no result rows to write")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in rows:
                w.writerow([_fmt(r.theta_c), _fmt(r.eps0), _fmt(r.alpha), _fmt(r.b), r.method,
                            _fmt(r.bias), _fmt(r.length), _fmt(r.coverage), str(r.reps_ok)])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    if plot_path is not None:
        plot_tables(rows, plot_path)
    return len(rows)


def plot_tables(rows, path) -> None:
    """Bias, length and coverage against b, one column per scenario; naive as dashed lines."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    scen = sorted({(r.theta_c, r.eps0, r.alpha) for r in rows})
    fig, axes = plt.subplots(3, len(scen), figsize=(3 * len(scen), 7), squeeze=False)
    for c, key in enumerate(scen):
        sub = [r for r in rows if (r.theta_c, r.eps0, r.alpha) == key]
        hub = sorted((r for r in sub if r.method == "huber"), key=lambda r: r.b)
        naive = [r for r in sub if r.method == "naive"]
        for k, attr in enumerate(("bias", "length", "coverage")):
            ax = axes[k, c]
            if hub:
                ax.plot([r.b for r in hub], [getattr(r, attr) for r in hub], "o-")
                ax.set_xscale("log")
            for r in naive:
                ax.axhline(getattr(r, attr), linestyle="--", color="grey")
            if k == 0:
                ax.set_title(f"theta_c={key[0]:g}, eps0={key[1]:g}", fontsize=8)
            if c == 0:
                ax.set_ylabel(attr)
            if k == 2:
                ax.set_xlabel("b")
    fig.tight_layout()
    try:
        fig.savefig(path)
    finally:
        plt.close(fig)
