"""Compare the compiled and numpy convolution kernels.

Usage: python benchmarks/bench_kernels.py [--sizes 300,1000,2000,4000] [--trials 5]

Reports the median wall time of one likelihood evaluation and one
likelihood-plus-score evaluation for each backend on contaminated binomial
data (M = 20), plus the scaling ratio T(2n)/T(n).
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from fshuber import _dp_py
from fshuber.collapsed import CollapsedLikelihoodProblem
from fshuber.core import CountVector, NuisancePrior
from fshuber.models import BinomialModel

try:
    from fshuber import _dp
except ImportError:  # extension not built
    _dp = None


def make_problem(n: int, seed: int = 0) -> CollapsedLikelihoodProblem:
    rng = np.random.default_rng(seed)
    x = np.where(rng.random(n) < 0.2, rng.binomial(20, 0.75, n), rng.binomial(20, 0.30, n))
    model = BinomialModel(20)
    return CollapsedLikelihoodProblem(CountVector.from_observations(x, model.m),
                                      NuisancePrior.symmetric(model.m), model)


def _median_time(fn, trials: int) -> float:
    fn()
    times = []
    for _ in range(trials):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times)


def bench(backend, prob, theta, trials):
    logp = prob._active_logp(theta)
    dlogp = np.ascontiguousarray(prob.model.log_atom_prob_grads(theta)[:, prob.active])
    pdot = np.ascontiguousarray(prob.model.atom_prob_grads(theta)[:, prob.active])
    t_like = _median_time(lambda: backend.dp_forward(prob._A, prob._offsets, logp, prob._lf), trials)
    t_score = _median_time(
        lambda: backend.dp_forward_grad(prob._A, prob._offsets, logp, prob._lf, dlogp, pdot), trials)
    return t_like, t_score


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="300,1000,2000,4000")
    ap.add_argument("--trials", type=int, default=5)
    args = ap.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]
    backends = [("python", _dp_py)] + ([("cython", _dp)] if _dp is not None else [])
    theta = np.array([0.3])
    print(f"{'n':>6} {'backend':>8} {'loglik [ms]':>12} {'score [ms]':>11} {'speedup':>8}")
    results = {}
    for n in sizes:
        prob = make_problem(n)
        for name, mod in backends:
            results[(n, name)] = bench(mod, prob, theta, args.trials)
        base = results[(n, "python")][0]
        for name, _ in backends:
            tl, ts = results[(n, name)]
            print(f"{n:>6} {name:>8} {1e3 * tl:>12.3f} {1e3 * ts:>11.3f} {base / tl:>8.1f}")
    for name, _ in backends:
        for n in sizes:
            if 2 * n in sizes:
                r = results[(2 * n, name)][0] / results[(n, name)][0]
                print(f"{name}: T({2 * n})/T({n}) = {r:.2f}")


if __name__ == "__main__":
    main()
