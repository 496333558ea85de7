"""The ten acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line (see ``acceptance`` in conftest) and then
asserts the same condition, so the summary and the test outcome agree.
"""

import time

import numpy as np
import pytest

from conftest import central_difference
from fshuber.asymptotics import check_theorem1_ratio, check_theorem2_stability, round_counts, solve_theta_for_rho0
from fshuber.cli import main
from fshuber.collapsed import CollapsedLikelihoodProblem, PlainLikelihoodProblem
from fshuber.core import CountVector, NuisancePrior
from fshuber.grid import grid_mean_and_interval, grid_posterior, grid_posteriors_multi
from fshuber.models import BinomialModel, TwoComponentBinomialModel
from fshuber.oracle import agreement_suite
from fshuber.sampler import MalaConfig, mala_run
from fshuber.score import FLAT
from fshuber.studies import Scenario, run_study, simulate_contaminated

B_LIST = (1.0, 4.0, 9.0, 19.0, 99.0)
MASTER_SEED = 0

pytestmark = pytest.mark.acceptance


def test_criterion_01_oracle_equivalence(acceptance):
    t0 = time.perf_counter()
    rows = agreement_suite(count=50, seed=MASTER_SEED, n_max=12, m_max=5, tol_dp=1e-10, tol_quad=1e-6)
    elapsed = time.perf_counter() - t0
    dp = max(abs(r["dp"] - r["enum"]) for r in rows)
    quad = [abs(r["quad"] - r["enum"]) for r in rows if r["m"] == 2]
    ok = all(r["ok"] for r in rows) and dp <= 1e-10 and all(q <= 1e-6 for q in quad) and elapsed < 30
    acceptance(1, ok, f"max|dp-enum|={dp:.1e}, max|quad-enum|={max(quad):.1e} on {len(quad)} m=2 cases, "
                      f"{elapsed:.1f}s")
    assert ok


def _score_instance(rng, model):
    n = int(rng.integers(5, 60))
    counts = CountVector(rng.multinomial(n, rng.dirichlet(np.ones(model.m))))
    a, b = rng.uniform(0.3, 5.0, 2)
    prior = NuisancePrior(a, b, rng.uniform(0.3, 3.0, model.m))
    return CollapsedLikelihoodProblem(counts, prior, model)


def test_criterion_02_score_correctness(acceptance):
    rng = np.random.default_rng(MASTER_SEED)
    t0 = time.perf_counter()
    worst = {1: 0.0, 2: 0.0}
    for d, make in ((1, BinomialModel), (2, TwoComponentBinomialModel)):
        for _ in range(20):
            prob = _score_instance(rng, make(int(rng.integers(1, 11))))
            theta = rng.uniform(0.05, 0.95, d)
            _, g = prob.loglik_and_score(theta)
            fd = central_difference(prob.loglik, theta, h=1e-6)
            worst[d] = max(worst[d], float(np.max(np.abs(g - fd) / np.abs(fd))))
    elapsed = time.perf_counter() - t0
    ok = worst[1] <= 1e-5 and worst[2] <= 1e-5 and elapsed < 10
    acceptance(2, ok, f"max rel err d=1 {worst[1]:.1e}, d=2 {worst[2]:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_03_table_d1_band(acceptance):
    t0 = time.perf_counter()
    model = BinomialModel(20)
    scen = Scenario()
    naive, huber = [], []
    for rep in range(10):
        counts = CountVector.from_observations(simulate_contaminated(scen, rep), model.m)
        naive.append(grid_mean_and_interval(grid_posterior(PlainLikelihoodProblem(counts, model), FLAT))[0])
        base = NuisancePrior.symmetric(model.m, b=B_LIST[0])
        prob = CollapsedLikelihoodProblem(counts, base, model)
        gps = grid_posteriors_multi(prob, FLAT, [base.with_beta(b=b) for b in B_LIST])
        huber.append([grid_mean_and_interval(gp)[0] for gp in gps])
    elapsed = time.perf_counter() - t0
    naive, huber = np.array(naive), np.array(huber)
    avg_naive, avg_huber = naive.mean(), huber.mean(axis=0)
    closer = (np.abs(huber - 0.30) < np.abs(naive - 0.30)[:, None]).sum(axis=0)
    ok = (0.39 <= avg_naive <= 0.43 and np.all((0.29 <= avg_huber) & (avg_huber <= 0.325))
          and np.all(closer >= 9) and elapsed < 600)
    acceptance(3, ok, f"naive mean {avg_naive:.4f}, huber means by b "
                      f"{np.array2string(avg_huber, precision=4)}, closer {closer.min()}/10, {elapsed:.0f}s")
    assert ok


@pytest.fixture(scope="module")
def table_c2():
    scen = [Scenario(theta_c=0.75, eps0=e, b_list=B_LIST, reps=50, master_seed=MASTER_SEED) for e in (0.10, 0.20, 0.30)]
    scen.append(Scenario(theta_c=0.45, eps0=0.30, b_list=B_LIST, reps=50, master_seed=MASTER_SEED))
    t0 = time.perf_counter()
    res = run_study(scen)
    return res, time.perf_counter() - t0


def test_criterion_04_table_c2_trends(acceptance, table_c2):
    res, elapsed = table_c2
    paper_naive_bias = {0.10: 0.045, 0.20: 0.091, 0.30: 0.137}
    checks, parts = [], []
    for e, ref in paper_naive_bias.items():
        nv = res.row("naive", None, theta_c=0.75, eps0=e)
        hub = [res.row("huber", b, theta_c=0.75, eps0=e) for b in B_LIST]
        checks += [nv.coverage <= 0.05, abs(nv.bias - ref) <= 0.015, all(abs(h.bias) <= 0.015 for h in hub)]
        if e <= 0.20:
            checks.append(all(h.coverage >= 0.90 for h in hub))
        parts.append(f"eps0={e:.2f}: naive bias {nv.bias:+.3f} cov {nv.coverage:.2f}, huber bias "
                     f"[{min(h.bias for h in hub):+.3f},{max(h.bias for h in hub):+.3f}] cov "
                     f"[{min(h.coverage for h in hub):.2f},{max(h.coverage for h in hub):.2f}]")
    c1 = res.row("huber", 1.0, theta_c=0.45, eps0=0.30).coverage
    c99 = res.row("huber", 99.0, theta_c=0.45, eps0=0.30).coverage
    checks += [c99 <= c1, elapsed < 1800, not res.failures]
    parts.append(f"theta_c=0.45 eps0=0.30 cov b=1 {c1:.2f} b=99 {c99:.2f}; {elapsed:.0f}s")
    ok = all(checks)
    acceptance(4, ok, "; ".join(parts))
    assert ok


PAPER_C1_LENGTH = {
    0.5: (0.067, 0.064, 0.061, 0.059, 0.054),
    1.0: (0.059, 0.057, 0.056, 0.054, 0.051),
    2.0: (0.052, 0.051, 0.050, 0.049, 0.046),
}


@pytest.fixture(scope="module")
def table_c1():
    scen = [Scenario(theta_c=0.75, eps0=0.20, alpha=a, b_list=B_LIST, reps=50, master_seed=MASTER_SEED)
            for a in PAPER_C1_LENGTH]
    t0 = time.perf_counter()
    res = run_study(scen)
    return res, time.perf_counter() - t0


def test_criterion_05_table_c1_trends(acceptance, table_c1):
    res, elapsed = table_c1
    length = {a: np.array([res.row("huber", b, alpha=a).length for b in B_LIST]) for a in PAPER_C1_LENGTH}
    cover = np.array([[res.row("huber", b, alpha=a).coverage for b in B_LIST] for a in PAPER_C1_LENGTH])
    alphas = sorted(PAPER_C1_LENGTH)
    decreasing = all(np.all(length[x] > length[y]) for x, y in zip(alphas, alphas[1:]))
    dev = max(float(np.max(np.abs(length[a] - np.array(PAPER_C1_LENGTH[a])))) for a in alphas)
    ok = decreasing and dev <= 0.015 and bool(np.all(cover >= 0.95)) and elapsed < 2700
    table = ", ".join(f"alpha={a:g}: {np.array2string(length[a], precision=4)}" for a in alphas)
    acceptance(5, ok, f"lengths {table}; decreasing in alpha {decreasing}; max |len-paper| {dev:.3f}; "
                      f"min coverage {cover.min():.2f}; {elapsed:.0f}s")
    assert ok


def test_criterion_06_theorem1(acceptance):
    t0 = time.perf_counter()
    model = BinomialModel(2)
    p0 = np.full(3, 1.0 / 3.0)
    theta = solve_theta_for_rho0(model, p0, 0.6)
    n_grid = [250, 500, 1000, 2000]
    ratios = check_theorem1_ratio(model, theta, p0, 1.0, n_grid)
    dev = [abs(r - 1.0) for r in ratios]
    inversions = sum(b > a for a, b in zip(dev, dev[1:]))
    elapsed = time.perf_counter() - t0
    ok = dev[-1] < 0.15 and inversions <= 1 and elapsed < 120
    acceptance(6, ok, f"theta={theta:.4f}, r(n)={np.array2string(np.array(ratios), precision=4)}, "
                      f"inversions {inversions}, {elapsed:.1f}s")
    assert ok


def test_criterion_07_theorem2(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(MASTER_SEED)
    model = BinomialModel(20)
    passed = 0
    for _ in range(100):
        # theta0 on the 1e-3 minimization grid
        theta0 = int(rng.integers(50, 951)) / 1000.0
        passed += check_theorem2_stability(model, theta0, rng.uniform(0.0, 0.3), rng.dirichlet(np.ones(21))).bound_ok
    elapsed = time.perf_counter() - t0
    ok = passed == 100 and elapsed < 120
    acceptance(7, ok, f"{passed}/100 constructions satisfy all three bounds, {elapsed:.1f}s")
    assert ok


def test_criterion_08_complexity(acceptance):
    model = BinomialModel(20)
    law = 0.8 * model.atom_probs(0.30) + 0.2 * model.atom_probs(0.75)

    def median_time(n):
        prob = CollapsedLikelihoodProblem(CountVector(round_counts(n, law)), NuisancePrior.symmetric(model.m), model)
        prob.loglik(0.3)
        times = []
        for _ in range(5):
            t = time.perf_counter()
            prob.loglik(0.3)
            times.append(time.perf_counter() - t)
        return float(np.median(times))

    t2, t4 = median_time(2000), median_time(4000)
    ratio = t4 / t2
    ok = 3.0 <= ratio <= 6.0
    acceptance(8, ok, f"T(4000)={1e3 * t4:.1f}ms, T(2000)={1e3 * t2:.1f}ms, ratio {ratio:.2f}")
    assert ok


def test_criterion_09_mcmc_grid_agreement(acceptance):
    model = BinomialModel(20)
    counts = CountVector.from_observations(simulate_contaminated(Scenario(), 0), model.m)
    prob = CollapsedLikelihoodProblem(counts, NuisancePrior.symmetric(model.m, b=1.0), model)
    run = mala_run(prob, FLAT, MalaConfig(n_warmup=5000, n_keep=20000, seed=MASTER_SEED))
    g_mean, g_lo, g_hi = grid_mean_and_interval(grid_posterior(prob, FLAT))
    d_mean = abs(run.mean[0] - g_mean)
    d_end = max(abs(run.lo[0] - g_lo), abs(run.hi[0] - g_hi))
    ok = d_mean <= 0.005 and d_end <= 0.01 and run.ess[0] >= 1000
    acceptance(9, ok, f"mala mean {run.mean[0]:.4f} vs grid {g_mean:.4f}, max endpoint diff {d_end:.4f}, "
                      f"ESS {run.ess[0]:.0f}/20000")
    assert ok


def test_criterion_10_determinism(acceptance, tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("M = 20\nn = 300\ntheta0 = 0.30\ntheta_c_list = 0.45, 0.75\neps0_list = 0.2\nalpha_list = 1\n"
                   "b_list = 1, 9, 99\nreps = 8\nseed = 42\nengine = grid\nfixed_count = false\n")
    outputs = []
    for i, threads in enumerate(("1", "8", "1", "8")):
        out = tmp_path / f"run{i}.csv"
        assert main(["replicate", "--config", str(cfg), "--out", str(out), "--threads", threads]) == 0
        outputs.append(out.read_bytes())
    ok = all(o == outputs[0] for o in outputs)
    acceptance(10, ok, f"4 runs (threads 1, 8, 1, 8) byte-identical: {ok}, {len(outputs[0])} bytes")
    assert ok
