"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 check failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CHECK = 0, 2, 3, 4

CONFIG_KEYS = ("M", "n", "theta0", "theta_c_list", "eps0_list", "alpha_list", "b_list",
               "reps", "seed", "engine", "fixed_count")


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# -- parsing helpers -------------------------------------------------------------

def _float_list(text: str, key: str) -> list[float]:
    try:
        vals = [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{key}: empty list")
    return vals


def _bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected true or false, got {text!r}")


def _int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _num(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Unknown keys are errors."""
    raw = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r} on line {lineno}")
        raw[key] = val
    cfg = dict(M=20, n=300, theta0=0.30, theta_c_list=[0.75], eps0_list=[0.20], alpha_list=[1.0],
               b_list=[1.0, 4.0, 9.0, 19.0, 99.0], reps=50, seed=0, engine="grid", fixed_count=False)
    for key, val in raw.items():
        if key in ("M", "n", "reps", "seed"):
            cfg[key] = _int(val, key)
        elif key == "theta0":
            cfg[key] = _num(val, key)
        elif key.endswith("_list"):
            cfg[key] = _float_list(val, key)
        elif key == "engine":
            if val not in ("grid", "mala"):
                raise ConfigError(f"engine: expected grid or mala, got {val!r}")
            cfg[key] = val
        elif key == "fixed_count":
            cfg[key] = _bool(val, key)
    return cfg


def read_observations(path, m: int | None = None) -> np.ndarray:
    """Newline-separated nonnegative integers; blank lines are ignored."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from None
    vals, bad = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        try:
            v = int(s)
        except ValueError:
            bad.append(f"line {lineno}: {s!r}")
            continue
        if v < 0 or (m is not None and v >= m):
            bad.append(f"line {lineno}: {v}")
        else:
            vals.append(v)
    if bad:
        lim = "" if m is None else f" (support is 0..{m - 1})"
        raise DataError(f"observations outside the model support{lim}: " + "; ".join(bad[:20])
                        + (" ..." if len(bad) > 20 else ""))
    return np.asarray(vals, dtype=np.int64)


def read_counts_csv(path, m: int) -> np.ndarray:
    """CSV with header ``atom_index,count`` and 0-based atoms."""
    counts = np.zeros(m, dtype=np.int64)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["atom_index", "count"]:
                raise DataError(f"{path}: expected header atom_index,count")
            for lineno, row in enumerate(reader, 2):
                try:
                    j, c = int(row["atom_index"]), int(row["count"])
                except (TypeError, ValueError):
                    raise DataError(f"{path} line {lineno}: non-integer entry") from None
                if not 0 <= j < m or c < 0:
                    raise DataError(f"{path} line {lineno}: atom {j} or count {c} out of range (support 0..{m - 1})")
                counts[j] += c
    except OSError as exc:
        raise DataError(f"cannot read counts file {path}: {exc}") from None
    return counts


def _model(args):
    from .models import make_model

    try:
        return make_model(args.model, args.M)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _counts(args, model):
    from .core import CountVector

    if args.counts:
        return CountVector(read_counts_csv(args.counts, model.m))
    if args.data:
        return CountVector.from_observations(read_observations(args.data, model.m), model.m)
    raise ConfigError("one of --data or --counts is required")


def _nuisance(args, m: int, b: float):
    from .core import NuisancePrior

    alpha = _float_list(args.alpha, "alpha")
    if len(alpha) == 1:
        alpha = alpha * m
    if len(alpha) != m:
        raise ConfigError(f"alpha: expected 1 or {m} values, got {len(alpha)}")
    try:
        return NuisancePrior(args.a, b, np.asarray(alpha))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _theta_prior(args):
    from .score import BetaThetaPrior

    try:
        return BetaThetaPrior(args.theta_a, args.theta_b)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return format(float(x), ".6f")


# -- commands --------------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .studies import Scenario, simulate_contaminated

    try:
        sc = Scenario(M=args.M, n=args.n, theta0=args.theta0, theta_c=args.theta_c, eps0=args.eps0,
                      reps=1, master_seed=args.seed, fixed_count=args.fixed_count)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    obs = simulate_contaminated(sc, 0)
    out = "".join(f"{v}\n" for v in obs)
    Path(args.out).write_text(out)
    mean = float(obs.mean()) if obs.size else float("nan")
    print(f"n={obs.size} mean={mean:.4f} mean/M={mean / args.M:.4f} -> {args.out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    from .collapsed import CollapsedLikelihoodProblem, PlainLikelihoodProblem
    from .grid import grid_mean_and_interval, grid_posterior
    from .sampler import MalaConfig, mala_run

    model = _model(args)
    counts = _counts(args, model)
    prior = _theta_prior(args)
    b_list = _float_list(args.b, "b")
    engines = ["grid", "mala"] if args.engine == "both" else [args.engine]
    if "grid" in engines and model.dim != 1:
        raise ConfigError("the grid engine needs a scalar-parameter model")
    problems = [("naive", PlainLikelihoodProblem(counts, model))] if args.naive else []
    for b in b_list:
        label = "huber" if len(b_list) == 1 else f"huber_b={b:g}"
        problems.append((label, CollapsedLikelihoodProblem(counts, _nuisance(args, model.m, b), model)))
    rows = []
    for label, prob in problems:
        for engine in engines:
            name = label if len(engines) == 1 else f"{label}_{engine}"
            if engine == "grid":
                mean, lo, hi = grid_mean_and_interval(grid_posterior(prob, prior, args.grid))
                rows.append([name, mean, lo, hi, None, None])
            else:
                try:
                    cfg = MalaConfig(step_size=args.step_size, n_warmup=args.warmup, n_keep=args.keep, seed=args.seed)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
                run = mala_run(prob, prior, cfg)
                if args.trace and label == problems[-1][0]:
                    run.write_trace(args.trace)
                for i in range(model.dim):
                    suffix = "" if model.dim == 1 else f"[theta_{i + 1}]"
                    rows.append([name + suffix, run.mean[i], run.lo[i], run.hi[i], run.ess[i], run.accept_rate])
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "mean", "lo95", "hi95", "ess", "accept_rate"])
        for r in rows:
            w.writerow([r[0], *[_fmt(x) for x in r[1:]]])
    for r in rows:
        print(f"{r[0]:>16s}  mean={r[1]:.4f}  95%=({r[2]:.4f}, {r[3]:.4f})")
    return EXIT_OK


def cmd_loglik(args) -> int:
    from .collapsed import CollapsedLikelihoodProblem
    from .grid import grid_posterior

    model = _model(args)
    counts = _counts(args, model)
    prob = CollapsedLikelihoodProblem(counts, _nuisance(args, model.m, _num(args.b, "b")), model)
    if args.theta is not None:
        theta = _float_list(args.theta, "theta")
        print(repr(prob.loglik(np.asarray(theta))))
        return EXIT_OK
    if model.dim != 1:
        raise ConfigError("--grid needs a scalar-parameter model; use --theta")
    gp = grid_posterior(prob, _theta_prior(args), args.grid)
    ll = prob.loglik_batch(gp.theta)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["theta", "log_marginal", "posterior_density"])
        for t, l, f in zip(gp.theta, ll, gp.density):
            w.writerow([format(t, ".10f"), format(l, ".10f"), format(f, ".10e")])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def scenarios_from_config(cfg: dict):
    from .studies import Scenario

    out = []
    try:
        for tc in cfg["theta_c_list"]:
            for e in cfg["eps0_list"]:
                for al in cfg["alpha_list"]:
                    out.append(Scenario(M=cfg["M"], n=cfg["n"], theta0=cfg["theta0"], theta_c=tc, eps0=e,
                                        b_list=tuple(cfg["b_list"]), alpha=al, reps=cfg["reps"],
                                        master_seed=cfg["seed"], fixed_count=cfg["fixed_count"],
                                        engine=cfg["engine"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return out


def cmd_replicate(args) -> int:
    from .studies import emit_tables, run_study

    cfg = read_config(args.config)
    if args.threads is not None and args.threads < 1:
        raise ConfigError("threads must be >= 1")
    result = run_study(scenarios_from_config(cfg), threads=args.threads)
    n = emit_tables(result, args.out, plot_path=args.plot)
    for s, rep, msg in result.failures:
        print(f"rep {rep} (theta_c={s.theta_c}, eps0={s.eps0}, alpha={s.alpha}) failed: {msg}", file=sys.stderr)
    print(f"{n} rows -> {args.out}; {len(result.failures)} failed replications")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    from .oracle import agreement_suite

    rows = agreement_suite(args.instances, args.seed, n_max=args.n_max, m_max=args.m_max, n_min=args.n_min,
                           perturb=args.perturb)
    print(f"{'#':>3} {'m':>2} {'n':>3} {'|dp-enum|':>11} {'|quad-enum|':>12}  result")
    failed = 0
    for r in rows:
        if r["note"].startswith("skipped"):
            print(f"{r['index']:>3} {r['m']:>2} {r['n']:>3} {'':>11} {'':>12}  SKIP ({r['note']})")
            continue
        d1 = abs(r["dp"] - r["enum"]) if np.isfinite(r["dp"]) else float("nan")
        d2 = abs(r["quad"] - r["enum"]) if np.isfinite(r["quad"]) else float("nan")
        q = "" if math.isnan(d2) else f"{d2:.2e}"
        status = "PASS" if r["ok"] else "FAIL"
        failed += not r["ok"]
        print(f"{r['index']:>3} {r['m']:>2} {r['n']:>3} {d1:>11.2e} {q:>12}  {status} {r['note']}")
    print(f"{len(rows) - failed}/{len(rows)} instances passed")
    return EXIT_CHECK if failed else EXIT_OK


def theory_checks(seed: int = 0, n_grid=(250, 500, 1000, 2000), theorem2_cases: int = 100):
    """Run the large-sample and stability checks; returns ``(rows, all_ok)``.

    Each row is ``(check, parameter, value, ok)``.
    """
    from . import asymptotics as asy
    from .models import BinomialModel

    rows = []
    mod = BinomialModel(2)
    p0 = np.full(3, 1.0 / 3.0)
    theta = asy.solve_theta_for_rho0(mod, p0, 0.6)
    ratios = asy.check_theorem1_ratio(mod, theta, p0, 1.0, list(n_grid))
    dev = [abs(r - 1.0) for r in ratios]
    inversions = sum(dev[i + 1] > dev[i] for i in range(len(dev) - 1))
    for n, r in zip(n_grid, ratios):
        rows.append(("theorem1_ratio", f"n={n}", r, True))
    ok1 = dev[-1] < 0.15 and inversions <= 1
    rows.append(("theorem1_limit", f"theta={theta:.6f}", dev[-1], ok1))

    cor = asy.check_corollary_ratio(mod, 0.3, 0.5, 1.0, [500, 1000, 2000])
    for n, r in zip((500, 1000, 2000), cor):
        rows.append(("corollary_ratio", f"n={n}", r, True))
    ok2 = all(cor[i + 1] < cor[i] for i in range(len(cor) - 1)) and cor[-1] < 1.0
    rows.append(("corollary_decreasing", "theta=0.3,theta0=0.5", cor[-1], ok2))

    rng = np.random.default_rng(seed)
    m20 = BinomialModel(20)
    n_ok = 0
    for _ in range(theorem2_cases):
        # theta0 on the 1e-3 minimization grid so eps_min(theta*) <= eps_min(theta0) holds exactly
        th0 = int(rng.integers(50, 951)) / 1000.0
        eps0 = float(rng.uniform(0.0, 0.3))
        q = rng.dirichlet(np.ones(21))
        n_ok += asy.check_theorem2_stability(m20, th0, eps0, q).bound_ok
    rows.append(("theorem2_stability", f"cases={theorem2_cases}", n_ok, n_ok == theorem2_cases))

    grid = np.linspace(0.0, 0.99, 100)
    vals = [asy.a_zero_b(r, 1.0, 3) for r in grid]
    mono = all(vals[i + 1] > vals[i] for i in range(len(vals) - 1))
    rows.append(("a_zero_b_monotone", "b=1,m=3", float(vals[-1]), mono))
    return rows, all(r[3] for r in rows)


def cmd_theory_check(args) -> int:
    rows, ok = theory_checks(args.seed)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["check", "parameter", "value", "pass"])
        for name, par, val, good in rows:
            w.writerow([name, par, format(float(val), ".8g"), "true" if good else "false"])
    finally:
        if out is not sys.stdout:
            out.close()
    print("theory checks: " + ("PASS" if ok else "FAIL"), file=sys.stderr)
    return EXIT_OK if ok else EXIT_CHECK


# -- argument parser -------------------------------------------------------------

def _add_model(p):
    p.add_argument("--model", default="binomial", help="structural model (binomial or binomial2)")
    p.add_argument("--M", type=int, default=20, help="number of binomial trials")


def _add_data(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--data", help="observations, one nonnegative integer per line")
    g.add_argument("--counts", help="CSV with header atom_index,count")


def _add_prior(p, b_help="Beta(a, b) shape b for the contamination fraction"):
    p.add_argument("--a", type=float, default=1.0, help="Beta(a, b) shape a for the contamination fraction")
    p.add_argument("--b", default="1", help=b_help)
    p.add_argument("--alpha", default="1", help="Dirichlet parameter: one value or one per atom, comma separated")
    p.add_argument("--theta-a", type=float, default=1.0, help="Beta prior shape a on theta")
    p.add_argument("--theta-b", type=float, default=1.0, help="Beta prior shape b on theta")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fshuber", description="Finite-support Huber contamination posteriors.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate contaminated binomial data")
    p.add_argument("--M", type=int, default=20)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--theta0", type=float, default=0.30)
    p.add_argument("--theta-c", type=float, default=0.75)
    p.add_argument("--eps0", type=float, default=0.20)
    p.add_argument("--fixed-count", action="store_true", help="contaminate exactly ceil(eps0 n) draws")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="posterior summaries of theta")
    _add_model(p)
    _add_data(p)
    _add_prior(p, "Beta shape b; a comma list fits each value")
    p.add_argument("--engine", choices=("grid", "mala", "both"), default="mala")
    p.add_argument("--naive", action="store_true", help="also fit the uncontaminated likelihood")
    p.add_argument("--grid", type=int, default=2001, help="grid size for the grid engine")
    p.add_argument("--step-size", type=float, default=0.5)
    p.add_argument("--warmup", type=int, default=5000)
    p.add_argument("--keep", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="trace CSV of the last MALA run")
    p.add_argument("--out", required=True, help="summary CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("loglik", help="log marginal likelihood at a point or on a grid")
    _add_model(p)
    _add_data(p)
    _add_prior(p)
    p.add_argument("--theta", help="evaluate at this parameter (comma separated for d > 1)")
    p.add_argument("--grid", type=int, default=2001)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_loglik)

    p = sub.add_parser("replicate", help="replication study from a config file")
    p.add_argument("--config", required=True, help="key = value file; keys: " + ", ".join(CONFIG_KEYS))
    p.add_argument("--out", required=True)
    p.add_argument("--plot", help="optional figure path (needs matplotlib)")
    p.add_argument("--threads", type=int, help="worker processes (default HUBER_THREADS or CPU count)")
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("oracle-check", help="convolution vs enumeration vs quadrature")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-max", type=int, default=12)
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--m-max", type=int, default=5)
    p.add_argument("--perturb", action="store_true", help="test hook: perturb one allocation weight by 1e-6")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("theory-check", help="numerical checks of the large-sample theory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_theory_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
