"""Command-line interface: ``nssvm {train,predict,bench,synth,certify}``.

Exit codes: 0 success, 1 error, 2 solver did not converge (train) or the
stationarity check failed (certify).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from contextlib import nullcontext
from dataclasses import replace

import numpy as np
import scipy.sparse as sp

from .adaptive import PROFILES, AdaptiveConfig, decision_accuracy, default_s0, profile_config, solve_adaptive
from .dataset import (
    Dataset,
    FeatureScaler,
    binarize_labels,
    dump_libsvm,
    gen_gaussian_2d,
    load_libsvm,
)
from .linear import DualIterate, Penalties, dual_objective
from .metrics import (
    INIT_CHOICES,
    BenchSpec,
    evaluate,
    report_to_csv,
    report_to_dict,
    report_to_json,
    run_trials,
)
from .newton import SolverConfig, check_eta_stationarity, solve_fixed_s
from .oracle import MAX_ORACLE_M, MAX_ORACLE_S, OracleRefusal, enumerate_global

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2

SWEEP_DEFAULTS = {
    # eta as a multiple of 1/m
    "eta": [0.01, 0.1, 1.0, 10.0, 100.0],
    # C/c
    "ratio": [2.0, 10.0, 100.0, 1000.0],
    "beta": [0.05, 0.1, 0.5, 1.0, 2.0],
    "init": list(INIT_CHOICES),
}


class CliError(Exception):
    pass


# ---------------------------------------------------------------- config


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--profile", choices=sorted(PROFILES) + ["synth"],
                   help="named parameter preset (default: real-default, or synth for synthetic data)")
    g.add_argument("--C", type=float, help="loss weight on positive margin residuals")
    g.add_argument("--c", type=float, help="loss weight on negative residuals (default 0.01*C)")
    g.add_argument("--eta", type=float, help="active-set step parameter (default 1/m)")
    g.add_argument("--beta", type=float, help="initial sparsity s0 = ceil(beta*n*log2(m/n)^2)")
    g.add_argument("--fixed-s", type=int, metavar="S", help="initial sparsity level, overrides --beta")
    g.add_argument("--no-tune", action="store_true", help="keep the sparsity level fixed")
    g.add_argument("--sigma", type=float, help="sparsity growth factor (default 1.1)")
    g.add_argument("--tol", type=float, help="residual tolerance (default max(sqrt m, sqrt n)*1e-6)")
    g.add_argument("--max-iter", type=int, help="iteration cap (default 1000)")
    g.add_argument("--acc-tol", type=float, help="accuracy plateau tolerance in percent (default 1e-4)")
    g.add_argument("--acc-rule", choices=["no-gain", "two-sided"], help="halting rule on accuracy")
    g.add_argument("--init", choices=INIT_CHOICES, default="zero", help="starting point")


def _validate_solver_flags(a) -> None:
    if a.C is not None and not a.C > 0:
        raise CliError("--C must be positive")
    if a.c is not None and not a.c > 0:
        raise CliError("--c must be positive")
    if a.c is not None and a.C is not None and not a.c < a.C:
        raise CliError("--c must be smaller than --C")
    if a.fixed_s is not None and a.fixed_s < 1:
        raise CliError("--fixed-s must be >= 1")
    if a.fixed_s is not None and a.beta is not None:
        raise CliError("--fixed-s and --beta are mutually exclusive")
    if a.no_tune and a.sigma is not None:
        raise CliError("--sigma has no effect with --no-tune")
    for name in ("eta", "beta", "tol", "acc_tol"):
        v = getattr(a, name)
        if v is not None and not v > 0:
            raise CliError(f"--{name.replace('_', '-')} must be positive")
    if a.sigma is not None and not a.sigma >= 1:
        raise CliError("--sigma must be >= 1")
    if a.max_iter is not None and a.max_iter < 0:
        raise CliError("--max-iter must be >= 0")


def build_config(a, m: int, n: int, default_profile: str = "real-default"):
    """Solver configuration from flags; a SolverConfig when ``--no-tune`` is set."""
    cfg = profile_config(a.profile or default_profile, m)
    base = cfg.base
    C = a.C if a.C is not None else base.penalties.C
    c = a.c if a.c is not None else (0.01 * C if a.C is not None else base.penalties.c)
    if not C > c:
        raise CliError(f"need C > c, got C={C}, c={c}")
    beta = a.beta if a.beta is not None else cfg.beta
    s = a.fixed_s if a.fixed_s is not None else default_s0(beta, m, n)
    if s > m:
        raise CliError(f"sparsity level {s} exceeds the {m} training samples")
    base = replace(
        base,
        penalties=Penalties(C, c),
        s=s,
        eta=a.eta,
        eps=a.tol,
        max_iter=a.max_iter if a.max_iter is not None else base.max_iter,
    )
    if a.no_tune:
        return base.resolve(m, n)
    cfg = AdaptiveConfig(
        base=base,
        sigma=a.sigma if a.sigma is not None else cfg.sigma,
        max_it=a.max_iter if a.max_iter is not None else cfg.max_it,
        acc_plateau_tol=a.acc_tol if a.acc_tol is not None else cfg.acc_plateau_tol,
        acc_rule=a.acc_rule or cfg.acc_rule,
    )
    return cfg.resolve(m, n)


def config_dict(cfg) -> dict:
    base = cfg.base if isinstance(cfg, AdaptiveConfig) else cfg
    out = {
        "C": base.penalties.C,
        "c": base.penalties.c,
        "eta": base.eta,
        "eps": base.eps,
        "s0": base.s,
        "max_iter": base.max_iter,
        "tune": isinstance(cfg, AdaptiveConfig),
    }
    if isinstance(cfg, AdaptiveConfig):
        out.update(sigma=cfg.sigma, max_it=cfg.max_it, acc_tol=cfg.acc_plateau_tol, acc_rule=cfg.acc_rule)
    return out


def _solve(d: Dataset, cfg, z0=None):
    if isinstance(cfg, AdaptiveConfig):
        return solve_adaptive(d, cfg, z0=z0)
    return solve_fixed_s(d, cfg, z0=z0)


def _load(path: str) -> Dataset:
    try:
        d = binarize_labels(load_libsvm(path))
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc
    return d


def _pad(d: Dataset, n: int) -> Dataset:
    """Widen ``d`` to ``n`` columns with zeros; libsvm files may omit trailing features."""
    if d.n == n:
        return d
    if d.n > n:
        raise CliError(f"data has {d.n} features, model expects {n}")
    if d.is_sparse:
        X = sp.csr_matrix((d.X.data, d.X.indices, d.X.indptr), shape=(d.m, n))
    else:
        X = np.hstack([d.X, np.zeros((d.m, n - d.n))])
    return Dataset(X, d.y)


def _write(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _fmt(v) -> str:
    return "nan" if isinstance(v, float) and math.isnan(v) else f"{v:.4f}" if isinstance(v, float) else str(v)


# ---------------------------------------------------------------- train


def cmd_train(a) -> int:
    _validate_solver_flags(a)
    train = _load(a.data)
    scaler = None
    if a.scale:
        scaler = FeatureScaler(clip=True).fit(train.X)
        train = Dataset(scaler.transform(train.X), train.y)
    test = _pad(_load(a.test), train.n) if a.test else None
    if test is not None and scaler is not None:
        test = Dataset(scaler.transform(test.X), test.y)
    cfg = build_config(a, train.m, train.n)
    fit = _solve(train, cfg)
    rep = evaluate(fit, train, test)
    model = {
        "n": train.n,
        "m": train.m,
        "b": fit.b,
        "support": fit.support.tolist(),
        "alpha": fit.alpha[fit.support].tolist(),
        "w": fit.w.tolist(),
        "s": fit.s,
        "config": config_dict(cfg),
        "metrics": {
            "acc": rep.acc,
            "tacc": None if math.isnan(rep.tacc) else rep.tacc,
            "nsv": rep.nsv,
            "iters": fit.iters,
            "residual": fit.residual,
            "converged": fit.converged,
        },
    }
    if scaler is not None:
        model["scaler"] = {"min": scaler.data_min_.tolist(), "max": scaler.data_max_.tolist()}
    _write(a.model, json.dumps(model, indent=1) + "\n")
    print(
        f"ACC {_fmt(rep.acc)}  TACC {_fmt(rep.tacc)}  NSV {rep.nsv}  "
        f"NSV/m {rep.nsv_ratio:.3e}  ITER {fit.iters}  TIME {fit.wall_time:.3f}s  "
        f"{'converged' if fit.converged else 'NOT converged'}"
    )
    return EXIT_OK if fit.converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------- predict


def load_model(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            model = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: not a model file ({exc})") from exc
    for key in ("n", "b", "w", "support", "alpha"):
        if key not in model:
            raise CliError(f"{path}: model lacks {key!r}")
    if len(model["w"]) != model["n"] or len(model["support"]) != len(model["alpha"]):
        raise CliError(f"{path}: inconsistent model dimensions")
    return model


def _apply_model_scaler(model: dict, d: Dataset) -> Dataset:
    if "scaler" not in model:
        return d
    sc = FeatureScaler(clip=True)
    sc.data_min_ = np.asarray(model["scaler"]["min"], dtype=np.float64)
    sc.data_max_ = np.asarray(model["scaler"]["max"], dtype=np.float64)
    sc.n_features_in_ = sc.data_min_.size
    return Dataset(sc.transform(d.X), d.y)


def cmd_predict(a) -> int:
    model = load_model(a.model)
    d = _pad(_load(a.data), model["n"])
    d = _apply_model_scaler(model, d)
    w = np.asarray(model["w"], dtype=np.float64)
    scores = np.asarray(d.X @ w).ravel() + model["b"]
    pred = np.where(scores > 0, 1, -1)
    _write(a.output, "".join(f"{p:+d}\n" for p in pred))
    line = f"TACC {decision_accuracy(d, w, model['b']):.4f}\n"
    (sys.stderr if a.output in (None, "-") else sys.stdout).write(line)
    return EXIT_OK


# ---------------------------------------------------------------- bench


def _bench_spec(a, overrides=None) -> BenchSpec:
    overrides = overrides or {}
    init = overrides.pop("init", a.init)
    if a.synthetic:
        m, n = a.m, 2
        train = test = None
        default_profile = "synth"
    else:
        train = _load(a.data)
        test = _pad(_load(a.test), train.n) if a.test else None
        m = train.m if a.train_fraction is None else max(1, math.ceil(a.train_fraction * train.m - 1e-9))
        n = train.n
        default_profile = "real-default"
    ns = argparse.Namespace(**{**vars(a), **overrides})
    cfg = build_config(ns, m, n, default_profile)
    if a.synthetic:
        return BenchSpec(cfg, synthetic_m=m, init=init, timing=not a.no_timing)
    return BenchSpec(cfg, train=train, test=test, train_fraction=a.train_fraction,
                     init=init, timing=not a.no_timing)


def _sweep_overrides(a, param: str, value, m: int) -> dict:
    if param == "eta":
        return {"eta": float(value) / m}
    if param == "ratio":
        C = a.C if a.C is not None else profile_config(a.profile or ("synth" if a.synthetic else "real-default"), m).base.penalties.C
        return {"C": C, "c": C / float(value)}
    if param == "beta":
        return {"beta": float(value), "fixed_s": None}
    return {"init": value}


def cmd_bench(a) -> int:
    _validate_solver_flags(a)
    if a.synthetic == (a.data is not None):
        raise CliError("give exactly one of --synthetic or --data")
    if a.synthetic and (a.m is None or a.m < 2):
        raise CliError("--synthetic needs --m >= 2")
    if a.trials < 1:
        raise CliError("--trials must be >= 1")
    if a.train_fraction is not None and a.test:
        raise CliError("--train-fraction and --test are mutually exclusive")
    jobs = 1 if a.serial else max(1, a.jobs)
    seeds = [a.seed + i for i in range(a.trials)]
    if a.sweep:
        values = a.values.split(",") if a.values else SWEEP_DEFAULTS[a.sweep]
        if a.sweep != "init":
            values = [float(v) for v in values]
        elif any(v not in INIT_CHOICES for v in values):
            raise CliError(f"--values for init must be among {INIT_CHOICES}")
        m_ref = a.m if a.synthetic else _load(a.data).m
        rows = []
        for v in values:
            spec = _bench_spec(a, _sweep_overrides(a, a.sweep, v, m_ref))
            rows.append(({"param": a.sweep, "value": v}, run_trials(spec, a.trials, seeds, jobs)))
        if a.format == "json":
            text = json.dumps([{**pre, "report": report_to_dict(r)} for pre, r in rows], indent=2) + "\n"
        else:
            text = report_to_csv(rows, prefix_fields=("param", "value"))
        _write(a.output, text)
        return EXIT_OK if any(r.failures < r.trials for _, r in rows) else EXIT_ERROR
    spec = _bench_spec(a)
    rep = run_trials(spec, a.trials, seeds, jobs)
    _write(a.output, report_to_json(rep) if a.format == "json" else report_to_csv(rep))
    for r in rep.per_trial:
        if not r.ok:
            print(f"trial seed={r.seed} failed: {r.error}", file=sys.stderr)
    return EXIT_OK if rep.failures < rep.trials else EXIT_ERROR


# ---------------------------------------------------------------- synth


def cmd_synth(a) -> int:
    if a.m < 1:
        raise CliError("--m must be >= 1")
    split = gen_gaussian_2d(a.m, a.seed)
    for path, d in ((a.train, split.train), (a.test, split.test)):
        if path is None:
            continue
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                dump_libsvm(d, fh)
        except OSError as exc:
            raise CliError(f"cannot write {path}: {exc.strerror or exc}") from exc
    if a.train is None and a.test is None:
        dump_libsvm(split.train, sys.stdout)
    return EXIT_OK


# ---------------------------------------------------------------- certify


def _model_iterate(model: dict, d: Dataset) -> DualIterate:
    if model.get("m", d.m) != d.m:
        raise CliError(f"model was trained on {model['m']} samples, data has {d.m}")
    alpha = np.zeros(d.m)
    idx = np.asarray(model["support"], dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= d.m):
        raise CliError("model support indices fall outside the data")
    alpha[idx] = model["alpha"]
    return DualIterate(alpha, model["b"])


def cmd_certify(a) -> int:
    if a.synthetic == (a.data is not None):
        raise CliError("give exactly one of --synthetic or --data")
    if a.synthetic:
        if a.m is None or a.m < 2:
            raise CliError("--synthetic needs --m >= 2")
        d = gen_gaussian_2d(a.m, a.seed).train
    else:
        d = _load(a.data)
    if a.model:
        model = load_model(a.model)
        d = _apply_model_scaler(model, _pad(d, model["n"]))
        z = _model_iterate(model, d)
        conf = model.get("config", {})
        C = a.C if a.C is not None else conf.get("C", 0.25)
        c = a.c if a.c is not None else conf.get("c", 0.01 * C)
        p = Penalties(C, c)
        s = a.s if a.s is not None else model.get("s", conf.get("s0", max(1, len(model["support"]))))
        eta = a.eta if a.eta is not None else conf.get("eta")
        tol = a.tol if a.tol is not None else conf.get("eps")
    else:
        if a.s is None:
            raise CliError("--s is required without --model")
        C = a.C if a.C is not None else 0.25
        c = a.c if a.c is not None else 0.01 * C
        p = Penalties(C, c)
        s, eta, tol = a.s, a.eta, a.tol
        if s > d.m:
            raise CliError(f"--s {s} exceeds m = {d.m}")
        fit = solve_fixed_s(d, SolverConfig(p, s=s, eta=eta, eps=tol))
        z = fit.z
        print(f"solver: {fit.iters} iterations, residual {fit.residual:.3e}, "
              f"{'converged' if fit.converged else 'NOT converged'}")
    cfg = SolverConfig(p, s=s, eta=eta, eps=tol).resolve(d.m, d.n)
    rep = check_eta_stationarity(d, z, cfg)
    cond = rep.conditions
    ok = "PASS"

    def mark(name):
        return ok if cond[name] else "FAIL"

    print(f"||g_S||                    = {rep.support_grad:.6e}  (<= {rep.tol:.3e})  {mark('support_gradient')}")
    print(f"eta*max|g_off|             = {rep.off_support:.6e}  (<= {rep.alpha_s + rep.eta * rep.tol:.6e})  {mark('off_support_bound')}")
    print(f"||alpha||_0                = {rep.nnz}  (<= {rep.s})  {mark('sparsity')}")
    print(f"|<alpha, y>|               = {rep.feasibility:.6e}  (<= {rep.tol:.3e})  {mark('feasibility')}")
    print(f"eta                        = {rep.eta:.6e}")
    print(f"eta*                       = {rep.eta_star:.6e}")
    try:
        orc = enumerate_global(d, s, p)
    except OracleRefusal:
        print(f"oracle: skipped (needs m <= {MAX_ORACLE_M} and s <= {MAX_ORACLE_S}); stationarity only")
    else:
        obj = dual_objective(d, z.alpha, p)
        print(f"oracle: optimum {orc.best_objective:.12e} over {orc.evaluated_supports} supports, "
              f"objective gap {obj - orc.best_objective:.3e}")
    if rep.passed:
        print("eta-stationary: PASS")
        return EXIT_OK
    print("eta-stationary: FAIL (" + ", ".join(rep.violations) + ")")
    return EXIT_NOT_CONVERGED


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nssvm", description="Sparse-support linear SVM via a Newton method.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on a libsvm file")
    p.add_argument("--data", required=True)
    p.add_argument("--test", help="optional labeled test file for TACC")
    p.add_argument("--model", default="model.json", help="output model path (default model.json)")
    p.add_argument("--scale", action="store_true", help="scale features to [-1, 1] first")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label a libsvm file with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", help="predictions file (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="repeated-trial benchmark")
    p.add_argument("--synthetic", action="store_true", help="two-Gaussian data")
    p.add_argument("--m", type=int, help="training size for --synthetic")
    p.add_argument("--data")
    p.add_argument("--test")
    p.add_argument("--train-fraction", type=float, help="re-split --data per trial")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="first seed; trial i uses seed+i")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--output")
    p.add_argument("--sweep", choices=sorted(SWEEP_DEFAULTS))
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--no-timing", action="store_true", help="report zero times (byte-stable output)")
    p.add_argument("--serial", action="store_true", help="run trials in this process")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write two-Gaussian data in libsvm format")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", help="training output (default stdout)")
    p.add_argument("--test", help="testing output")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("certify", help="check eta-stationarity, with an exhaustive oracle on tiny data")
    p.add_argument("--data")
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--m", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", help="model to check; without it the fixed-s solver is run")
    p.add_argument("--s", type=int)
    p.add_argument("--C", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_certify)
    return parser


def _thread_limit():
    raw = os.environ.get("NSSVM_THREADS")
    if not raw:
        return nullcontext()
    try:
        limit = int(raw)
    except ValueError:
        raise CliError(f"NSSVM_THREADS must be an integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, limit))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except CliError as exc:
        print(f"nssvm {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, ArithmeticError) as exc:
        print(f"nssvm {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
