"""Accuracy/sparsity metrics and repeated-trial benchmarks."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .adaptive import AdaptiveConfig, decision_accuracy, solve_adaptive
from .dataset import Dataset, SplitDataset, gen_gaussian_2d, split_train_test
from .linear import DualIterate
from .newton import FitResult, SolverConfig, default_start, sign_start, solve_fixed_s

__all__ = [
    "TrialReport",
    "BenchReport",
    "BenchSpec",
    "evaluate",
    "run_trials",
    "report_to_dict",
    "report_to_json",
    "report_to_csv",
    "INIT_CHOICES",
]

INIT_CHOICES = ("zero", "sign", "random")

CSV_FIELDS = (
    "seed",
    "acc",
    "tacc",
    "nsv",
    "nsv_ratio",
    "time_seconds",
    "iters",
    "s",
    "converged",
    "error",
)


@dataclass(frozen=True)
class TrialReport:
    acc: float
    tacc: float
    nsv: int
    nsv_ratio: float
    time_seconds: float
    iters: int
    s: int = 0
    converged: bool = True
    seed: Optional[int] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class BenchReport:
    """Means over successful trials; ``per_trial`` keeps every trial in seed order.

    TACC is NaN when no test set was given.
    """

    acc: float
    tacc: float
    nsv: float
    nsv_ratio: float
    time_seconds: float
    iters: float
    trials: int
    per_trial: list = field(default_factory=list)
    failures: int = 0
    converged: int = 0


def evaluate(fit: FitResult, train: Dataset, test: Optional[Dataset] = None) -> TrialReport:
    """Training/testing accuracy in percent, NSV and NSV/m of a fit.

    NSV counts exactly nonzero dual coefficients; the solver zeroes inactive
    coordinates exactly, so no threshold is applied.
    """
    alpha = np.asarray(fit.alpha)
    w = np.asarray(fit.w)
    if alpha.shape != (train.m,):
        raise ValueError(f"fit has {alpha.size} dual coefficients, train has {train.m} samples")
    if w.shape != (train.n,):
        raise ValueError(f"fit has {w.size} weights, train has {train.n} features")
    if test is not None and test.n != train.n:
        raise ValueError(f"test has {test.n} features, train has {train.n}")
    nsv = int(np.count_nonzero(alpha))
    return TrialReport(
        acc=decision_accuracy(train, w, fit.b),
        tacc=decision_accuracy(test, w, fit.b) if test is not None else math.nan,
        nsv=nsv,
        nsv_ratio=nsv / train.m,
        time_seconds=fit.wall_time,
        iters=fit.iters,
        s=fit.s,
        converged=fit.converged,
    )


@dataclass(frozen=True)
class BenchSpec:
    """What a trial runs.

    Data come from exactly one of: ``synthetic_m`` (two-Gaussian data, seed
    per trial), ``train``/``test`` (fixed), or ``train`` with
    ``train_fraction`` (re-split per seed). ``config`` picks the solver:
    a :class:`SolverConfig` runs the fixed-sparsity method, an
    :class:`AdaptiveConfig` the adaptive one.
    """

    config: Union[SolverConfig, AdaptiveConfig]
    synthetic_m: Optional[int] = None
    train: Optional[Dataset] = None
    test: Optional[Dataset] = None
    train_fraction: Optional[float] = None
    init: str = "zero"
    timing: bool = True

    def __post_init__(self):
        if (self.synthetic_m is None) == (self.train is None):
            raise ValueError("give either synthetic_m or train data")
        if self.train_fraction is not None and self.test is not None:
            raise ValueError("train_fraction and test are mutually exclusive")
        if self.init not in INIT_CHOICES:
            raise ValueError(f"init must be one of {INIT_CHOICES}")

    def data(self, seed: int) -> SplitDataset:
        if self.synthetic_m is not None:
            return gen_gaussian_2d(self.synthetic_m, seed)
        if self.train_fraction is not None:
            return split_train_test(self.train, self.train_fraction, seed)
        return SplitDataset(self.train, self.test)


def _start(d: Dataset, init: str, seed: int) -> DualIterate:
    if init == "zero":
        return default_start(d)
    if init == "sign":
        return sign_start(d)
    # random alpha in [0, 1], b in [-1, 1]; feasibility is restored by the first step
    rng = np.random.default_rng([seed, 1])
    return DualIterate(rng.random(d.m), rng.uniform(-1.0, 1.0))


def _one_trial(spec: BenchSpec, seed: int) -> TrialReport:
    try:
        split = spec.data(seed)
        z0 = _start(split.train, spec.init, seed)
        if isinstance(spec.config, AdaptiveConfig):
            fit = solve_adaptive(split.train, spec.config, z0=z0)
        else:
            fit = solve_fixed_s(split.train, spec.config, z0=z0)
        rep = evaluate(fit, split.train, split.test)
        if not spec.timing:
            rep = replace(rep, time_seconds=0.0)
        return replace(rep, seed=seed)
    except Exception as exc:  # recorded, not fatal
        return TrialReport(
            math.nan, math.nan, 0, math.nan, math.nan, 0,
            converged=False, seed=seed, error=f"{type(exc).__name__}: {exc}",
        )


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


def run_trials(
    spec: BenchSpec, trials: int, seeds: Optional[Sequence[int]] = None, jobs: int = 1
) -> BenchReport:
    """Run ``trials`` independent trials, seed ``seeds[i]`` for trial i.

    Seeds default to ``0 .. trials-1``. Solve time excludes data generation.
    A failing trial is kept in ``per_trial`` with its error and left out of
    the means. ``jobs > 1`` runs trials in worker processes; results are
    merged in seed order, so reports match the serial ones except for timing.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seeds = list(range(trials)) if seeds is None else [int(s) for s in seeds]
    if len(seeds) != trials:
        raise ValueError(f"{trials} trials but {len(seeds)} seeds")
    if jobs > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, trials)) as pool:
            per = list(pool.map(_one_trial, [spec] * trials, seeds))
    else:
        per = [_one_trial(spec, s) for s in seeds]
    ok = [r for r in per if r.ok]
    return BenchReport(
        acc=_mean(r.acc for r in ok),
        tacc=_mean(r.tacc for r in ok),
        nsv=_mean(r.nsv for r in ok),
        nsv_ratio=_mean(r.nsv_ratio for r in ok),
        time_seconds=_mean(r.time_seconds for r in ok),
        iters=_mean(r.iters for r in ok),
        trials=trials,
        per_trial=per,
        failures=trials - len(ok),
        converged=sum(r.converged for r in ok),
    )


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def report_to_dict(report: BenchReport) -> dict:
    out = {k: _jsonable(v) for k, v in asdict(report).items() if k != "per_trial"}
    out["per_trial"] = [{k: _jsonable(v) for k, v in asdict(r).items()} for r in report.per_trial]
    return out


def report_to_json(report: BenchReport) -> str:
    """One JSON object; NaN is written as null."""
    return json.dumps(report_to_dict(report), indent=2) + "\n"


def _csv_rows(report: BenchReport, prefix: dict):
    for r in report.per_trial:
        row = {k: getattr(r, k) for k in CSV_FIELDS}
        yield {**prefix, **row}
    mean = {k: getattr(report, k, "") for k in CSV_FIELDS}
    mean.update(seed="mean", s="", converged=report.converged, error=report.failures or "")
    yield {**prefix, **mean}


def report_to_csv(reports, prefix_fields: Sequence[str] = ()) -> str:
    """CSV with one row per trial and a ``seed=mean`` row per report.

    ``reports`` is a single report or a list of ``(prefix_dict, report)``
    pairs, as produced by parameter sweeps.
    """
    if isinstance(reports, BenchReport):
        reports = [({}, reports)]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(prefix_fields) + list(CSV_FIELDS), lineterminator="\n")
    writer.writeheader()
    for prefix, rep in reports:
        for row in _csv_rows(rep, prefix):
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return buf.getvalue()
