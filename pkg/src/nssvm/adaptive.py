"""Newton iterations with the sparsity level grown adaptively (NSSVM).

The level starts at ``s0`` and is multiplied by ``sigma`` (rounded up) every
tenth iteration and whenever the residual drops below ``eps``. The run stops
once the residual is below ``eps`` and training accuracy no longer exceeds
the best value seen so far.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .dataset import Dataset
from .linear import DualIterate, Penalties, apply_Q
from .newton import (
    FitResult,
    NewtonState,
    SolverConfig,
    _finish,
    _initial_state,
    _require_binary,
    _step,
)

__all__ = [
    "AdaptiveConfig",
    "PROFILES",
    "default_s0",
    "accuracy",
    "decision_accuracy",
    "profile_config",
    "solve_adaptive",
]


def default_s0(beta: float, m: int, n: int) -> int:
    """``ceil(beta * n * log2(m / n)^2)`` clamped to ``[1, m]``.

    The squared log factor is replaced by 1 when ``m <= n``.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    factor = math.log2(m / n) ** 2 if m > n else 1.0
    return int(min(m, max(1, math.ceil(beta * n * factor))))


def decision_accuracy(d: Dataset, w, b: float) -> float:
    """Percentage of samples with ``sgn(<w, x> + b) == y``, where sgn(0) = -1."""
    pred = np.where(np.asarray(d.X @ w).ravel() + b > 0, 1.0, -1.0)
    return 100.0 * (1.0 - np.count_nonzero(pred != d.y) / d.m)


def accuracy(d: Dataset, alpha, b: float) -> float:
    """Training accuracy (percent) of the classifier ``w = Q alpha`` with bias b."""
    return decision_accuracy(d, apply_Q(d, alpha), b)


@dataclass(frozen=True)
class AdaptiveConfig:
    """Adaptive run: ``base.s`` is the initial level unless ``beta`` is given,
    in which case the level is ``default_s0(beta, m, n)``."""

    base: SolverConfig = field(default_factory=SolverConfig)
    sigma: float = 1.1
    max_it: int = 1000
    acc_plateau_tol: float = 1e-4
    beta: Optional[float] = None
    acc_rule: str = "no-gain"

    def __post_init__(self):
        if self.acc_rule not in ("no-gain", "two-sided"):
            raise ValueError(f"acc_rule must be 'no-gain' or 'two-sided', got {self.acc_rule!r}")
        if not self.sigma >= 1.0:
            raise ValueError(f"sigma must be >= 1, got {self.sigma}")
        if not self.acc_plateau_tol > 0:
            raise ValueError("acc_plateau_tol must be positive")
        if self.beta is not None and not self.beta > 0:
            raise ValueError("beta must be positive")

    def resolve(self, m: int, n: int) -> "AdaptiveConfig":
        base = self.base
        if self.beta is not None:
            base = replace(base, s=default_s0(self.beta, m, n))
        return replace(self, base=base.resolve(m, n))


# Per-dataset-class defaults (C, beta); C=None means log2(m).
PROFILES = {
    "synth-small": (0.25, 0.5),
    "synth-large": (0.25, 1.0),
    "real-default": (0.25, 0.05),
    "real-adult": (0.25, 0.2),
    "real-heavy": (None, 10.0),
}


def profile_config(name: str, m: int, **overrides) -> AdaptiveConfig:
    """AdaptiveConfig for a named profile with ``c = 0.01 C`` and ``eta = 1/m``."""
    if name == "synth":
        name = "synth-small" if m <= 10_000 else "synth-large"
    try:
        C, beta = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    if C is None:
        C = math.log2(m)
    base = SolverConfig(penalties=Penalties(C, 0.01 * C))
    cfg = AdaptiveConfig(base=base, beta=beta)
    return replace(cfg, **overrides) if overrides else cfg


def solve_adaptive(
    d: Dataset,
    cfg: AdaptiveConfig,
    z0: Optional[DualIterate] = None,
    callback: Optional[Callable[[NewtonState], None]] = None,
) -> FitResult:
    """Run NSSVM.

    Halts when ``||F(z^k; T_k)|| < eps`` and the accuracy gain over the best
    earlier iterate is below ``acc_plateau_tol`` (with a virtual ``ACC_{-1} =
    0``), or after ``max_it`` steps. ``acc_rule="no-gain"`` measures the gain
    as ``ACC_k - max_{j<k} ACC_j``; ``"two-sided"`` takes its absolute value,
    so a drop in accuracy also keeps the run going. Without convergence the
    smallest-residual iterate is returned with ``converged=False``.
    """
    _require_binary(d)
    cfg = cfg.resolve(d.m, d.n)
    base = cfg.base
    p, eps, eta = base.penalties, base.eps, base.eta
    t0 = time.perf_counter()

    state = _initial_state(d, z0, p, eta, base.s)
    if callback is not None:
        callback(state)
    acc = accuracy(d, state.z.alpha, state.z.b)
    residuals, accs, levels = [state.residual], [acc], [state.s]
    best_prev = 0.0
    best = state
    converged = False
    while True:
        small_residual = state.residual < eps
        gain = acc - best_prev if cfg.acc_rule == "no-gain" else abs(acc - best_prev)
        if small_residual and gain < cfg.acc_plateau_tol:
            converged = True
            break
        if state.iter >= cfg.max_it:
            break
        k = state.iter
        grow = small_residual or (k > 0 and k % 10 == 0)
        s_next = min(d.m, math.ceil(cfg.sigma * state.s - 1e-9)) if grow else state.s
        best_prev = max(best_prev, acc)
        state = _step(d, state, p, eta, s_next)
        acc = accuracy(d, state.z.alpha, state.z.b)
        residuals.append(state.residual)
        accs.append(acc)
        levels.append(state.s)
        if callback is not None:
            callback(state)
        if state.residual < best.residual:
            best = state
    if not converged:
        state = replace(best, iter=state.iter)
    return _finish(d, state, residuals, converged, t0, acc_history=accs, s_history=levels)
