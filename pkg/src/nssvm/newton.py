"""Newton iterations on the stationary equations of the sparsity-constrained dual.

For an active set T the equations are ``F(z; T) = [g_T(z); alpha_{~T};
<alpha_T, y_T>] = 0``. Each step solves the (s+1)-sized saddle system with a
Cholesky factor of the Hessian block, zeroes alpha off T, and picks the next
T from the s largest ``|alpha - eta g|``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .dataset import Dataset
from .linear import (
    DualIterate,
    NumericalBreakdown,
    Penalties,
    apply_Q,
    eta_star,
    grad_g,
    hessian_block,
    kth_largest_abs,
)
from .projection import top_s_indices

__all__ = [
    "SolverConfig",
    "NewtonState",
    "FitResult",
    "StationarityReport",
    "default_tolerance",
    "default_start",
    "sign_start",
    "residual_F",
    "newton_direction",
    "solve_fixed_s",
    "check_eta_stationarity",
]


def default_tolerance(m: int, n: int) -> float:
    return max(math.sqrt(m), math.sqrt(n)) * 1e-6


def default_start(d: Dataset) -> DualIterate:
    """alpha = 0, b = 0.

    Every coordinate of ``alpha - eta g`` then ties, so the first active set is
    free to mix both classes (see :func:`_initial_active_set`).
    """
    return DualIterate(np.zeros(d.m), 0.0)


def sign_start(d: Dataset) -> DualIterate:
    """alpha = 0 and b = sgn(sum y) with sgn(0) = -1.

    From this point ``|g|`` is 2 on one class and 0 on the other, so the first
    active set holds a single class; the step then only flips the sign of b
    and the iteration cycles with period two.
    """
    return DualIterate(np.zeros(d.m), 1.0 if d.y.sum() > 0 else -1.0)


def _initial_active_set(v, y, s: int) -> np.ndarray:
    """Top-s set of ``v``; when all magnitudes tie, a label-balanced member."""
    a = np.abs(v)
    if a.size and a.max() != a.min():
        return top_s_indices(v, s)
    pos, neg = np.flatnonzero(y > 0), np.flatnonzero(y <= 0)
    n_pos = min(pos.size, max(s - neg.size, (s + 1) // 2))
    return np.sort(np.concatenate([pos[:n_pos], neg[: s - n_pos]]))


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the fixed-sparsity Newton method.

    ``eta=None`` means 1/m and ``eps=None`` means ``max(sqrt(m), sqrt(n)) * 1e-6``;
    :meth:`resolve` fills both in for a given problem size. ``min_iter`` forces
    that many steps even when the start already meets the tolerance.
    """

    penalties: Penalties = field(default_factory=Penalties)
    s: int = 1
    eta: Optional[float] = None
    eps: Optional[float] = None
    max_iter: int = 1000
    min_iter: int = 0

    def __post_init__(self):
        if self.s < 1:
            raise ValueError(f"s must be >= 1, got {self.s}")
        if self.eta is not None and not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.eps is not None and not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if not 0 <= self.min_iter <= self.max_iter:
            raise ValueError("need 0 <= min_iter <= max_iter")

    def resolve(self, m: int, n: int) -> "SolverConfig":
        if self.s > m:
            raise ValueError(f"sparsity level s={self.s} exceeds m={m}")
        return replace(
            self,
            eta=1.0 / m if self.eta is None else self.eta,
            eps=default_tolerance(m, n) if self.eps is None else self.eps,
        )


@dataclass
class NewtonState:
    """Iterate ``z`` with its active set, residual norm and cached gradient."""

    z: DualIterate
    T: np.ndarray
    residual: float
    iter: int
    g: np.ndarray
    s: int


@dataclass(frozen=True)
class FitResult:
    alpha: np.ndarray
    b: float
    w: np.ndarray
    support: np.ndarray
    iters: int
    residual_history: list
    converged: bool
    wall_time: float
    s: int
    acc_history: list = field(default_factory=list)
    s_history: list = field(default_factory=list)

    @property
    def nsv(self) -> int:
        return int(self.support.size)

    @property
    def residual(self) -> float:
        return self.residual_history[-1]

    @property
    def z(self) -> DualIterate:
        return DualIterate(self.alpha, self.b)


def _residual_norm(alpha, y, g, T) -> float:
    """``||F(z; T)||`` using only the support of alpha for the off-T block."""
    S = np.flatnonzero(alpha)
    off = S[~np.isin(S, T, assume_unique=True)]
    gT = g[T]
    feas = float(alpha[T] @ y[T])
    return math.sqrt(float(gT @ gT) + float(alpha[off] @ alpha[off]) + feas * feas)


def residual_F(d: Dataset, z: DualIterate, T, p: Penalties, g=None):
    """Stacked ``F(z; T)`` (length m + 1: g_T, alpha off T in index order, then
    <alpha_T, y_T>) and its Euclidean norm."""
    T = np.asarray(T, dtype=np.intp)
    if g is None:
        g = grad_g(d, z, p)
    mask = np.ones(d.m, dtype=bool)
    mask[T] = False
    F = np.concatenate([g[T], z.alpha[mask], [z.alpha[T] @ d.y[T]]])
    return F, _residual_norm(z.alpha, d.y, g, T)


def _off_T_coupling(d: Dataset, alpha, T) -> np.ndarray:
    """``H_{T,~T} alpha_{~T} = y_T * (X_T Q alpha_{~T})``; zero when alpha lives on T."""
    off = np.flatnonzero(alpha)
    off = off[~np.isin(off, T, assume_unique=True)]
    if off.size == 0:
        return np.zeros(len(T))
    a_off = np.zeros_like(alpha)
    a_off[off] = alpha[off]
    return d.y[T] * np.asarray(d.X[T] @ apply_Q(d, a_off)).ravel()


def _direction_on_T(d: Dataset, alpha, g, T, p: Penalties):
    """Newton step restricted to T: ``(d_T, d_b)``; off T the step is ``-alpha``.

    The T-rows of the Jacobian also carry ``H_{T,~T}``, so the step zeroing
    alpha off T shifts the right-hand side by ``H_{T,~T} alpha_{~T}``. Once
    alpha is supported inside T that term vanishes and the step is the
    familiar closed form with ``g_T`` alone.
    """
    block = hessian_block(d, alpha, T, p)
    yT = d.y[T]
    gT = g[T] - _off_T_coupling(d, alpha, T)
    sol = block.solve(np.column_stack([gT, yT]))
    theta_inv_g, theta_inv_y = sol[:, 0], sol[:, 1]
    denom = float(yT @ theta_inv_y)
    if not denom > 0 or not math.isfinite(denom):
        raise NumericalBreakdown(f"<y_T, Theta^-1 y_T> = {denom!r} on |T| = {len(T)}")
    d_b = -float(yT @ (theta_inv_g - alpha[T])) / denom
    d_T = -(theta_inv_g + d_b * theta_inv_y)
    if not (np.all(np.isfinite(d_T)) and math.isfinite(d_b)):
        raise NumericalBreakdown(f"non-finite Newton direction on |T| = {len(T)}")
    return d_T, d_b


def newton_direction(d: Dataset, state: NewtonState, p: Penalties) -> np.ndarray:
    """Full direction (length m + 1) solving ``grad F(z; T) d = -F(z; T)``."""
    alpha = state.z.alpha
    T = np.asarray(state.T, dtype=np.intp)
    d_T, d_b = _direction_on_T(d, alpha, state.g, T, p)
    out = np.empty(d.m + 1)
    out[: d.m] = -alpha
    out[T] = d_T
    out[d.m] = d_b
    return out


def _initial_state(d, z0, p, eta, s) -> NewtonState:
    if z0 is None:
        z0 = default_start(d)
    elif z0.alpha.shape != (d.m,):
        raise ValueError(f"z0.alpha has shape {z0.alpha.shape}, expected ({d.m},)")
    g = grad_g(d, z0, p)
    T = _initial_active_set(z0.alpha - eta * g, d.y, s)
    return NewtonState(z0, T, _residual_norm(z0.alpha, d.y, g, T), 0, g, s)


def _step(d, state: NewtonState, p, eta, s_next) -> NewtonState:
    alpha, T = state.z.alpha, state.T
    d_T, d_b = _direction_on_T(d, alpha, state.g, T, p)
    new_alpha = np.zeros(d.m)
    new_alpha[T] = alpha[T] + d_T
    z = DualIterate(new_alpha, state.z.b + d_b)
    g = grad_g(d, z, p)
    T_next = top_s_indices(new_alpha - eta * g, s_next)
    return NewtonState(z, T_next, _residual_norm(new_alpha, d.y, g, T_next), state.iter + 1, g, s_next)


def _require_binary(d: Dataset) -> None:
    if not d.is_binary:
        raise ValueError("labels must be -1/+1; apply binarize_labels first")


def _finish(d, state, history, converged, t0, **extra) -> FitResult:
    alpha = state.z.alpha
    return FitResult(
        alpha=alpha,
        b=state.z.b,
        w=apply_Q(d, alpha),
        support=np.flatnonzero(alpha),
        iters=state.iter,
        residual_history=history,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        s=state.s,
        **extra,
    )


def solve_fixed_s(
    d: Dataset,
    cfg: SolverConfig,
    z0: Optional[DualIterate] = None,
    callback: Optional[Callable[[NewtonState], None]] = None,
) -> FitResult:
    """Newton method with a fixed sparsity level ``cfg.s``.

    Full steps, no line search. Stops when ``||F(z^k; T_k)|| < eps`` or after
    ``cfg.max_iter`` steps; in the latter case the iterate with the smallest
    residual is returned with ``converged=False``. ``callback`` sees every
    state, including the initial one.
    """
    _require_binary(d)
    cfg = cfg.resolve(d.m, d.n)
    p = cfg.penalties
    t0 = time.perf_counter()
    state = _initial_state(d, z0, p, cfg.eta, cfg.s)
    if callback is not None:
        callback(state)
    history = [state.residual]
    best = state
    while (state.residual >= cfg.eps or state.iter < cfg.min_iter) and state.iter < cfg.max_iter:
        state = _step(d, state, p, cfg.eta, cfg.s)
        history.append(state.residual)
        if callback is not None:
            callback(state)
        if state.residual < best.residual:
            best = state
    converged = state.residual < cfg.eps
    if not converged:
        iters = state.iter
        state = replace(best, iter=iters)
    return _finish(d, state, history, converged, t0, s_history=[cfg.s] * len(history))


@dataclass(frozen=True)
class StationarityReport:
    """The four conditions characterising an eta-stationary point.

    ``support_grad``  ``||g_S||`` on the support S of alpha (want 0)
    ``off_support``   ``eta * max_{j not in S} |g_j|`` against ``||alpha||_[s]``
    ``nnz``           ``||alpha||_0`` against ``s``
    ``feasibility``   ``|<alpha, y>|`` (want 0)
    """

    support_grad: float
    off_support: float
    alpha_s: float
    nnz: int
    s: int
    feasibility: float
    eta: float
    tol: float
    eta_star: float

    @property
    def conditions(self) -> dict:
        return {
            "support_gradient": self.support_grad <= self.tol,
            "off_support_bound": self.off_support <= self.alpha_s + self.eta * self.tol,
            "sparsity": self.nnz <= self.s,
            "feasibility": self.feasibility <= self.tol,
        }

    @property
    def passed(self) -> bool:
        return all(self.conditions.values())

    @property
    def violations(self) -> list:
        return [k for k, ok in self.conditions.items() if not ok]


def check_eta_stationarity(
    d: Dataset, z: DualIterate, cfg: SolverConfig, tol: Optional[float] = None
) -> StationarityReport:
    """Evaluate the eta-stationarity conditions at ``z``.

    The off-support bound is slackened by ``eta * tol``, which is what a
    residual below ``tol`` on an admissible active set guarantees.
    """
    cfg = cfg.resolve(d.m, d.n)
    p = cfg.penalties
    alpha = z.alpha
    g = grad_g(d, z, p)
    S = np.flatnonzero(alpha)
    off = np.ones(d.m, dtype=bool)
    off[S] = False
    g_off_max = float(np.abs(g[off]).max()) if off.any() else 0.0
    return StationarityReport(
        support_grad=float(np.linalg.norm(g[S])),
        off_support=cfg.eta * g_off_max,
        alpha_s=kth_largest_abs(alpha, cfg.s),
        nnz=int(S.size),
        s=cfg.s,
        feasibility=abs(float(alpha @ d.y)),
        eta=cfg.eta,
        tol=cfg.eps if tol is None else tol,
        eta_star=eta_star(z, g, cfg.s),
    )
