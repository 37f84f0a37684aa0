"""Dual-side quantities built on Q = [y_1 x_1, ..., y_m x_m] (n x m).

Q is never formed. ``Q @ alpha`` touches only the rows of X on the support of
alpha, and ``Q.T @ v`` is ``y * (X @ v)``, so a gradient costs O(mn) and a
Hessian block on an s-set costs O(n s^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .dataset import Dataset

__all__ = [
    "Penalties",
    "DualIterate",
    "HessianBlock",
    "NumericalBreakdown",
    "EmptySupport",
    "apply_Q",
    "apply_Qt",
    "e_diag",
    "dual_objective",
    "grad_g",
    "hessian_block",
    "recover_primal",
    "primal_objective",
    "kth_largest_abs",
    "eta_star",
]


class NumericalBreakdown(ArithmeticError):
    """A factorization or Newton solve produced non-finite or invalid values."""


class EmptySupport(ValueError):
    """Bias recovery needs at least one nonzero dual coefficient."""


@dataclass(frozen=True)
class Penalties:
    """Loss weights: ``C`` on non-negative margin residuals, ``c`` on negative ones."""

    C: float = 0.25
    c: float = 0.0025

    def __post_init__(self):
        if not (self.C > self.c > 0):
            raise ValueError(f"penalties need C > c > 0, got C={self.C}, c={self.c}")


@dataclass(frozen=True)
class DualIterate:
    alpha: np.ndarray
    b: float

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.ndim != 1:
            raise ValueError("alpha must be a vector")
        if not (np.all(np.isfinite(alpha)) and np.isfinite(self.b)):
            raise ValueError("dual iterate must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "b", float(self.b))

    @classmethod
    def zeros(cls, m: int, b: float = 0.0) -> "DualIterate":
        return cls(np.zeros(m), b)

    def stacked(self) -> np.ndarray:
        return np.append(self.alpha, self.b)


@dataclass(frozen=True)
class HessianBlock:
    """``theta = Q_T^T Q_T + E(alpha)_TT`` with its Cholesky factor."""

    theta: np.ndarray
    chol: tuple
    T: np.ndarray

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self.chol, rhs, check_finite=False)


def _check_alpha(d: Dataset, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (d.m,):
        raise ValueError(f"alpha has shape {alpha.shape}, expected ({d.m},)")
    return alpha


def _rows(d: Dataset, T) -> np.ndarray:
    """Dense rows ``X[T]`` as an ``|T| x n`` array."""
    sub = d.X[T]
    return sub.toarray() if sp.issparse(sub) else sub


def apply_Q(d: Dataset, alpha) -> np.ndarray:
    """``sum_i y_i alpha_i x_i``, reading only rows where alpha is nonzero."""
    alpha = _check_alpha(d, alpha)
    T = np.flatnonzero(alpha)
    coef = d.y[T] * alpha[T]
    if sp.issparse(d.X):
        return np.asarray(d.X[T].T @ coef).ravel()
    return d.X[T].T @ coef


def apply_Qt(d: Dataset, v) -> np.ndarray:
    """``Q^T v = y * (X v)``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (d.n,):
        raise ValueError(f"v has shape {v.shape}, expected ({d.n},)")
    return d.y * np.asarray(d.X @ v).ravel()


def e_diag(alpha, p: Penalties) -> np.ndarray:
    """Diagonal of E(alpha): 1/C where alpha_i >= 0, 1/c where alpha_i < 0."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return np.where(alpha >= 0, 1.0 / p.C, 1.0 / p.c)


def dual_objective(d: Dataset, alpha, p: Penalties) -> float:
    """D(alpha) = ||Q alpha||^2 / 2 + <E(alpha) alpha, alpha> / 2 - <1, alpha>."""
    alpha = _check_alpha(d, alpha)
    w = apply_Q(d, alpha)
    return 0.5 * float(w @ w) + 0.5 * float(e_diag(alpha, p) @ (alpha * alpha)) - float(
        alpha.sum()
    )


def grad_g(d: Dataset, z: DualIterate, p: Penalties) -> np.ndarray:
    """Lagrangian gradient ``g(z) = Q^T Q alpha + E(alpha) alpha - 1 + b y``."""
    alpha = _check_alpha(d, z.alpha)
    return apply_Qt(d, apply_Q(d, alpha)) + e_diag(alpha, p) * alpha - 1.0 + z.b * d.y


def hessian_block(d: Dataset, alpha, T, p: Penalties) -> HessianBlock:
    """Principal block of H(alpha) on ``T``, assembled densely and Cholesky-factored."""
    alpha = _check_alpha(d, alpha)
    T = np.asarray(T, dtype=np.intp)
    rows = d.X[T]
    gram = rows @ rows.T
    if sp.issparse(gram):
        gram = gram.toarray()
    yT = d.y[T]
    theta = gram * np.outer(yT, yT)
    theta[np.diag_indices_from(theta)] += e_diag(alpha[T], p)
    try:
        chol = scipy.linalg.cho_factor(theta, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        diag = np.diag(theta)
        raise NumericalBreakdown(
            f"Cholesky of the {len(T)}x{len(T)} Hessian block failed "
            f"(diag range [{diag.min():.3g}, {diag.max():.3g}]): {exc}"
        ) from exc
    return HessianBlock(theta, chol, T)


def recover_primal(d: Dataset, alpha, p: Penalties):
    """Primal ``(w, b_hat)`` from a dual solution.

    ``w = Q alpha``. ``b_hat`` averages ``y_i - y_i (H alpha)_i`` over the
    support S, which equals ``<y_S, 1 - H_S alpha_S> / |S|``. Raises
    :class:`EmptySupport` when alpha is zero; ``w`` is then 0 and callers fall
    back to the solver's multiplier.
    """
    alpha = _check_alpha(d, alpha)
    w = apply_Q(d, alpha)
    S = np.flatnonzero(alpha)
    if S.size == 0:
        raise EmptySupport("alpha has empty support")
    H_alpha_S = d.y[S] * (_rows(d, S) @ w) + e_diag(alpha[S], p) * alpha[S]
    b_hat = float(d.y[S] @ (1.0 - H_alpha_S)) / S.size
    return w, b_hat


def primal_objective(d: Dataset, w, b: float, p: Penalties) -> float:
    """``||w||^2 / 2 + sum_i l(1 - y_i(<w, x_i> + b))`` with the asymmetric squared loss."""
    w = np.asarray(w, dtype=np.float64)
    t = 1.0 - d.y * (np.asarray(d.X @ w).ravel() + b)
    weight = np.where(t >= 0, p.C, p.c)
    return 0.5 * float(w @ w) + 0.5 * float(weight @ (t * t))


def kth_largest_abs(v, k: int) -> float:
    """k-th largest entry of |v| (1-based k); 0 when ``k > len(v)``."""
    a = np.abs(np.asarray(v, dtype=np.float64))
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > a.size:
        return 0.0
    return float(np.partition(a, a.size - k)[a.size - k])


def eta_star(z: DualIterate, g, s: int) -> float:
    """Step-size bound ``||alpha||_[s] / ||g||_[1]`` when alpha has exactly s
    nonzeros, +inf otherwise (and when g vanishes)."""
    alpha = z.alpha
    if np.count_nonzero(alpha) != s:
        return float("inf")
    gmax = float(np.max(np.abs(g))) if np.size(g) else 0.0
    if gmax == 0.0:
        return float("inf")
    return kth_largest_abs(alpha, s) / gmax
