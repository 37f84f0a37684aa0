"""Brute-force reference solutions for tiny problems.

Nothing here shares code with the Newton path: Q is formed densely and the
objective is summed elementwise from the dual penalty h.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataset import Dataset
from .linear import Penalties

__all__ = [
    "OracleResult",
    "OracleFailure",
    "OracleRefusal",
    "MAX_ORACLE_M",
    "MAX_ORACLE_S",
    "h_penalty",
    "dual_objective_elementwise",
    "solve_restricted",
    "enumerate_global",
]

MAX_ORACLE_M = 14
MAX_ORACLE_S = 4
KKT_TOL = 1e-12


class OracleFailure(RuntimeError):
    """The sign-pattern iteration found no consistent pattern."""


class OracleRefusal(ValueError):
    """Instance too large for exhaustive enumeration."""


@dataclass(frozen=True)
class OracleResult:
    best_support: np.ndarray
    best_alpha: np.ndarray
    best_b: float
    best_objective: float
    evaluated_supports: int


def h_penalty(t, p: Penalties) -> np.ndarray:
    """t^2/(2C) for t >= 0 and t^2/(2c) for t < 0, elementwise."""
    t = np.asarray(t, dtype=np.float64)
    return np.where(t >= 0, t * t / (2.0 * p.C), t * t / (2.0 * p.c))


def _dense_Q(d: Dataset) -> np.ndarray:
    return (d.dense() * d.y[:, None]).T


def dual_objective_elementwise(d: Dataset, alpha, p: Penalties) -> float:
    """``||Q alpha||^2/2 + sum_i (h(alpha_i) - alpha_i)`` with Q formed explicitly."""
    alpha = np.asarray(alpha, dtype=np.float64)
    v = _dense_Q(d) @ alpha
    return 0.5 * float(v @ v) + math.fsum(h_penalty(alpha, p) - alpha)


def _kkt_solve(G, yT, neg, p):
    """Minimizer of the quadratic piece selected by ``neg`` under <alpha, y> = 0."""
    k = yT.size
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G
    K[np.arange(k), np.arange(k)] += np.where(neg, 1.0 / p.c, 1.0 / p.C)
    K[:k, k] = yT
    K[k, :k] = yT
    rhs = np.append(np.ones(k), 0.0)
    sol = scipy.linalg.solve(K, rhs, assume_a="sym")
    # one step of refinement keeps the KKT residual near machine precision
    sol += scipy.linalg.solve(K, rhs - K @ sol, assume_a="sym")
    return sol[:k], float(sol[k])


def _consistent(a, neg, tol) -> bool:
    return bool(np.all(a[neg] <= tol) and np.all(a[~neg] >= -tol))


def _kkt_residual(G, yT, a, b, p) -> float:
    e = np.where(a >= 0, 1.0 / p.C, 1.0 / p.c)
    r = G @ a + e * a + b * yT - 1.0
    return float(np.linalg.norm(np.append(r, a @ yT)))


def solve_restricted(d: Dataset, T, p: Penalties):
    """Minimize D over ``supp(alpha) in T`` with ``<alpha, y> = 0``.

    Each sign pattern of alpha fixes E, turning the problem into one
    symmetric KKT solve. Patterns are updated from the signs of the last
    solution; on a repeat all ``2^|T|`` patterns are tried. Returns
    ``(alpha, b, objective)`` with alpha of length m.
    """
    T = np.unique(np.asarray(T, dtype=np.intp))
    alpha = np.zeros(d.m)
    if T.size == 0:
        return alpha, 0.0, 0.0
    Q = _dense_Q(d)[:, T]
    G = Q.T @ Q
    yT = d.y[T]
    scale = 1.0 + float(np.abs(G).max())
    tol = 1e-10 * scale

    neg = np.zeros(T.size, dtype=bool)
    seen = set()
    found = None
    while found is None:
        key = neg.tobytes()
        if key in seen:
            break
        seen.add(key)
        a, b = _kkt_solve(G, yT, neg, p)
        if _consistent(a, neg, tol):
            found = (a, b)
        neg = a < 0
    if found is None:
        for bits in itertools.product((False, True), repeat=T.size):
            pat = np.array(bits)
            a, b = _kkt_solve(G, yT, pat, p)
            if _consistent(a, pat, tol):
                found = (a, b)
                break
    if found is None:
        raise OracleFailure(f"no consistent sign pattern on |T| = {T.size}")
    a, b = found
    a = np.where(np.abs(a) <= KKT_TOL * scale, 0.0, a)
    res = _kkt_residual(G, yT, a, b, p)
    if res > 1e-9 * scale:
        raise OracleFailure(f"KKT residual {res:.3e} on |T| = {T.size}")
    alpha[T] = a
    return alpha, b, dual_objective_elementwise(d, alpha, p)


def enumerate_global(d: Dataset, s: int, p: Penalties) -> OracleResult:
    """Global minimum of D over ``||alpha||_0 <= s``, ``<alpha, y> = 0``.

    Every size-``min(s, m)`` index set is solved; smaller supports are covered
    since each restricted problem allows zeros. Refuses instances with
    ``m > 14`` or ``s > 4``.
    """
    if d.m > MAX_ORACLE_M or s > MAX_ORACLE_S:
        raise OracleRefusal(
            f"oracle limited to m <= {MAX_ORACLE_M}, s <= {MAX_ORACLE_S}; got m={d.m}, s={s}"
        )
    if s < 1:
        raise ValueError("s must be >= 1")
    k = min(s, d.m)
    best = None
    count = 0
    for T in itertools.combinations(range(d.m), k):
        alpha, b, obj = solve_restricted(d, T, p)
        count += 1
        if best is None or obj < best[3]:
            best = (np.array(T), alpha, b, obj)
    return OracleResult(best[0], best[1], best[2], best[3], count)
