"""Hard thresholding onto ``{u : ||u||_0 <= s}`` with a fixed tie-break."""

from __future__ import annotations

import numpy as np

__all__ = ["top_s_indices", "hard_threshold", "is_member_Ts"]

MEMBER_TOL = 1e-12


def _check_s(s: int, m: int) -> None:
    if not 1 <= s <= m:
        raise ValueError(f"sparsity level s={s} outside [1, {m}]")


def top_s_indices(v, s: int) -> np.ndarray:
    """Indices of the ``s`` largest ``|v_i|``, ascending.

    Ties at the threshold go to the smaller index, so the result is one fixed
    member of the family of admissible index sets. Runs in O(m + s log s).
    """
    a = np.abs(np.asarray(v, dtype=np.float64))
    m = a.size
    _check_s(s, m)
    if s == m:
        return np.arange(m)
    # value of the s-th largest magnitude
    kth = np.partition(a, m - s)[m - s]
    above = np.flatnonzero(a > kth)
    tied = np.flatnonzero(a == kth)[: s - above.size]
    return np.sort(np.concatenate([above, tied]))


def hard_threshold(v, s: int) -> np.ndarray:
    """Keep the entries on :func:`top_s_indices` and zero the rest."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros_like(v)
    T = top_s_indices(v, s)
    out[T] = v[T]
    return out


def is_member_Ts(T, v) -> bool:
    """Whether every ``|v_i|``, i in T, is at least every ``|v_j|`` outside T (up to 1e-12)."""
    a = np.abs(np.asarray(v, dtype=np.float64))
    T = np.asarray(T, dtype=np.intp)
    if T.size == 0 or T.size > a.size or np.unique(T).size != T.size:
        return False
    inside = np.zeros(a.size, dtype=bool)
    inside[T] = True
    if inside.all():
        return True
    return bool(a[inside].min() >= a[~inside].max() - MEMBER_TOL)
