"""Classification datasets: libsvm IO, label/feature preprocessing, splits
and the two-Gaussian synthetic generator."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Union

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

__all__ = [
    "Dataset",
    "SplitDataset",
    "LibsvmParseError",
    "parse_libsvm",
    "load_libsvm",
    "dump_libsvm",
    "binarize_labels",
    "scale_features",
    "split_train_test",
    "gen_gaussian_2d",
    "FeatureScaler",
]

# CSR storage below this fraction of nonzeros
SPARSE_DENSITY = 0.25

POS_MEAN = (0.5, -3.0)
NEG_MEAN = (-0.5, 3.0)
CLASS_VARIANCE = (0.2, 3.0)


class LibsvmParseError(ValueError):
    """Malformed libsvm input; ``lineno`` is 1-based (0 for an empty stream)."""

    def __init__(self, message: str, lineno: int):
        super().__init__(f"line {lineno}: {message}" if lineno else message)
        self.lineno = lineno


def _as_storage(X):
    """Pick dense or CSR storage by nonzero density."""
    if sp.issparse(X):
        X = sp.csr_matrix(X, dtype=np.float64, copy=True)
        X.sum_duplicates()
        X.eliminate_zeros()
        size = X.shape[0] * X.shape[1]
        if size and X.nnz / size >= SPARSE_DENSITY:
            return X.toarray()
        return X
    X = np.array(X, dtype=np.float64)
    if X.size and np.count_nonzero(X) / X.size < SPARSE_DENSITY:
        return sp.csr_matrix(X)
    return np.ascontiguousarray(X)


def _freeze(a):
    if sp.issparse(a):
        for arr in (a.data, a.indices, a.indptr):
            arr.flags.writeable = False
    else:
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable ``m x n`` sample matrix with one label per row.

    ``X`` is stored densely or as CSR depending on density. Labels are kept
    verbatim; :func:`binarize_labels` maps them to ``{-1, +1}``, which the
    solvers require.
    """

    X: Union[np.ndarray, sp.csr_matrix]
    y: np.ndarray

    def __post_init__(self):
        X = _as_storage(self.X)
        y = np.array(self.y, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        m, n = X.shape
        if m < 1 or n < 1:
            raise ValueError(f"need m >= 1 and n >= 1, got {m} x {n}")
        if y.shape[0] != m:
            raise ValueError(f"{m} samples but {y.shape[0]} labels")
        values = X.data if sp.issparse(X) else X
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(y)):
            raise ValueError("features and labels must be finite")
        object.__setattr__(self, "X", _freeze(X))
        object.__setattr__(self, "y", _freeze(y))

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.X)

    @property
    def is_binary(self) -> bool:
        return bool(np.all(np.abs(self.y) == 1.0))

    def dense(self) -> np.ndarray:
        return self.X.toarray() if self.is_sparse else np.array(self.X)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.X[rows], self.y[rows])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.X.shape == other.X.shape
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.dense(), other.dense())
        )

    __hash__ = None


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    test: Dataset | None

    def __post_init__(self):
        if self.test is not None and self.test.n != self.train.n:
            raise ValueError("train and test feature counts differ")


def _parse_number(tok: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise LibsvmParseError(f"non-numeric token {tok!r}", lineno) from None
    if not math.isfinite(v):
        raise LibsvmParseError(f"non-finite value {tok!r}", lineno)
    return v


def parse_libsvm(stream: Union[BinaryIO, bytes, str, Iterable]) -> Dataset:
    """Read ``label idx:val ...`` lines into a :class:`Dataset`.

    Indices are 1-based and must be strictly increasing within a line; ``n`` is
    the largest index seen. Blank lines and ``#`` comments are skipped.
    """
    if isinstance(stream, (bytes, str)):
        stream = io.BytesIO(stream.encode() if isinstance(stream, str) else stream)
    labels: list[float] = []
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    n = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.decode() if isinstance(raw, bytes) else raw
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_number(tokens[0], lineno))
        last = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmParseError(f"expected idx:val, got {tok!r}", lineno)
            try:
                idx = int(idx_s)
            except ValueError:
                raise LibsvmParseError(f"non-integer index {idx_s!r}", lineno) from None
            if idx <= last:
                raise LibsvmParseError(
                    f"index {idx} not strictly increasing (previous {last})", lineno
                )
            last = idx
            val = _parse_number(val_s, lineno)
            if val != 0.0:
                indices.append(idx - 1)
                data.append(val)
        n = max(n, last)
        indptr.append(len(indices))
    if not labels:
        raise LibsvmParseError("empty input", 0)
    X = sp.csr_matrix(
        (np.array(data, dtype=np.float64), np.array(indices, dtype=np.intp), indptr),
        shape=(len(labels), max(n, 1)),
    )
    return Dataset(X, np.array(labels))


def load_libsvm(path) -> Dataset:
    with open(path, "rb") as fh:
        return parse_libsvm(fh)


def _format_label(v: float) -> str:
    if float(v).is_integer():
        return "%+d" % int(v)
    return "%.17g" % v


def dump_libsvm(d: Dataset, stream) -> None:
    """Write ``d`` in libsvm format (text stream), zeros omitted."""
    X = sp.csr_matrix(d.X)
    for i in range(d.m):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        parts = [_format_label(d.y[i])]
        for j, v in zip(X.indices[lo:hi], X.data[lo:hi]):
            if v != 0.0:
                parts.append("%d:%.17g" % (j + 1, v))
        stream.write(" ".join(parts) + "\n")


def binarize_labels(d: Dataset) -> Dataset:
    """Label 1 stays +1; every other class becomes -1."""
    return Dataset(d.X, np.where(d.y == 1.0, 1.0, -1.0))


def _column_range(X):
    if sp.issparse(X):
        lo = X.min(axis=0).toarray().ravel()
        hi = X.max(axis=0).toarray().ravel()
    else:
        lo, hi = X.min(axis=0), X.max(axis=0)
    return lo.astype(np.float64), hi.astype(np.float64)


def scale_features(d: Dataset) -> Dataset:
    """Map every column affinely onto [-1, 1]; constant columns become 0."""
    return Dataset(FeatureScaler(clip=True).fit_transform(d.X), d.y)


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Column-wise affine scaling onto ``[-1, 1]`` with constant columns sent to 0.

    Differs from ``MinMaxScaler(feature_range=(-1, 1))`` only in the
    constant-column convention. Values outside the fitted range are clipped
    when ``clip`` is true.
    """

    def __init__(self, clip=False):
        self.clip = clip

    def fit(self, X, y=None):
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        self.data_min_, self.data_max_ = _column_range(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "data_min_")
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, scaler was fitted with {self.n_features_in_}"
            )
        lo, hi = self.data_min_, self.data_max_
        span = hi - lo
        live = span > 0
        scale = np.where(live, 2.0 / np.where(live, span, 1.0), 0.0)
        shift = np.where(live, -lo * scale - 1.0, 0.0)
        dense = X.toarray() if sp.issparse(X) else X
        out = dense * scale + shift
        if self.clip:
            np.clip(out, -1.0, 1.0, out=out)
        return out


def split_train_test(d: Dataset, train_fraction: float, seed: int) -> SplitDataset:
    """Shuffle deterministically and put the first ``ceil(fraction * m)`` rows in train.

    ``seed=0`` keeps the original row order.
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    m = d.m
    n_train = min(m, math.ceil(train_fraction * m - 1e-9))
    n_train = max(n_train, 1)
    perm = np.arange(m) if seed == 0 else np.random.default_rng(seed).permutation(m)
    train = d.subset(perm[:n_train])
    test = d.subset(perm[n_train:]) if n_train < m else None
    return SplitDataset(train, test)


def _gaussian_half(rng, n_pos, n_neg):
    std = np.sqrt(CLASS_VARIANCE)
    pos = rng.normal(POS_MEAN, std, size=(n_pos, 2))
    neg = rng.normal(NEG_MEAN, std, size=(n_neg, 2))
    X = np.vstack([pos, neg])
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    perm = rng.permutation(n_pos + n_neg)
    return Dataset(X[perm], y[perm])


def gen_gaussian_2d(m: int, seed: int) -> SplitDataset:
    """Two-Gaussian data in the plane: ``m`` training and ``m`` testing samples.

    Positives are drawn from N((0.5, -3), diag(0.2, 3)), negatives from
    N((-0.5, 3), diag(0.2, 3)). Each half holds ``ceil(m/2)`` positives and
    ``floor(m/2)`` negatives, shuffled.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    n_pos = (m + 1) // 2
    train = _gaussian_half(rng, n_pos, m - n_pos)
    test = _gaussian_half(rng, n_pos, m - n_pos)
    return SplitDataset(train, test)
