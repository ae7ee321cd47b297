"""LIBSVM parsing, feature scaling, stratified splits and one-vs-one decomposition.

Rows are held in a CSR matrix with 0-based columns; files use 1-based indices.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import DataFormatError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SparseDataset:
    """Immutable row-sparse observation matrix with one label per row.

    Attributes
    ----------
    X : scipy.sparse.csr_matrix
        ``n_rows x n_features`` matrix, 0-based columns.
    labels : ndarray of float
        Class identifier of every row, kept as parsed.
    """

    X: sp.csr_matrix
    labels: np.ndarray

    def __post_init__(self):
        if self.X.shape[0] != len(self.labels):
            raise ValueError(
                f"labels length {len(self.labels)} != row count {self.X.shape[0]}"
            )

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def row(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Return ``(indices, values)`` of row ``i``; indices are 0-based."""
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return self.X.indices[lo:hi], self.X.data[lo:hi]

    def subset(self, idx) -> "SparseDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return SparseDataset(self.X[idx], self.labels[idx])

    def with_n_features(self, n_features: int) -> "SparseDataset":
        """Widen the column space (narrowing is refused)."""
        if n_features < self.n_features:
            raise ValueError(
                f"dataset has {self.n_features} features, cannot narrow to {n_features}"
            )
        if n_features == self.n_features:
            return self
        X = sp.csr_matrix(
            (self.X.data, self.X.indices, self.X.indptr),
            shape=(self.n_rows, n_features),
        )
        return SparseDataset(X, self.labels)

    def same_as(self, other: "SparseDataset") -> bool:
        """Exact structural equality (indices, stored values, labels, width)."""
        return (
            self.X.shape == other.X.shape
            and np.array_equal(self.X.indptr, other.X.indptr)
            and np.array_equal(self.X.indices, other.X.indices)
            and np.array_equal(self.X.data, other.X.data)
            and np.array_equal(self.labels, other.labels)
        )


def _as_lines(text) -> Iterable[str]:
    if isinstance(text, str):
        return io.StringIO(text)
    return text


def parse_libsvm(
    text: Union[str, Iterable[str]],
    n_features: int = None,
    source: str = None,
) -> SparseDataset:
    """Parse ``label idx:val idx:val ...`` lines.

    Parameters
    ----------
    text : str or iterable of str
        Whole file contents or an open text stream.
    n_features : int, optional
        Force the column count (must be >= the largest index seen).
    source : str, optional
        File name used in error messages.

    Raises
    ------
    DataFormatError
        On non-numeric tokens, missing ``:``, indices below 1 or not strictly
        ascending. The message carries the 1-based line number.
    """
    labels: List[float] = []
    indptr = [0]
    indices: List[int] = []
    values: List[float] = []
    max_index = 0
    for line_no, raw in enumerate(_as_lines(text), start=1):
        parts = raw.split()
        if not parts:
            continue
        try:
            labels.append(float(parts[0]))
        except ValueError:
            raise DataFormatError(f"invalid label {parts[0]!r}", line_no, source) from None
        prev = 0
        for tok in parts[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise DataFormatError(f"invalid token {tok!r}", line_no, source)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise DataFormatError(f"invalid token {tok!r}", line_no, source) from None
            if idx < 1:
                raise DataFormatError(f"feature index {idx} < 1", line_no, source)
            if idx <= prev:
                raise DataFormatError(
                    f"feature indices not ascending ({prev} then {idx})", line_no, source
                )
            prev = idx
            indices.append(idx - 1)
            values.append(val)
        max_index = max(max_index, prev)
        indptr.append(len(indices))

    if n_features is None:
        n_features = max_index
    elif n_features < max_index:
        raise DataFormatError(
            f"feature index {max_index} exceeds requested width {n_features}", source=source
        )
    X = sp.csr_matrix(
        (
            np.asarray(values, dtype=np.float64),
            np.asarray(indices, dtype=np.int32),
            np.asarray(indptr, dtype=np.int64),
        ),
        shape=(len(labels), n_features),
    )
    return SparseDataset(X, np.asarray(labels, dtype=np.float64))


def load_libsvm(path, n_features: int = None) -> SparseDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh, n_features=n_features, source=str(path))


def format_label(label: float) -> str:
    label = float(label)
    if label.is_integer():
        return str(int(label))
    return repr(label)


def dump_libsvm(ds: SparseDataset) -> str:
    """Serialize to LIBSVM text; ``parse_libsvm(dump_libsvm(ds))`` reproduces ``ds``
    (up to the width, which is re-derived from the largest stored index)."""
    X = ds.X if ds.X.has_sorted_indices else ds.X.sorted_indices()
    out = []
    for i in range(ds.n_rows):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        idx, val = X.indices[lo:hi], X.data[lo:hi]
        toks = [format_label(ds.labels[i])]
        toks.extend(f"{j + 1}:{v!r}" for j, v in zip(idx.tolist(), val.tolist()))
        out.append(" ".join(toks))
    return "\n".join(out) + ("\n" if out else "")


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-feature affine map of the training range onto [-1, 1]."""

    minimum: np.ndarray
    maximum: np.ndarray

    @property
    def n_features(self) -> int:
        return len(self.minimum)

    def transform_dense(self, X) -> np.ndarray:
        """Scale rows (sparse or dense); implicit zeros are scaled as the value 0."""
        if sp.issparse(X):
            X = X.toarray()
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] > self.n_features:
            raise ValueError(
                f"data has {X.shape[1]} features, scaler was fit on {self.n_features}"
            )
        if X.shape[1] < self.n_features:
            X = np.pad(X, ((0, 0), (0, self.n_features - X.shape[1])))
        span = self.maximum - self.minimum
        ok = span > 0
        out = np.zeros_like(X)
        out[:, ok] = 2.0 * (X[:, ok] - self.minimum[ok]) / span[ok] - 1.0
        return out


def fit_scaler(ds: SparseDataset) -> Scaler:
    if ds.n_rows == 0:
        z = np.zeros(ds.n_features)
        return Scaler(z, z.copy())
    lo = np.asarray(ds.X.min(axis=0).todense()).ravel().astype(np.float64)
    hi = np.asarray(ds.X.max(axis=0).todense()).ravel().astype(np.float64)
    return Scaler(lo, hi)


def apply_scaler(scaler: Scaler, ds: SparseDataset) -> SparseDataset:
    """Scale ``ds``; test values outside the fit range are not clipped."""
    dense = scaler.transform_dense(ds.X)
    return SparseDataset(sp.csr_matrix(dense), ds.labels)


def kfold_split(
    ds: SparseDataset, k: int, seed: int
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold partition.

    Rows of each class are shuffled, the classes are concatenated and
    positions are dealt round-robin into folds, so both the per-class and
    the total fold sizes differ by at most one. If some class has fewer than
    ``k`` rows a plain shuffled split is used instead (with a warning).
    """
    n = ds.n_rows
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of rows ({n})")
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(ds.labels, return_counts=True)
    if counts.min() < k:
        logger.warning(
            "class with %d rows is smaller than k=%d; using a non-stratified split",
            counts.min(), k,
        )
        order = rng.permutation(n)
    else:
        order = np.concatenate(
            [rng.permutation(np.flatnonzero(ds.labels == c)) for c in classes]
        )
    fold_of = np.empty(n, dtype=np.intp)
    fold_of[order] = np.arange(n) % k
    folds = []
    for f in range(k):
        val = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        folds.append((train, val))
    return folds


def split_indices(
    labels: np.ndarray, train_fraction: float, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(labels, return_counts=True)
    target = int(round(train_fraction * len(labels)))
    quota = train_fraction * counts
    n_train = np.floor(quota).astype(int)
    # largest remainder so the class quotas add up to the overall target
    short = target - n_train.sum()
    if short > 0:
        order = np.argsort(-(quota - n_train), kind="stable")
        n_train[order[:short]] += 1
    n_train = np.maximum(n_train, 1)
    train, test = [], []
    for c, m in zip(classes, n_train):
        idx = rng.permutation(np.flatnonzero(labels == c))
        train.append(idx[:m])
        test.append(idx[m:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def train_test_split(
    ds: SparseDataset, train_fraction: float, seed: int
) -> Tuple[SparseDataset, SparseDataset]:
    """Stratified random split; every class keeps at least one training row."""
    tr, te = split_indices(ds.labels, train_fraction, seed)
    return ds.subset(tr), ds.subset(te)


@dataclass(frozen=True, eq=False)
class BinaryProblem:
    """Rows of two classes with ``class_a`` mapped to 1 and ``class_b`` to 0."""

    dataset: SparseDataset
    rows: np.ndarray
    targets: np.ndarray
    class_pair: Tuple[float, float]

    @property
    def X(self) -> sp.csr_matrix:
        return self.dataset.X[self.rows]


def binary_problem(ds: SparseDataset, class_a: float, class_b: float) -> BinaryProblem:
    rows = np.flatnonzero((ds.labels == class_a) | (ds.labels == class_b))
    targets = (ds.labels[rows] == class_a).astype(np.float64)
    return BinaryProblem(ds, rows, targets, (float(class_a), float(class_b)))


def ovo_decompose(ds: SparseDataset) -> List[BinaryProblem]:
    """One binary problem per unordered class pair.

    Pairs are enumerated in ascending order of ``(smaller, larger)``; in each
    pair the larger identifier is ``class_a`` (target 1), matching the binary
    convention "larger label is the positive class".
    """
    classes = ds.classes
    if len(classes) < 2:
        raise ValueError("one-vs-one decomposition needs at least two classes")
    return [binary_problem(ds, hi, lo) for lo, hi in combinations(classes, 2)]


def pair_count(n_classes: int) -> int:
    return n_classes * (n_classes - 1) // 2


def class_counts(labels: Sequence[float]) -> dict:
    classes, counts = np.unique(labels, return_counts=True)
    return {float(c): int(n) for c, n in zip(classes, counts)}
