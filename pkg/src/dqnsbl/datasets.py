"""Bundled small benchmarks and seeded synthetic generators."""

from __future__ import annotations

from importlib import resources
from typing import Tuple

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .data_io import SparseDataset, parse_libsvm

BUNDLED = {
    "breast": "breast-cancer.libsvm",
    "diabetes": "diabetes.libsvm",
    "iris": "iris.libsvm",
}


def bundled_path(name: str):
    try:
        fname = BUNDLED[name]
    except KeyError:
        raise ValueError(f"unknown bundled dataset {name!r}; have {sorted(BUNDLED)}") from None
    return resources.files("dqnsbl") / "data" / fname


def load_bundled(name: str) -> SparseDataset:
    path = bundled_path(name)
    return parse_libsvm(path.read_text(encoding="utf-8"), source=path.name)


def _labels(t) -> np.ndarray:
    return np.where(np.asarray(t) > 0, 1.0, -1.0)


def known_support(
    n_rows: int,
    n_features: int,
    n_informative: int = 5,
    seed: int = 0,
    scale: float = 2.0,
) -> Tuple[SparseDataset, np.ndarray, np.ndarray]:
    """Gaussian inputs, labels drawn from a logistic model on a few columns.

    Returns ``(dataset, support, w_true)``; ``support`` holds 0-based feature
    columns, labels are -1/+1.
    """
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(n_features, size=n_informative, replace=False))
    w_true = np.zeros(n_features)
    w_true[support] = scale * rng.choice([-1.0, 1.0], size=n_informative) * rng.uniform(
        0.75, 1.25, size=n_informative
    )
    X = rng.standard_normal((n_rows, n_features))
    t = rng.random(n_rows) < expit(X @ w_true)
    return SparseDataset(sp.csr_matrix(X), _labels(t)), support, w_true


def known_support_split(
    n_train: int, n_test: int, n_features: int, n_informative: int = 5, seed: int = 0,
    scale: float = 2.0,
):
    """Train/held-out pair drawn from one :func:`known_support` model."""
    ds, support, w_true = known_support(
        n_train + n_test, n_features, n_informative, seed, scale
    )
    idx = np.arange(ds.n_rows)
    return ds.subset(idx[:n_train]), ds.subset(idx[n_train:]), support, w_true


def uninformative(n_rows: int, n_features: int, seed: int = 0) -> SparseDataset:
    """Balanced labels independent of the Gaussian inputs."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_rows, n_features))
    t = rng.permutation(np.arange(n_rows) % 2)
    return SparseDataset(sp.csr_matrix(X), _labels(t))


def clusters(
    n_per_class: int, n_classes: int = 3, n_features: int = 2, seed: int = 0,
    spread: float = 0.3,
) -> SparseDataset:
    """Gaussian blobs on a circle of radius 3, labels 1..n_classes."""
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(n_classes) / n_classes
    centers = np.zeros((n_classes, n_features))
    centers[:, 0] = 3 * np.cos(angles)
    centers[:, 1 % n_features] += 3 * np.sin(angles)
    X = np.vstack(
        [c + spread * rng.standard_normal((n_per_class, n_features)) for c in centers]
    )
    labels = np.repeat(np.arange(1, n_classes + 1, dtype=np.float64), n_per_class)
    return SparseDataset(sp.csr_matrix(X), labels)


def sparse_text(
    n_rows: int,
    n_features: int,
    seed: int = 0,
    n_informative: int = 40,
    words_per_row: int = 30,
    strength: float = 1.5,
    flip: float = None,
    zipf: float = 1.0,
) -> Tuple[SparseDataset, np.ndarray]:
    """Bag-of-words style binary features with a sparse labelling rule.

    Word frequencies follow a Zipf law with exponent ``zipf``; rows are L2-normalised like
    tf-idf vectors. With ``flip=None`` labels are Bernoulli draws from a
    logistic model; otherwise they are the sign of the informative score
    with a fraction ``flip`` of them inverted (near-separable, as text
    corpora usually are). Returns ``(dataset, support)``.
    """
    rng = np.random.default_rng(seed)
    freq = 1.0 / np.arange(1, n_features + 1) ** zipf
    freq = freq[rng.permutation(n_features)]
    freq /= freq.sum()
    support = np.sort(rng.choice(np.argsort(-freq)[: max(4 * n_informative, 1)],
                                 size=n_informative, replace=False))
    w_true = np.zeros(n_features)
    w_true[support] = strength * rng.choice([-1.0, 1.0], size=n_informative)
    indptr = [0]
    indices = []
    for _ in range(n_rows):
        k = max(1, rng.poisson(words_per_row))
        cols = np.unique(rng.choice(n_features, size=k, p=freq))
        indices.append(cols)
        indptr.append(indptr[-1] + cols.size)
    indices = np.concatenate(indices)
    data = np.ones(indices.size)
    X = sp.csr_matrix((data, indices, np.asarray(indptr)), shape=(n_rows, n_features))
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    X = sp.csr_matrix(sp.diags(1.0 / norms) @ X)
    X.sort_indices()
    z = X @ w_true * np.sqrt(words_per_row)
    if flip is None:
        t = rng.random(n_rows) < expit(z - np.median(z))
    else:
        t = (z > np.median(z)) ^ (rng.random(n_rows) < flip)
    return SparseDataset(X, _labels(t)), support


def sparse_wide(
    n_rows: int, n_features: int, nnz_per_row: int = 20, seed: int = 0,
    n_informative: int = 10,
) -> SparseDataset:
    """Very wide uniform sparse matrix, for memory-scaling checks."""
    rng = np.random.default_rng(seed)
    indices = np.sort(
        rng.integers(0, n_features, size=(n_rows, nnz_per_row)), axis=1
    )
    rows = []
    for r in indices:
        rows.append(np.unique(r))
    indptr = np.concatenate(([0], np.cumsum([r.size for r in rows])))
    idx = np.concatenate(rows)
    data = rng.standard_normal(idx.size)
    X = sp.csr_matrix((data, idx, indptr), shape=(n_rows, n_features))
    w_true = np.zeros(n_features)
    w_true[rng.choice(n_features, size=n_informative, replace=False)] = 3.0
    t = rng.random(n_rows) < expit(X @ w_true)
    return SparseDataset(X, _labels(t))
