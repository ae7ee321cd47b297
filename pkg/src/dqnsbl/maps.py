"""Basis expansions: identity, Gaussian kernel on reference rows, random sigmoid layer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

LINEAR = "linear"
RVM = "rvm_kernel"
SBELM = "sbelm_layer"
KINDS = (LINEAR, RVM, SBELM)

# 2^-5 .. 2^5, doubling
SIGMA_GRID = tuple(2.0 ** k for k in range(-5, 6))
LAMBDA_GRID = SIGMA_GRID
HIDDEN_GRID_SMALL = (50, 100, 150, 200)
HIDDEN_GRID_LARGE = (100, 500, 900, 1300)
SEED_GRID = (1, 2, 3, 4, 5)
HIDDEN_PRESETS = {"small": HIDDEN_GRID_SMALL, "large": HIDDEN_GRID_LARGE}


def _dense(X) -> np.ndarray:
    if sp.issparse(X):
        return X.toarray()
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


def sq_distances(X, R) -> np.ndarray:
    """Squared Euclidean distances between rows of X and rows of R, floored at 0."""
    X = _dense(X)
    R = _dense(R)
    d = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(R * R, axis=1)[None, :]
        - 2.0 * (X @ R.T)
    )
    return np.maximum(d, 0.0)


def gaussian_kernel_map(references, X, sigma: float) -> np.ndarray:
    """``exp(-||x - r_j||^2 / sigma^2)`` for every row ``x`` of X and reference ``r_j``."""
    if not sigma > 0:
        raise ValueError("kernel radius must be positive")
    return np.exp(-sq_distances(X, references) / (sigma * sigma))


def random_layer_weights(n_hidden: int, seed: int, n_inputs: int):
    """Synapses ``(n_hidden, n_inputs)`` then biases ``(n_hidden,)``, U[-1, 1].

    One PCG64 stream seeded with ``seed`` fills the synapse block row-major and
    then the biases, so ``(n_hidden, seed, n_inputs)`` fixes the layer.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    a = rng.uniform(-1.0, 1.0, size=n_hidden * n_inputs).reshape(n_hidden, n_inputs)
    b = rng.uniform(-1.0, 1.0, size=n_hidden)
    return a, b


def random_layer_map(X, synapses, biases) -> np.ndarray:
    """Sigmoid activations ``1 / (1 + exp(-(a.x + b)))``, one column per hidden node."""
    X = _dense(X)
    return expit(X @ synapses.T + biases)


@dataclass
class FeatureMap:
    """Parameters of one basis expansion.

    ``references`` (rvm) holds the scaled rows kernels are centred on; for the
    random layer only ``n_hidden``, ``seed`` and ``n_inputs`` are stored and the
    weights are regenerated on demand.
    """

    kind: str
    n_inputs: int
    sigma: Optional[float] = None
    references: Optional[np.ndarray] = None
    n_hidden: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature map {self.kind!r}")
        if self.kind == RVM:
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("kernel map needs sigma > 0")
            if self.references is None or len(self.references) == 0:
                raise ValueError("kernel map needs reference rows")
        if self.kind == SBELM and (self.n_hidden is None or self.seed is None):
            raise ValueError("random layer needs n_hidden and seed")
        self._layer = None

    @property
    def n_basis(self) -> int:
        if self.kind == LINEAR:
            return self.n_inputs
        if self.kind == RVM:
            return len(self.references)
        return self.n_hidden

    def layer(self):
        if self._layer is None:
            self._layer = random_layer_weights(self.n_hidden, self.seed, self.n_inputs)
        return self._layer

    def transform(self, X, columns=None):
        """Basis values (without bias) for rows X; ``columns`` selects basis functions."""
        if self.kind == LINEAR:
            if columns is None:
                return X
            return X[:, columns]
        if self.kind == RVM:
            refs = self.references if columns is None else self.references[columns]
            return gaussian_kernel_map(refs, X, self.sigma)
        a, b = self.layer()
        if columns is not None:
            a, b = a[columns], b[columns]
        return random_layer_map(X, a, b)
