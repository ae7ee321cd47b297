"""Negative log-posterior of the sparse Bayesian logistic model.

    L(w) = -sum_i [t_i log y_i + (1 - t_i) log(1 - y_i)] + 1/2 w^T A w,
    y_i = sigmoid(x_i^T w),  A = diag(alpha)

Columns are addressed in an *extended* index space where 0 is the bias
(constant 1, never stored) and ``k + 1`` is column ``k`` of the base matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import OracleGuardError

PROB_EPS = 1e-12
DENSE_GUARD = 5000


def sigmoid(z):
    """Logistic function, overflow-free for any finite input."""
    return expit(z)


def clamped_sigmoid(z):
    """Sigmoid clipped to ``[PROB_EPS, 1 - PROB_EPS]``; safe to feed into logs."""
    return np.clip(expit(z), PROB_EPS, 1.0 - PROB_EPS)


class DesignMatrix:
    """Basis evaluations with a virtual bias column and an active column set.

    Parameters
    ----------
    base : ndarray or scipy.sparse matrix
        ``N x M`` basis values without the bias column. Sparse input is kept
        by reference; restricting the active set never copies it.
    active : array of int, optional
        Extended column indices (0 = bias). Defaults to all ``M + 1``.
    """

    def __init__(self, base, active=None):
        if sp.issparse(base):
            base = base.tocsr()
            self._sparse = True
        else:
            base = np.asarray(base, dtype=np.float64)
            if base.ndim != 2:
                raise ValueError("design base must be two-dimensional")
            self._sparse = False
        self.base = base
        n_total = base.shape[1] + 1
        if active is None:
            active = np.arange(n_total)
        active = np.asarray(active, dtype=np.intp)
        if active.size and (active.min() < 0 or active.max() >= n_total):
            raise ValueError("active column index out of range")
        if np.any(np.diff(active) <= 0):
            raise ValueError("active columns must be strictly ascending")
        self.active = active
        self._has_bias = bool(active.size and active[0] == 0)
        self._feat = active[1:] - 1 if self._has_bias else active - 1
        if self._sparse:
            self._cols = None
        elif self._feat.size == base.shape[1]:
            self._cols = base
        else:
            self._cols = base[:, self._feat]

    @property
    def n_rows(self) -> int:
        return self.base.shape[0]

    @property
    def n_total(self) -> int:
        """Number of columns including the bias."""
        return self.base.shape[1] + 1

    @property
    def n_active(self) -> int:
        return self.active.size

    @property
    def is_sparse(self) -> bool:
        return self._sparse

    @property
    def has_bias(self) -> bool:
        return self._has_bias

    def restrict(self, keep) -> "DesignMatrix":
        """Keep a subset of the current active columns (bool mask or positions)."""
        keep = np.asarray(keep)
        if keep.dtype == bool:
            if keep.size != self.n_active:
                raise ValueError("mask length differs from active column count")
            new_active = self.active[keep]
        else:
            new_active = self.active[np.sort(keep)]
        return DesignMatrix(self.base, new_active)

    def _split(self, w):
        if self._has_bias:
            return w[0], w[1:]
        return 0.0, w

    def matvec(self, w: np.ndarray) -> np.ndarray:
        """Linear predictor ``X_active @ w`` for every row."""
        bias, wf = self._split(w)
        if self._sparse:
            full = np.zeros(self.base.shape[1])
            full[self._feat] = wf
            z = self.base @ full
        else:
            z = self._cols @ wf
        return z + bias

    def rmatvec(self, r: np.ndarray) -> np.ndarray:
        """``X_active^T @ r``."""
        if self._sparse:
            g = (self.base.T @ r)[self._feat]
        else:
            g = self._cols.T @ r
        if self._has_bias:
            return np.concatenate(([r.sum()], g))
        return g

    def dense(self) -> np.ndarray:
        """Explicit ``N x n_active`` block, bias included (dense oracle path only)."""
        if self.n_active > DENSE_GUARD:
            raise OracleGuardError(
                f"dense design requested for {self.n_active} active columns "
                f"(limit {DENSE_GUARD})"
            )
        cols = self.base[:, self._feat]
        cols = cols.toarray() if sp.issparse(cols) else np.asarray(cols)
        if self._has_bias:
            cols = np.hstack([np.ones((self.n_rows, 1)), cols])
        return cols


@dataclass
class MapObjective:
    """Negative log-posterior over the active columns of ``design``."""

    design: DesignMatrix
    t: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.t.shape != (self.design.n_rows,):
            raise ValueError(
                f"target length {self.t.size} != design rows {self.design.n_rows}"
            )
        if self.alpha.shape != (self.design.n_active,):
            raise ValueError(
                f"alpha length {self.alpha.size} != active columns {self.design.n_active}"
            )
        if np.any(self.alpha <= 0):
            raise ValueError("all alpha must be positive")

    @property
    def dim(self) -> int:
        return self.design.n_active

    def _check(self, w):
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"weight length {w.size} != active dimension {self.dim}")
        return w

    def _nll(self, z):
        # -log y = softplus(-z) and -log(1 - y) = softplus(z), computed without
        # forming 1 - y; the bounds reproduce clipping y to [PROB_EPS, 1 - PROB_EPS]
        t = self.t
        lo, hi = -np.log1p(-PROB_EPS), -np.log(PROB_EPS)
        neg_log_y = np.clip(np.logaddexp(0.0, -z), lo, hi)
        neg_log_1my = np.clip(np.logaddexp(0.0, z), lo, hi)
        return np.sum(t * neg_log_y + (1.0 - t) * neg_log_1my)

    def value(self, w) -> float:
        w = self._check(w)
        z = self.design.matvec(w)
        return float(self._nll(z) + 0.5 * np.dot(self.alpha * w, w))

    def grad(self, w) -> np.ndarray:
        w = self._check(w)
        y = sigmoid(self.design.matvec(w))
        return self.design.rmatvec(y - self.t) + self.alpha * w

    def value_and_grad(self, w):
        w = self._check(w)
        z = self.design.matvec(w)
        y = sigmoid(z)
        aw = self.alpha * w
        f = float(self._nll(z) + 0.5 * np.dot(aw, w))
        g = self.design.rmatvec(y - self.t) + aw
        return f, g

    def hessian(self, w) -> np.ndarray:
        """``X^T beta X + A`` with ``beta_ii = y_i (1 - y_i)``; small problems only."""
        w = self._check(w)
        if self.dim > DENSE_GUARD:
            raise OracleGuardError(
                f"Hessian requested for {self.dim} active columns (limit {DENSE_GUARD})"
            )
        X = self.design.dense()
        y = sigmoid(X @ w)
        beta = y * (1.0 - y)
        H = X.T @ (beta[:, None] * X)
        H = 0.5 * (H + H.T)  # exact symmetry; BLAS may differ in the last bit
        H[np.diag_indices_from(H)] += self.alpha
        return H


def neg_log_posterior(w, obj: MapObjective) -> float:
    return obj.value(w)


def gradient(w, obj: MapObjective) -> np.ndarray:
    return obj.grad(w)


def hessian(w, obj: MapObjective) -> np.ndarray:
    return obj.hessian(w)
