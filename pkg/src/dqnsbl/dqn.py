"""Diagonal quasi-Newton minimization.

The inverse Hessian is approximated by a positive diagonal ``b``; after each
step ``delta`` with gradient change ``gamma`` every entry is refreshed from the
diagonal of the BFGS update of ``B^{-1}``::

    b'_k = 1 / (1/b_k + gamma_k^2 / (gamma.delta) - delta_k^2 / (b_k^2 * delta.B^{-1}.delta))

Storage and work per iteration are linear in the dimension.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DqnConfig:
    grad_tolerance: float = 1e-1
    max_iterations: int = 100
    curvature_floor: float = 1e-10
    diag_clamp: Tuple[float, float] = (1e-8, 1e8)
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_steps: int = 20
    initial_step: float = 1.0
    max_step: float = 1e10
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("line-search constants must satisfy 0 < c1 < c2 < 1")
        lo, hi = self.diag_clamp
        if not 0.0 < lo < hi:
            raise ValueError("diag_clamp must satisfy 0 < low < high")
        if self.grad_tolerance <= 0:
            raise ValueError("grad_tolerance must be positive")
        if self.max_iterations < 0 or self.max_ls_steps < 1:
            raise ValueError("iteration limits must be non-negative")


class TraceRecord(NamedTuple):
    iteration: int
    value: float
    grad_norm: float
    step: float


@dataclass
class DqnResult:
    w: np.ndarray
    diag_b: np.ndarray
    iterations: int
    final_grad_norm: float
    converged: bool
    value: float
    line_search_failed: bool = False
    trace: List[TraceRecord] = field(default_factory=list)


def diag_bfgs_update(b, delta, gamma, cfg: DqnConfig = DqnConfig()) -> np.ndarray:
    """Element-wise inverse-Hessian diagonal update.

    The update is skipped (``b`` returned as is) when ``gamma.delta`` does not
    exceed ``cfg.curvature_floor``. Entries that come out non-finite or
    non-positive keep their old value; the rest are clamped to ``cfg.diag_clamp``.
    """
    b = np.asarray(b, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if not (b.shape == delta.shape == gamma.shape) or b.ndim != 1:
        raise ValueError(
            f"dimension mismatch: b {b.shape}, delta {delta.shape}, gamma {gamma.shape}"
        )
    curv = float(np.dot(gamma, delta))
    if not curv > cfg.curvature_floor:
        return b
    s = float(np.sum(delta * delta / b))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv = 1.0 / b + gamma * gamma / curv - delta * delta / (b * b * s)
        new = 1.0 / inv
    bad = ~np.isfinite(new) | (new <= 0)
    new = np.where(bad, b, new)
    lo, hi = cfg.diag_clamp
    return np.clip(new, lo, hi)


@dataclass
class LineSearchResult:
    step: float
    value: float
    grad: Optional[np.ndarray]
    n_evals: int
    strong: bool
    armijo: bool


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating two points with slopes, or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if not (disc >= 0 and math.isfinite(disc)):
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0 or not math.isfinite(denom):
        return None
    x = b - (b - a) * (db + d2 - d1) / denom
    return x if math.isfinite(x) else None


def wolfe_line_search(obj, w, p, cfg: DqnConfig = DqnConfig(), f0=None, g0=None):
    """Bracketing-and-zoom search for a step meeting the strong Wolfe conditions.

    ``p`` must be a descent direction. ``f0``/``g0`` are the value and gradient
    at ``w`` when already known. If no strong-Wolfe step turns up within
    ``cfg.max_ls_steps`` evaluations the lowest Armijo-satisfying trial is
    returned with ``strong=False``; if there is none, ``armijo=False`` and
    ``step=0``.
    """
    if f0 is None or g0 is None:
        f0, g0 = obj.value_and_grad(w)
    d0 = float(np.dot(g0, p))
    if not d0 < 0:
        raise ValueError("line search needs a descent direction")
    c1, c2 = cfg.c1, cfg.c2
    evals = 0
    best = None

    def phi(eta):
        nonlocal evals, best
        evals += 1
        f, g = obj.value_and_grad(w + eta * p)
        d = float(np.dot(g, p))
        ok = math.isfinite(f) and f <= f0 + c1 * eta * d0
        if ok and (best is None or f < best[1]):
            best = (eta, f, g)
        return f, g, d, ok

    def done(eta, f, g):
        return LineSearchResult(eta, f, g, evals, True, True)

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while evals < cfg.max_ls_steps:
            width = hi - lo
            trial = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            left, right = sorted((lo + 0.1 * width, hi - 0.1 * width))
            if trial is None or not left <= trial <= right:
                trial = lo + 0.5 * width
            f, g, d, ok = phi(trial)
            if not ok or f >= f_lo:
                hi, f_hi, d_hi = trial, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return done(trial, f, g)
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = trial, f, d
        return None

    prev, f_prev, d_prev = 0.0, f0, d0
    eta = cfg.initial_step
    res = None
    while evals < cfg.max_ls_steps:
        f, g, d, ok = phi(eta)
        if not ok or (evals > 1 and f >= f_prev):
            if not math.isfinite(f):
                f, d = math.inf, math.inf
            res = zoom(prev, f_prev, d_prev, eta, f, d)
            break
        if abs(d) <= -c2 * d0:
            res = done(eta, f, g)
            break
        if d >= 0:
            res = zoom(eta, f, d, prev, f_prev, d_prev)
            break
        prev, f_prev, d_prev = eta, f, d
        eta = min(2.0 * eta, cfg.max_step)
    if res is not None:
        return res
    if best is not None:
        return LineSearchResult(best[0], best[1], best[2], evals, False, True)
    return LineSearchResult(0.0, f0, None, evals, False, False)


def backtracking_armijo(obj, w, p, cfg: DqnConfig, f0, g0):
    d0 = float(np.dot(g0, p))
    eta = cfg.initial_step
    for _ in range(cfg.max_backtracks):
        f, g = obj.value_and_grad(w + eta * p)
        if math.isfinite(f) and f <= f0 + cfg.c1 * eta * d0:
            return eta, f, g
        eta *= 0.5
    return None


def dqn_minimize(obj, w0, cfg: DqnConfig = DqnConfig(), trace: bool = False) -> DqnResult:
    """Minimize ``obj`` from ``w0`` with a diagonal inverse-Hessian model.

    ``obj`` needs ``value_and_grad(w) -> (float, ndarray)``. ``b`` starts at
    ones; each search direction ``-b * grad`` is scaled to unit length before
    the line search. Stops once ``||grad|| <= cfg.grad_tolerance`` or after
    ``cfg.max_iterations`` steps.
    """
    w = np.array(w0, dtype=np.float64, copy=True)
    if not np.all(np.isfinite(w)):
        raise ValueError("initial weights must be finite")
    b = np.ones_like(w)
    f, g = obj.value_and_grad(w)
    gnorm = float(np.linalg.norm(g))
    records = [TraceRecord(0, f, gnorm, 0.0)] if trace else []
    m = 0
    failed = False
    while gnorm > cfg.grad_tolerance and m < cfg.max_iterations:
        p = -b * g
        pn = np.linalg.norm(p)
        if not (pn > 0 and np.dot(g, p) < 0):
            p = -g
            pn = gnorm
        p = p / pn
        ls = wolfe_line_search(obj, w, p, cfg, f0=f, g0=g)
        if ls.armijo:
            eta, f_new, g_new = ls.step, ls.value, ls.grad
        else:
            bt = backtracking_armijo(obj, w, p, cfg, f, g)
            if bt is None:
                logger.debug("line search failed at iteration %d", m)
                failed = True
                break
            eta, f_new, g_new = bt
        delta = eta * p
        w = w + delta
        gamma = g_new - g
        b = diag_bfgs_update(b, delta, gamma, cfg)
        f, g = f_new, g_new
        gnorm = float(np.linalg.norm(g))
        m += 1
        if trace:
            records.append(TraceRecord(m, f, gnorm, eta))
    return DqnResult(
        w=w,
        diag_b=b,
        iterations=m,
        final_grad_norm=gnorm,
        converged=gnorm <= cfg.grad_tolerance,
        value=f,
        line_search_failed=failed,
        trace=records,
    )
