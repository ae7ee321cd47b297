"""Alternating MAP / prior-update loop with automatic relevance determination.

``dqn_sbl_fit`` is the linear-memory path: the MAP weights and a diagonal
inverse-Hessian estimate come from :func:`dqn.dqn_minimize`. ``classic_sbl_fit``
is the dense reference that inverts the full Hessian; it is only meant for
small problems and for checking the fast path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .dqn import DqnConfig, dqn_minimize
from .errors import IllConditionedError, OracleGuardError
from .objective import DENSE_GUARD, DesignMatrix, MapObjective

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SblConfig:
    max_iterations: int = 100
    alpha_max: float = 1e6
    delta_logalpha: float = 1e-3
    c: float = 1e-4
    init_alpha: float = 1e-2
    prune_bias: bool = False
    inner: DqnConfig = DqnConfig()
    # Newton loop of the dense reference path
    newton_max_iterations: int = 100

    def __post_init__(self):
        for name in ("max_iterations", "alpha_max", "delta_logalpha", "c", "init_alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.delta_logalpha < 1:
            raise ValueError("delta_logalpha must be < 1")
        if not self.c < 1:
            raise ValueError("c must be < 1")

    def with_overrides(self, **kw) -> "SblConfig":
        inner_kw = {k[6:]: v for k, v in kw.items() if k.startswith("inner_")}
        outer_kw = {k: v for k, v in kw.items() if not k.startswith("inner_")}
        inner = replace(self.inner, **inner_kw) if inner_kw else self.inner
        return replace(self, inner=inner, **outer_kw)


@dataclass
class ArdState:
    """Surviving columns (extended indices, 0 = bias) with their weights and priors."""

    active: np.ndarray
    w: np.ndarray
    alpha: np.ndarray
    diag_b: np.ndarray
    pruned: np.ndarray
    n_total: int

    def full_weights(self) -> np.ndarray:
        out = np.zeros(self.n_total)
        out[self.active] = self.w
        return out

    def copy(self) -> "ArdState":
        return ArdState(
            self.active.copy(), self.w.copy(), self.alpha.copy(),
            self.diag_b.copy(), self.pruned.copy(), self.n_total,
        )


@dataclass
class FitReport:
    outer_iterations: int = 0
    active_count_history: List[int] = field(default_factory=list)
    converged: bool = False
    fallback_count: List[int] = field(default_factory=list)
    inner_iterations: List[int] = field(default_factory=list)
    inner_converged: List[bool] = field(default_factory=list)
    traces: list = field(default_factory=list)


def ard_update(alpha, w, diag_b, c: float, alpha_max: float = 1e6):
    """New priors from the MAP weights and the inverse-Hessian diagonal.

    ``(1 - alpha*b) / w^2`` where that numerator is positive, ``c / w^2``
    elsewhere; an exactly zero weight gets ``2 * alpha_max`` so it is pruned.

    Returns
    -------
    new_alpha : ndarray
    n_fallback : int
        How many entries took the ``c`` branch.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    diag_b = np.asarray(diag_b, dtype=np.float64)
    if not alpha.shape == w.shape == diag_b.shape:
        raise ValueError("alpha, w and diag_b must have the same shape")
    gamma = 1.0 - alpha * diag_b
    fallback = ~(gamma > 0)
    numer = np.where(fallback, c, gamma)
    w2 = w * w
    zero = w2 == 0
    with np.errstate(divide="ignore", over="ignore"):
        new = numer / np.where(zero, 1.0, w2)
    new = np.where(zero | ~np.isfinite(new), 2.0 * alpha_max, new)
    return new, int(np.count_nonzero(fallback & ~zero))


def log_alpha_converged(alpha_old, alpha_new, tol: float) -> bool:
    """True iff ``max |log a_new - log a_old| < tol``; vacuously true when empty."""
    alpha_old = np.asarray(alpha_old, dtype=np.float64)
    alpha_new = np.asarray(alpha_new, dtype=np.float64)
    if alpha_old.size == 0:
        return True
    return bool(np.max(np.abs(np.log(alpha_new) - np.log(alpha_old))) < tol)


def _check_problem(design: DesignMatrix, t):
    t = np.asarray(t, dtype=np.float64)
    if design.n_rows == 0 or design.n_active == 0:
        raise ValueError("design matrix is empty")
    if t.shape != (design.n_rows,):
        raise ValueError("target length differs from design rows")
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("targets must be 0 or 1")
    return t


# Called after every outer iteration as callback(iteration, state);
# returning True stops the fit.
Callback = Callable[[int, ArdState], Optional[bool]]


def _ard_loop(design, t, cfg: SblConfig, map_stage, callback, trace, max_iterations):
    t = _check_problem(design, t)
    n_total = design.n_total
    active = design.active.copy()
    all_cols = np.arange(n_total)
    w = np.zeros(active.size)
    alpha = np.full(active.size, cfg.init_alpha)
    b = np.ones(active.size)
    report = FitReport(active_count_history=[active.size])
    cur = design
    limit = cfg.max_iterations if max_iterations is None else max_iterations
    state = None
    for it in range(1, limit + 1):
        obj = MapObjective(cur, t, alpha)
        w, b, inner_its, inner_ok, tr = map_stage(obj, w)
        report.inner_iterations.append(inner_its)
        report.inner_converged.append(inner_ok)
        if trace:
            report.traces.append(tr)

        new_alpha, n_fb = ard_update(alpha, w, b, cfg.c, cfg.alpha_max)
        report.fallback_count.append(n_fb)
        keep = new_alpha <= cfg.alpha_max
        is_bias = active == 0
        if not cfg.prune_bias:
            keep |= is_bias
        if not keep.any():
            logger.warning("every column was pruned; keeping the bias column")
            keep = is_bias.copy()
            if not keep.any():
                keep[0] = True
        new_alpha = np.minimum(new_alpha, cfg.alpha_max)

        pruned_now = not keep.all()
        converged = (not pruned_now) and log_alpha_converged(
            alpha[keep], new_alpha[keep], cfg.delta_logalpha
        )
        active, w, alpha, b = active[keep], w[keep], new_alpha[keep], b[keep]
        if pruned_now:
            cur = cur.restrict(keep)
        report.outer_iterations = it
        report.active_count_history.append(active.size)
        state = ArdState(active, w, alpha, b, np.setdiff1d(all_cols, active), n_total)
        stop = callback(it, state) if callback is not None else False
        if converged:
            report.converged = True
            break
        if stop:
            break
    return state, report


def dqn_sbl_fit(
    design: DesignMatrix,
    t,
    cfg: SblConfig = SblConfig(),
    callback: Callback = None,
    trace: bool = False,
    max_iterations: int = None,
):
    """Sparse Bayesian logistic fit with diagonal quasi-Newton MAP stages.

    Starts from ``w = 0`` and ``alpha = cfg.init_alpha``; each outer iteration
    warm-starts the MAP stage from the surviving weights with ``b`` reset to
    ones, updates the priors, prunes every column whose prior exceeds
    ``cfg.alpha_max`` and stops when the log-priors of the surviving columns
    move by less than ``cfg.delta_logalpha``.

    Returns
    -------
    state : ArdState
    report : FitReport
    """

    def map_stage(obj, w):
        res = dqn_minimize(obj, w, cfg.inner, trace=trace)
        return res.w, res.diag_b, res.iterations, res.converged, res.trace

    return _ard_loop(design, t, cfg, map_stage, callback, trace, max_iterations)


def newton_minimize(obj: MapObjective, w0, tol: float, max_iterations: int):
    """Damped Newton on ``obj``; returns ``(w, H, cholesky(H), iterations, converged)``.

    Raises IllConditionedError when the Hessian is not numerically positive
    definite.
    """
    w = np.array(w0, dtype=np.float64, copy=True)
    f, g = obj.value_and_grad(w)
    it = 0
    while True:
        H = obj.hessian(w)
        try:
            chol = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            raise IllConditionedError("Hessian is not positive definite") from None
        if np.linalg.norm(g) <= tol or it >= max_iterations:
            return w, H, chol, it, bool(np.linalg.norm(g) <= tol)
        step = np.linalg.solve(chol.T, np.linalg.solve(chol, g))
        eta = 1.0
        for _ in range(60):
            f_new, g_new = obj.value_and_grad(w - eta * step)
            if f_new <= f:
                break
            eta *= 0.5
        else:
            return w, H, chol, it, False
        w = w - eta * step
        f, g = f_new, g_new
        it += 1


def classic_sbl_fit(
    design: DesignMatrix,
    t,
    cfg: SblConfig = SblConfig(),
    callback: Callback = None,
    max_iterations: int = None,
):
    """Dense reference: Newton MAP stage and the exact posterior covariance diagonal.

    Raises
    ------
    OracleGuardError
        More than 5000 active columns.
    IllConditionedError
        The Hessian at some MAP point could not be factorized or inverted.
    """
    if design.n_active > DENSE_GUARD:
        raise OracleGuardError(
            f"classic engine refuses {design.n_active} active columns (limit {DENSE_GUARD})"
        )

    def map_stage(obj, w):
        w, H, chol, its, ok = newton_minimize(
            obj, w, cfg.inner.grad_tolerance, cfg.newton_max_iterations
        )
        inv_chol = np.linalg.solve(chol, np.eye(len(w)))
        sigma_diag = np.sum(inv_chol * inv_chol, axis=0)
        if not np.all(np.isfinite(sigma_diag)) or np.any(sigma_diag <= 0):
            raise IllConditionedError("posterior covariance is singular")
        return w, sigma_diag, its, ok, []

    return _ard_loop(design, t, cfg, map_stage, callback, False, max_iterations)
