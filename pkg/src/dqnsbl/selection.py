"""Linear feature selection with a cross-validated early-stopping iteration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import maps
from .ard import SblConfig, dqn_sbl_fit
from .data_io import SparseDataset, fit_scaler, kfold_split
from .dqn import DqnConfig
from .models import (
    BinaryModel,
    OvoEnsemble,
    accuracy,
    binary_dataset_problem,
    config_dict,
    train_lr_l2,
)
from .objective import DesignMatrix


@dataclass
class CurvePoint:
    iteration: int
    sparsity_ratio: float
    validation_accuracy: float
    test_accuracy: float
    n_selected: int


@dataclass
class EarlyStoppingResult:
    model: OvoEnsemble
    best_iteration: int
    cv_accuracy: np.ndarray  # mean validation accuracy after iterations 1..n
    fold_accuracy: np.ndarray  # (folds, n)
    curve: List[CurvePoint] = field(default_factory=list)

    @property
    def binary(self) -> BinaryModel:
        return self.model.models[0]


def sparsity_ratio(w_full: np.ndarray, n_features: int) -> float:
    """``1 - (nonzero feature weights) / n_features``; the bias is not counted."""
    return 1.0 - np.count_nonzero(w_full[1:]) / n_features


def _prepare(ds: SparseDataset, scale: bool, fit_on: SparseDataset = None):
    if not scale:
        return None, ds.X
    scaler = fit_scaler(fit_on if fit_on is not None else ds)
    return scaler, scaler.transform_dense(ds.X)


def _track_accuracy(design, t, cfg, X_eval, y_eval, positive):
    """Validation accuracy after each outer iteration (carried past convergence)."""
    accs = []

    def cb(it, state):
        w = state.full_weights()
        z = X_eval @ w[1:] + w[0]
        accs.append(accuracy(z >= 0, y_eval == positive))

    dqn_sbl_fit(design, t, cfg, callback=cb)
    accs += [accs[-1]] * (cfg.max_iterations - len(accs))
    return np.asarray(accs)


def best_iteration(mean_acc) -> int:
    """1-based index of the first (sparsest-so-far) maximum."""
    mean_acc = np.asarray(mean_acc)
    return int(np.flatnonzero(mean_acc == mean_acc.max())[0]) + 1


def early_stopping_fit(
    ds: SparseDataset,
    cfg: SblConfig = SblConfig(),
    folds: int = 5,
    seed: int = 0,
    test: Optional[SparseDataset] = None,
    scale: bool = False,
) -> EarlyStoppingResult:
    """Pick the outer iteration with the best mean k-fold validation accuracy,
    then refit on all of ``ds`` and keep the model as it was after that iteration.

    The refit runs to completion so that the returned curve covers every
    iteration; the snapshot equals a fit stopped at the chosen iteration.
    """
    problem = binary_dataset_problem(ds)
    positive = problem.class_pair[0]
    fold_acc = []
    for tr, va in kfold_split(ds, folds, seed):
        dtr, dva = ds.subset(tr), ds.subset(va)
        scaler, Xtr = _prepare(dtr, scale)
        Xva = scaler.transform_dense(dva.X) if scaler is not None else dva.X
        t = (dtr.labels == positive).astype(np.float64)
        fold_acc.append(
            _track_accuracy(DesignMatrix(Xtr), t, cfg, Xva, dva.labels, positive)
        )
    fold_acc = np.vstack(fold_acc)
    mean_acc = fold_acc.mean(axis=0)
    best = best_iteration(mean_acc)

    scaler, X = _prepare(ds, scale)
    X_test = None
    if test is not None:
        test = test.with_n_features(max(test.n_features, ds.n_features))
        if test.n_features > ds.n_features:
            raise ValueError(
                f"test set has {test.n_features} features, training set {ds.n_features}"
            )
        X_test = scaler.transform_dense(test.X) if scaler is not None else test.X
    t = (ds.labels == positive).astype(np.float64)
    snapshot = {}
    curve = []

    def cb(it, state):
        w = state.full_weights()
        if it == best:
            snapshot["state"] = state.copy()
        test_acc = float("nan")
        if X_test is not None:
            test_acc = accuracy((X_test @ w[1:] + w[0]) >= 0, test.labels == positive)
        curve.append(
            CurvePoint(
                it,
                sparsity_ratio(w, ds.n_features),
                float(mean_acc[min(it, len(mean_acc)) - 1]),
                test_acc,
                int(np.count_nonzero(w[1:])),
            )
        )

    state, _ = dqn_sbl_fit(DesignMatrix(X), t, cfg, callback=cb)
    chosen = snapshot.get("state", state)
    fmap = maps.FeatureMap(maps.LINEAR, ds.n_features)
    model = BinaryModel(fmap, scaler, chosen.active.copy(), chosen.w.copy(),
                        problem.class_pair, ds.n_features)
    ens = OvoEnsemble(
        np.sort(np.asarray(problem.class_pair)), [model],
        config=dict(config_dict(cfg, maps.LINEAR, {}, "dqn"), best_iteration=best),
    )
    return EarlyStoppingResult(ens, best, mean_acc, fold_acc, curve)


def selected_features(model: BinaryModel) -> List[int]:
    """Surviving 1-based feature indices, largest ``|w|`` first (ties by index)."""
    mask = model.active != 0
    idx = model.active[mask]
    w = np.abs(model.w[mask])
    order = np.lexsort((idx, -w))
    return [int(i) for i in idx[order]]


def lr_l2_cv(
    ds: SparseDataset,
    lambdas=maps.LAMBDA_GRID,
    folds: int = 5,
    seed: int = 0,
    cfg: DqnConfig = DqnConfig(),
    scale: bool = False,
):
    """Cross-validate the L2 baseline over ``lambdas``; refit on ``ds`` with the best.

    Returns ``(model, best_lambda, mean_accuracy_per_lambda)``.
    """
    problem = binary_dataset_problem(ds)
    split = kfold_split(ds, folds, seed)
    means = []
    for lam in lambdas:
        accs = []
        for tr, va in split:
            dtr, dva = ds.subset(tr), ds.subset(va)
            scaler = fit_scaler(dtr) if scale else None
            m = train_lr_l2(binary_dataset_problem(dtr), lam, cfg, scaler)
            accs.append(accuracy(m.predict(dva), dva.labels))
        means.append(float(np.mean(accs)))
    best = int(np.argmax(means))
    scaler = fit_scaler(ds) if scale else None
    model = train_lr_l2(problem, lambdas[best], cfg, scaler)
    return model, float(lambdas[best]), np.asarray(means)
