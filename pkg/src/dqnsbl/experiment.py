"""Cross-validated grid evaluation shared by the CLI and the acceptance suite."""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import maps
from .ard import SblConfig
from .data_io import SparseDataset, kfold_split
from .errors import DqnSblError
from .models import accuracy, train_ovo


@dataclass
class MetricsRecord:
    """Cross-validation summary of one hyperparameter cell.

    Accuracies are percentages; ``std_accuracy`` is the population standard
    deviation over folds. ``wall_time`` is kept out of :meth:`to_dict` unless
    asked for, so that metric files stay byte-reproducible.
    """

    cell: int
    hyper: Dict
    fold_accuracy: List[float] = field(default_factory=list)
    mean_accuracy: float = float("nan")
    std_accuracy: float = float("nan")
    bases_per_model: float = float("nan")
    n_models: int = 0
    outer_iterations: float = float("nan")
    wall_time: float = 0.0
    error: Optional[str] = None

    def to_dict(self, include_time: bool = False) -> Dict:
        d = asdict(self)
        if not include_time:
            d.pop("wall_time")
        return d

    @property
    def sparsity_label(self) -> str:
        if self.n_models > 1:
            return f"{self.bases_per_model:.2f}x{self.n_models}"
        return f"{self.bases_per_model:.2f}"


def summarize(fold_accuracy: Sequence[float]):
    a = np.asarray(fold_accuracy, dtype=np.float64)
    return float(a.mean()), float(a.std())


def grid_cells(map_kind: str, sigma_grid=maps.SIGMA_GRID,
               hidden_grid=maps.HIDDEN_GRID_SMALL, seeds=maps.SEED_GRID) -> List[Dict]:
    if map_kind == maps.RVM:
        return [{"sigma": float(s)} for s in sigma_grid]
    if map_kind == maps.SBELM:
        return [{"n_hidden": int(L), "seed": int(s)} for L, s in itertools.product(hidden_grid, seeds)]
    return [{}]


def evaluate_cell(
    ds: SparseDataset,
    folds,
    map_kind: str,
    hyper: Dict,
    cfg: SblConfig = SblConfig(),
    engine: str = "dqn",
    scale: bool = True,
    cell: int = 0,
) -> MetricsRecord:
    """k-fold accuracy, sparsity and iteration counts of one cell.

    The scaler is refit on every training fold. Failures are captured in
    ``error`` rather than raised.
    """
    rec = MetricsRecord(cell=cell, hyper=dict(hyper))
    start = time.perf_counter()
    try:
        bases, iters = [], []
        for tr, va in folds:
            dtr, dva = ds.subset(tr), ds.subset(va)
            ens, reports = train_ovo(dtr, map_kind, hyper, cfg, engine, scale=scale)
            rec.fold_accuracy.append(accuracy(ens.predict(dva), dva.labels))
            bases.append(ens.bases_per_model)
            iters.extend(r.outer_iterations for r in reports)
            rec.n_models = len(ens.models)
        rec.mean_accuracy, rec.std_accuracy = summarize(rec.fold_accuracy)
        rec.bases_per_model = float(np.mean(bases))
        rec.outer_iterations = float(np.mean(iters))
    except (DqnSblError, ValueError, np.linalg.LinAlgError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    rec.wall_time = time.perf_counter() - start
    return rec


def _run_cell(args):
    return evaluate_cell(*args)


def best_cell(records: Sequence[MetricsRecord]) -> Optional[int]:
    """Index of the highest mean accuracy; earlier cells win ties."""
    best, best_acc = None, -np.inf
    for i, r in enumerate(records):
        if r.error is None and r.mean_accuracy > best_acc:
            best, best_acc = i, r.mean_accuracy
    return best


def cv_grid(
    ds: SparseDataset,
    map_kind: str,
    cells: Sequence[Dict],
    cfg: SblConfig = SblConfig(),
    k: int = 5,
    seed: int = 0,
    engine: str = "dqn",
    scale: bool = True,
    workers: int = 1,
):
    """Evaluate every cell on one shared fold assignment.

    Results come back in cell order whatever the completion order.

    Returns
    -------
    records : list of MetricsRecord
    best : int or None
    """
    if not cells:
        raise ValueError("hyperparameter grid is empty")
    folds = kfold_split(ds, k, seed)
    jobs = [(ds, folds, map_kind, h, cfg, engine, scale, i) for i, h in enumerate(cells)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_cell, jobs))
    else:
        records = [_run_cell(j) for j in jobs]
    return records, best_cell(records)


def format_table(records: Sequence[MetricsRecord], best: Optional[int] = None) -> str:
    lines = [f"{'cell':>4}  {'hyper':<28} {'accuracy':>15} {'sparsity':>12} {'outer':>7}"]
    for r in records:
        hyper = ", ".join(f"{k}={v:g}" for k, v in r.hyper.items()) or "-"
        if r.error:
            lines.append(f"{r.cell:>4}  {hyper:<28} failed: {r.error}")
            continue
        mark = " *" if best == r.cell else ""
        acc = f"{r.mean_accuracy:.2f}+-{r.std_accuracy:.2f}"
        lines.append(
            f"{r.cell:>4}  {hyper:<28} {acc:>15} {r.sparsity_label:>12} "
            f"{r.outer_iterations:>7.1f}{mark}"
        )
    return "\n".join(lines)
