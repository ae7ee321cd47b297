"""Train, evaluate and apply sparse Bayesian classifiers from the command line.

Subcommands: ``train``, ``predict``, ``cv-grid``, ``feature-select``.

Exit codes: 0 ok, 2 bad arguments, 3 unparsable data, 4 convergence failure,
5 dense-path size guard, 6 ill-conditioned Hessian, 7 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import maps
from .ard import SblConfig
from .data_io import SparseDataset, format_label, load_libsvm, train_test_split
from .datasets import BUNDLED, load_bundled
from .dqn import DqnConfig
from .errors import (
    ConvergenceError,
    DataFormatError,
    IllConditionedError,
    OracleGuardError,
)
from .experiment import best_cell, cv_grid, format_table, grid_cells
from .models import accuracy, dumps_model, load_model, train_ovo
from .selection import early_stopping_fit, lr_l2_cv, selected_features

logger = logging.getLogger("dqnsbl")

EXIT_OK = 0
EXIT_ARGUMENT = 2
EXIT_PARSE = 3
EXIT_CONVERGENCE = 4
EXIT_GUARD = 5
EXIT_ILL_CONDITIONED = 6
EXIT_IO = 7

MAP_NAMES = {"linear": maps.LINEAR, "rvm": maps.RVM, "sbelm": maps.SBELM}


def _floats(text: str) -> List[float]:
    return [float(eval_power(v)) for v in text.split(",") if v.strip()]


def eval_power(token: str) -> float:
    """Accept plain numbers and ``2^k`` notation."""
    token = token.strip()
    if "^" in token:
        base, exp = token.split("^", 1)
        return float(base) ** float(exp)
    return float(token)


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def load_data(source: str, n_features: int = None) -> SparseDataset:
    """A LIBSVM path, or ``bundled:<name>`` for the shipped benchmarks."""
    if source.startswith("bundled:"):
        ds = load_bundled(source.split(":", 1)[1])
        return ds if n_features is None else ds.with_n_features(n_features)
    return load_libsvm(source, n_features=n_features)


def build_config(args) -> SblConfig:
    inner = DqnConfig(grad_tolerance=args.qn_eps, max_iterations=args.qn_max_its)
    return SblConfig(
        max_iterations=args.max_its,
        alpha_max=args.alpha_max,
        delta_logalpha=args.delta_logalpha,
        c=args.c,
        init_alpha=args.init_alpha,
        inner=inner,
    )


def _cells(args, map_kind: str) -> List[Dict]:
    hidden = args.hidden_grid
    hidden = maps.HIDDEN_PRESETS[hidden] if hidden in maps.HIDDEN_PRESETS else _ints(hidden)
    return grid_cells(map_kind, _floats(args.sigma_grid), hidden, _ints(args.seeds))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _manifest(args, outputs: Dict[str, str]) -> Dict:
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    return {"command": args.command, "options": opts, "outputs": outputs}


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(out: Path, args, outputs: Dict[str, str], wall_time: float) -> None:
    _write_json(out / "manifest.json", _manifest(args, outputs))
    # timings vary run to run; kept apart from the reproducible outputs
    _write_json(out / "timing.json", {"wall_time_seconds": wall_time})


def cmd_train(args) -> int:
    start = time.perf_counter()
    ds = load_data(args.data)
    map_kind = MAP_NAMES[args.map]
    cfg = build_config(args)
    cells = _cells(args, map_kind)
    scale = not args.no_scale
    out = _outdir(args)
    metrics = {"dataset": args.data, "n_rows": ds.n_rows, "n_features": ds.n_features}
    hyper = cells[0]
    if args.folds >= 2:
        records, best = cv_grid(ds, map_kind, cells, cfg, args.folds, args.seed,
                                args.engine, scale, args.workers)
        if best is None:
            errs = [r.error for r in records]
            _raise_cell_error(errs)
        hyper = cells[best]
        metrics["cross_validation"] = records[best].to_dict()
        metrics["grid"] = [r.to_dict() for r in records]
        print(format_table(records, best))
    elif len(cells) > 1:
        raise ValueError("a hyperparameter grid needs --folds >= 2 to choose a cell")
    ens, reports = train_ovo(ds, map_kind, hyper, cfg, args.engine, scale=scale,
                             trace=args.trace)
    if args.require_convergence and not all(r.converged for r in reports):
        raise ConvergenceError("outer loop hit --max-its before the log-alpha test passed")
    metrics.update(
        selected=hyper,
        training_accuracy=accuracy(ens.predict(ds), ds.labels),
        bases_per_model=[m.n_bases for m in ens.models],
        n_models=len(ens.models),
        outer_iterations=[r.outer_iterations for r in reports],
        converged=[r.converged for r in reports],
    )
    (out / "model.json").write_text(dumps_model(ens), encoding="utf-8")
    _write_json(out / "metrics.json", metrics)
    outputs = {"model": "model.json", "metrics": "metrics.json"}
    if args.trace:
        _write_trace(out / "trace.csv", ens, reports)
        outputs["trace"] = "trace.csv"
    _finish(out, args, outputs, time.perf_counter() - start)
    print(f"training accuracy {metrics['training_accuracy']:.2f}%  "
          f"bases per model {np.mean(metrics['bases_per_model']):.2f}  -> {out}")
    return EXIT_OK


def _raise_cell_error(errors):
    text = " | ".join(e for e in errors if e)
    if "OracleGuardError" in text:
        raise OracleGuardError(text)
    if "IllConditionedError" in text:
        raise IllConditionedError(text)
    raise ValueError(f"every grid cell failed: {text}")


def _write_trace(path: Path, ens, reports) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["class_a", "class_b", "outer_iteration", "inner_iteration",
                     "value", "grad_norm", "step"])
        for m, rep in zip(ens.models, reports):
            a, b = (format_label(c) for c in m.class_pair)
            for outer, records in enumerate(rep.traces, start=1):
                for r in records:
                    wr.writerow([a, b, outer, r.iteration, repr(r.value),
                                 repr(r.grad_norm), repr(r.step)])


def cmd_predict(args) -> int:
    ens = load_model(args.model)
    ds = load_data(args.data)
    if ds.n_features > ens.n_features:
        raise ValueError(
            f"dataset has {ds.n_features} features but the model expects {ens.n_features}"
        )
    scores = ens.scores(ds)
    pred = ens.classes[np.argmax(scores, axis=1)]
    header = ["prediction"] + [f"score_{format_label(c)}" for c in ens.classes]
    rows = [[format_label(p)] + [repr(float(s)) for s in row] for p, row in zip(pred, scores)]
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    if ds.n_rows and np.all(np.isin(ds.labels, ens.classes)):
        acc = accuracy(pred, ds.labels)
        print(f"accuracy {acc:.4f}%", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def cmd_cv_grid(args) -> int:
    start = time.perf_counter()
    ds = load_data(args.data)
    map_kind = MAP_NAMES[args.map]
    cfg = build_config(args)
    cells = _cells(args, map_kind)
    records, best = cv_grid(ds, map_kind, cells, cfg, args.folds, args.seed,
                            args.engine, not args.no_scale, args.workers)
    out = _outdir(args)
    table = format_table(records, best)
    doc = {
        "dataset": args.data,
        "map": map_kind,
        "engine": args.engine,
        "folds": args.folds,
        "seed": args.seed,
        "best": best,
        "cells": [r.to_dict() for r in records],
    }
    _write_json(out / "grid.json", doc)
    (out / "grid.txt").write_text(table + "\n", encoding="utf-8")
    _write_json(out / "timing_cells.json", [r.wall_time for r in records])
    _finish(out, args, {"grid": "grid.json", "table": "grid.txt"},
            time.perf_counter() - start)
    print(table)
    if best is None:
        _raise_cell_error([r.error for r in records])
    return EXIT_OK


def cmd_feature_select(args) -> int:
    start = time.perf_counter()
    ds = load_data(args.data)
    if args.test:
        train = ds
        test = load_data(args.test)
        width = max(train.n_features, test.n_features)
        train, test = train.with_n_features(width), test.with_n_features(width)
    else:
        train, test = train_test_split(ds, args.train_fraction, args.seed)
    cfg = build_config(args)
    scale = args.scale
    res = early_stopping_fit(train, cfg, folds=args.folds, seed=args.seed, test=test,
                             scale=scale)
    out = _outdir(args)
    with open(out / "curve.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "sparsity_ratio", "validation_accuracy",
                     "test_accuracy", "n_selected"])
        for p in res.curve:
            wr.writerow([p.iteration, repr(p.sparsity_ratio), repr(p.validation_accuracy),
                         repr(p.test_accuracy), p.n_selected])
    feats = selected_features(res.binary)
    (out / "features.txt").write_text("".join(f"{i}\n" for i in feats), encoding="utf-8")
    (out / "model.json").write_text(dumps_model(res.model), encoding="utf-8")
    metrics = {
        "best_iteration": res.best_iteration,
        "cv_accuracy": res.cv_accuracy.tolist(),
        "test_accuracy": accuracy(res.model.predict(test), test.labels),
        "n_selected": len(feats),
        "n_features": train.n_features,
        "n_train": train.n_rows,
        "n_test": test.n_rows,
    }
    if args.lr_baseline:
        lm, lam, means = lr_l2_cv(train, folds=args.folds, seed=args.seed, cfg=cfg.inner,
                                  scale=scale)
        metrics["lr_l2"] = {
            "lambda": lam,
            "cv_accuracy": means.tolist(),
            "test_accuracy": accuracy(lm.predict(test), test.labels),
        }
    _write_json(out / "metrics.json", metrics)
    _finish(out, args, {"curve": "curve.csv", "features": "features.txt",
                        "model": "model.json", "metrics": "metrics.json"},
            time.perf_counter() - start)
    print(f"early-stopping iteration {res.best_iteration}; {len(feats)} features kept; "
          f"test accuracy {metrics['test_accuracy']:.2f}%")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, out_default: str) -> None:
    d = SblConfig()
    p.add_argument("--data", required=True,
                   help=f"LIBSVM file or bundled:<{'|'.join(BUNDLED)}>")
    p.add_argument("--out", default=out_default, help="output directory")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0, help="fold / split seed")
    p.add_argument("--alpha-max", type=float, default=d.alpha_max)
    p.add_argument("--delta-logalpha", type=float, default=d.delta_logalpha)
    p.add_argument("--c", type=float, default=d.c)
    p.add_argument("--init-alpha", type=float, default=d.init_alpha)
    p.add_argument("--max-its", type=int, default=d.max_iterations)
    p.add_argument("--qn-max-its", type=int, default=d.inner.max_iterations)
    p.add_argument("--qn-eps", type=float, default=d.inner.grad_tolerance)


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", choices=sorted(MAP_NAMES), default="rvm")
    p.add_argument("--engine", choices=["dqn", "classic"], default="dqn")
    p.add_argument("--sigma-grid", default=",".join(f"2^{k}" for k in range(-5, 6)),
                   help="comma list, 2^k accepted")
    p.add_argument("--hidden-grid", default="small",
                   help="'small' (50..200), 'large' (100..1300) or a comma list")
    p.add_argument("--seeds", default="1,2,3,4,5", help="random-layer seeds")
    p.add_argument("--no-scale", action="store_true", help="skip [-1, 1] scaling")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqnsbl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit (optionally grid-select) and save a model")
    _add_common(p, "run-train")
    _add_grid(p)
    p.add_argument("--trace", action="store_true", help="write optimizer traces")
    p.add_argument("--require-convergence", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="CSV file (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv-grid", help="k-fold evaluation of a hyperparameter grid")
    _add_common(p, "run-grid")
    _add_grid(p)
    p.set_defaults(func=cmd_cv_grid)

    p = sub.add_parser("feature-select", help="linear early-stopping feature selection")
    _add_common(p, "run-select")
    p.add_argument("--test", default=None, help="held-out LIBSVM file")
    p.add_argument("--train-fraction", type=float, default=0.75)
    p.add_argument("--scale", action="store_true", help="scale features to [-1, 1]")
    p.add_argument("--lr-baseline", action="store_true",
                   help="also cross-validate L2 logistic regression over 2^-5..2^5")
    p.set_defaults(func=cmd_feature_select)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OracleGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except IllConditionedError as exc:
        print(f"error: ill-conditioned Hessian, result reported as '-': {exc}", file=sys.stderr)
        return EXIT_ILL_CONDITIONED
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGUMENT


if __name__ == "__main__":
    sys.exit(main())
