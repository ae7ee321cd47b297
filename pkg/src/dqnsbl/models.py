"""Binary and one-vs-one sparse Bayesian classifiers, the L2 logistic baseline,
and the versioned JSON model document."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from . import maps
from .ard import FitReport, SblConfig, classic_sbl_fit, dqn_sbl_fit
from .data_io import (
    BinaryProblem,
    Scaler,
    SparseDataset,
    binary_problem,
    fit_scaler,
    format_label,
    ovo_decompose,
)
from .dqn import DqnConfig, dqn_minimize
from .objective import DesignMatrix, MapObjective, sigmoid

FORMAT_NAME = "dqnsbl-model"
FORMAT_VERSION = 1
KERNEL_FORM = "exp(-||x-r||^2/sigma^2)"
ENGINES = ("dqn", "classic")


@dataclass
class BinaryModel:
    """A pruned logistic model over one feature map.

    ``active`` holds extended basis indices of the stored map (0 = bias,
    ``j + 1`` = basis function ``j``); ``w`` the matching weights. For kernel
    maps the map's references are already cut down to the relevance vectors.
    """

    map: maps.FeatureMap
    scaler: Optional[Scaler]
    active: np.ndarray
    w: np.ndarray
    class_pair: Tuple[float, float]
    n_features: int

    def __post_init__(self):
        self.active = np.asarray(self.active, dtype=np.intp)
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.active.shape != self.w.shape:
            raise ValueError("active and w must have the same length")

    @property
    def n_bases(self) -> int:
        """Surviving basis functions, bias excluded."""
        return int(np.count_nonzero(self.active != 0))

    @property
    def n_weights(self) -> int:
        return int(self.active.size)

    def _inputs(self, X):
        if isinstance(X, SparseDataset):
            X = X.X
        if sp.issparse(X):
            X = X.tocsr()
        else:
            X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] > self.n_features:
            raise ValueError(
                f"data has {X.shape[1]} features but the model was trained on "
                f"{self.n_features}"
            )
        if X.shape[1] < self.n_features:
            if sp.issparse(X):
                X = sp.csr_matrix(
                    (X.data, X.indices, X.indptr), shape=(X.shape[0], self.n_features)
                )
            else:
                X = np.pad(X, ((0, 0), (0, self.n_features - X.shape[1])))
        if self.scaler is not None:
            X = self.scaler.transform_dense(X)
        return X

    def decision_function(self, X) -> np.ndarray:
        X = self._inputs(X)
        bias_mask = self.active == 0
        bias = float(self.w[bias_mask].sum())
        cols = self.active[~bias_mask] - 1
        z = np.full(X.shape[0], bias)
        if cols.size:
            basis = self.map.transform(X, columns=cols)
            z = z + np.asarray(basis @ self.w[~bias_mask]).ravel()
        return z

    def predict_proba(self, X) -> np.ndarray:
        """Probability of ``class_pair[0]`` for every row."""
        return sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        p = self.predict_proba(X)
        a, b = self.class_pair
        return np.where(p >= 0.5, a, b)


def _n_rows(X) -> int:
    if isinstance(X, SparseDataset):
        return X.n_rows
    if sp.issparse(X):
        return X.shape[0]
    return np.atleast_2d(X).shape[0]


def predict_proba(model: BinaryModel, x) -> np.ndarray:
    return model.predict_proba(x)


@dataclass
class OvoEnsemble:
    """Pairwise models combined by probability voting."""

    classes: np.ndarray
    models: List[BinaryModel]
    config: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.classes = np.asarray(self.classes, dtype=np.float64)
        k = len(self.classes)
        pairs = {frozenset(m.class_pair) for m in self.models}
        if len(self.models) != k * (k - 1) // 2 or len(pairs) != len(self.models):
            raise ValueError("ensemble needs exactly one model per class pair")

    @property
    def n_features(self) -> int:
        return self.models[0].n_features

    def scores(self, X) -> np.ndarray:
        """Accumulated votes, one column per class; each row sums to K(K-1)/2."""
        pos = {float(c): j for j, c in enumerate(self.classes)}
        out = np.zeros((_n_rows(X), len(self.classes)))
        for m in self.models:
            p = m.predict_proba(X)
            a, b = m.class_pair
            out[:, pos[a]] += p
            out[:, pos[b]] += 1.0 - p
        return out

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum: ties go to the smallest identifier
        return self.classes[np.argmax(self.scores(X), axis=1)]

    @property
    def bases_per_model(self) -> float:
        return float(np.mean([m.n_bases for m in self.models]))


def ovo_predict(ens: OvoEnsemble, x) -> np.ndarray:
    return ens.predict(x)


def build_map(kind: str, X_train, hyper: Dict) -> maps.FeatureMap:
    n_inputs = X_train.shape[1]
    if kind == maps.LINEAR:
        return maps.FeatureMap(maps.LINEAR, n_inputs)
    if kind == maps.RVM:
        refs = X_train.toarray() if sp.issparse(X_train) else np.asarray(X_train)
        return maps.FeatureMap(maps.RVM, n_inputs, sigma=float(hyper["sigma"]), references=refs)
    if kind == maps.SBELM:
        return maps.FeatureMap(
            maps.SBELM, n_inputs, n_hidden=int(hyper["n_hidden"]), seed=int(hyper["seed"])
        )
    raise ValueError(f"unknown map kind {kind!r}")


def _fit(design, t, cfg, engine, **kw):
    if engine == "dqn":
        return dqn_sbl_fit(design, t, cfg, **kw)
    if engine == "classic":
        kw.pop("trace", None)
        return classic_sbl_fit(design, t, cfg, **kw)
    raise ValueError(f"unknown engine {engine!r}")


def _compact(fmap: maps.FeatureMap, active: np.ndarray):
    """Drop unused kernel references and re-index the active set accordingly."""
    if fmap.kind != maps.RVM:
        return fmap, active
    cols = active[active != 0] - 1
    kept = maps.FeatureMap(
        maps.RVM, fmap.n_inputs, sigma=fmap.sigma, references=fmap.references[cols]
    )
    new_active = np.concatenate(
        ([0] if active.size and active[0] == 0 else [], np.arange(1, cols.size + 1))
    ).astype(np.intp)
    return kept, new_active


def train_binary(
    problem: BinaryProblem,
    map_kind: str,
    hyper: Dict = None,
    cfg: SblConfig = SblConfig(),
    engine: str = "dqn",
    scaler: Optional[Scaler] = None,
    scale: bool = True,
    trace: bool = False,
) -> Tuple[BinaryModel, FitReport]:
    """Fit one pairwise (or binary) model.

    ``scaler`` is used as given; otherwise one is fit on the problem rows when
    ``scale`` is true.
    """
    hyper = hyper or {}
    t = problem.targets
    if t.size == 0 or t.min() == t.max():
        raise ValueError("binary problem needs rows from both classes")
    X = problem.X
    n_features = problem.dataset.n_features
    if scaler is None and scale:
        scaler = fit_scaler(SparseDataset(X, problem.dataset.labels[problem.rows]))
    if scaler is not None:
        X = scaler.transform_dense(X)
    fmap = build_map(map_kind, X, hyper)
    design = DesignMatrix(fmap.transform(X))
    state, report = _fit(design, t, cfg, engine, trace=trace)
    fmap, active = _compact(fmap, state.active)
    model = BinaryModel(fmap, scaler, active, state.w.copy(), problem.class_pair, n_features)
    return model, report


def binary_dataset_problem(ds: SparseDataset) -> BinaryProblem:
    classes = ds.classes
    if len(classes) != 2:
        raise ValueError(f"expected two classes, found {len(classes)}")
    return binary_problem(ds, classes[1], classes[0])


def train_ovo(
    ds: SparseDataset,
    map_kind: str,
    hyper: Dict = None,
    cfg: SblConfig = SblConfig(),
    engine: str = "dqn",
    scale: bool = True,
    trace: bool = False,
) -> Tuple[OvoEnsemble, List[FitReport]]:
    """One model per class pair; a shared scaler is fit on all of ``ds``."""
    scaler = fit_scaler(ds) if scale else None
    models, reports = [], []
    for prob in ovo_decompose(ds):
        m, r = train_binary(prob, map_kind, hyper, cfg, engine, scaler=scaler, trace=trace)
        models.append(m)
        reports.append(r)
    ens = OvoEnsemble(ds.classes, models, config=config_dict(cfg, map_kind, hyper, engine))
    return ens, reports


def lr_l2_fit(design: DesignMatrix, t, lam: float, cfg: DqnConfig = DqnConfig()) -> np.ndarray:
    """L2-penalized logistic weights (``alpha = lam`` for every column, no pruning)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    obj = MapObjective(design, t, np.full(design.n_active, float(lam)))
    return dqn_minimize(obj, np.zeros(design.n_active), cfg).w


def train_lr_l2(
    problem: BinaryProblem, lam: float, cfg: DqnConfig = DqnConfig(), scaler: Scaler = None
) -> BinaryModel:
    X = problem.X
    if scaler is not None:
        X = scaler.transform_dense(X)
    design = DesignMatrix(X)
    w = lr_l2_fit(design, problem.targets, lam, cfg)
    fmap = maps.FeatureMap(maps.LINEAR, problem.dataset.n_features)
    return BinaryModel(fmap, scaler, design.active.copy(), w, problem.class_pair,
                       problem.dataset.n_features)


def accuracy(pred, labels) -> float:
    """Percentage of matching entries."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return float("nan")
    return 100.0 * float(np.mean(np.asarray(pred) == labels))


# ---------------------------------------------------------------- serialization


def config_dict(cfg: SblConfig, map_kind: str, hyper: Dict, engine: str) -> Dict:
    d = asdict(cfg)
    d["inner"]["diag_clamp"] = list(d["inner"]["diag_clamp"])
    return {"sbl": d, "map": map_kind, "hyper": dict(hyper or {}), "engine": engine}


def _arr(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def _model_doc(m: BinaryModel) -> Dict:
    fm = m.map
    mdoc = {"kind": fm.kind, "n_inputs": fm.n_inputs}
    if fm.kind == maps.RVM:
        mdoc.update(sigma=fm.sigma, kernel=KERNEL_FORM, references=_arr(fm.references))
    elif fm.kind == maps.SBELM:
        mdoc.update(
            n_hidden=fm.n_hidden,
            seed=fm.seed,
            generator="PCG64; uniform[-1,1]; synapses row-major then biases",
        )
    doc = {
        "class_pair": [float(c) for c in m.class_pair],
        "map": mdoc,
        "active": [int(i) for i in m.active],
        "w": _arr(m.w),
        "n_features": m.n_features,
        "scaler": None,
    }
    if m.scaler is not None:
        doc["scaler"] = {"min": _arr(m.scaler.minimum), "max": _arr(m.scaler.maximum)}
    return doc


def dumps_model(ens: OvoEnsemble) -> str:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "classes": [float(c) for c in ens.classes],
        "class_labels": [format_label(c) for c in ens.classes],
        "config": ens.config,
        "models": [_model_doc(m) for m in ens.models],
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _load_model(d: Dict) -> BinaryModel:
    md = d["map"]
    kind = md["kind"]
    if kind == maps.RVM:
        fmap = maps.FeatureMap(
            kind, md["n_inputs"], sigma=md["sigma"],
            references=np.asarray(md["references"], dtype=np.float64).reshape(-1, md["n_inputs"]),
        )
    elif kind == maps.SBELM:
        fmap = maps.FeatureMap(kind, md["n_inputs"], n_hidden=md["n_hidden"], seed=md["seed"])
    else:
        fmap = maps.FeatureMap(kind, md["n_inputs"])
    scaler = None
    if d.get("scaler") is not None:
        scaler = Scaler(
            np.asarray(d["scaler"]["min"], dtype=np.float64),
            np.asarray(d["scaler"]["max"], dtype=np.float64),
        )
    return BinaryModel(
        fmap, scaler, np.asarray(d["active"], dtype=np.intp),
        np.asarray(d["w"], dtype=np.float64), tuple(d["class_pair"]), d["n_features"],
    )


def loads_model(text: str) -> OvoEnsemble:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_NAME:
        raise ValueError("not a dqnsbl model document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    return OvoEnsemble(
        np.asarray(doc["classes"], dtype=np.float64),
        [_load_model(d) for d in doc["models"]],
        config=doc.get("config", {}),
    )


def save_model(ens: OvoEnsemble, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(ens))


def load_model(path) -> OvoEnsemble:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_model(fh.read())
