"""Pointwise learning to rank: random-forest regression and linear baselines.

The forest is grown by the kernels module (numba or numpy path, identical
output either way). All randomness is pre-drawn outside the kernels from a
single seed: per-tree generators are spawned from one SeedSequence, so fits
are reproducible bit-for-bit and trees could be grown in parallel without
changing the result.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .evaluation import Qrels, Run, ndcg
from .features import FeatureVector

# Feature subsets of the two regression baselines, keyed by the published
# origin of each feature: the web-table ranker used structure and hit counts,
# the Wikipedia-table ranker used page statistics and containment ratios.
WEBTABLE_FEATURES = (
    "n_rows",
    "n_cols",
    "n_empty_cells",
    "heading_pmi",
    "hits_leftmost_col",
    "hits_second_col",
    "hits_body",
)
WIKITABLE_FEATURES = (
    "n_rows",
    "n_cols",
    "n_empty_cells",
    "page_in_links",
    "page_out_links",
    "page_views",
    "table_importance",
    "table_page_fraction",
    "query_in_page_title",
    "query_in_caption",
    "page_search_rank",
)


@dataclass(frozen=True)
class TrainingInstance:
    query_id: str
    doc_id: str
    features: FeatureVector
    label: float


def dataset_schema(instances: Sequence[TrainingInstance]) -> tuple[str, ...]:
    if not instances:
        raise ValueError("empty training data")
    schema = instances[0].features.schema
    for inst in instances:
        if inst.features.schema != schema:
            raise ValueError("inconsistent feature schema across instances")
    return schema


def design_matrix(
    instances: Sequence[TrainingInstance], feature_names: Sequence[str] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Stack instances into X, y; optionally projecting named columns."""
    schema = dataset_schema(instances)
    X = np.stack([inst.features.values for inst in instances]).astype(np.float64)
    y = np.array([inst.label for inst in instances], dtype=np.float64)
    if feature_names is not None:
        try:
            cols = [schema.index(n) for n in feature_names]
        except ValueError as exc:
            raise ValueError(f"feature not in schema: {exc}") from exc
        X = X[:, cols]
    return X, y


@dataclass
class ForestModel:
    schema: tuple[str, ...]
    n_trees: int
    mtry: int
    min_leaf: int
    seed: int
    feature_subsample: str  # "node" or "tree"
    node_feature: np.ndarray = field(repr=False, default=None)
    node_threshold: np.ndarray = field(repr=False, default=None)
    node_left: np.ndarray = field(repr=False, default=None)
    node_right: np.ndarray = field(repr=False, default=None)
    node_value: np.ndarray = field(repr=False, default=None)
    offsets: np.ndarray = field(repr=False, default=None)
    importance_raw: np.ndarray = field(repr=False, default=None)
    label_min: float = 0.0
    label_max: float = 0.0

    @property
    def n_nodes(self) -> int:
        return int(self.offsets[-1])


def _candidate_matrix(rng: np.random.Generator, cap: int, p: int, mtry: int, mode: str) -> np.ndarray:
    if mode == "node":
        keys = rng.random((cap, p))
        return np.argsort(keys, axis=1, kind="stable")[:, :mtry].astype(np.int32)
    if mode == "tree":
        chosen = rng.permutation(p)[:mtry].astype(np.int32)
        return np.repeat(chosen[None, :], cap, axis=0).copy()
    raise ValueError(f"unknown feature_subsample mode {mode!r}")


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    schema: Sequence[str],
    n_trees: int = 1000,
    mtry: int = 3,
    min_leaf: int = 1,
    seed: int = 0,
    feature_subsample: str = "node",
) -> ForestModel:
    """Bootstrap-aggregated regression trees with per-split feature subsets.

    Deterministic given the seed: tree t draws its bootstrap and candidate
    features from the t-th spawned generator regardless of execution order.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = X.shape
    if n == 0:
        raise ValueError("empty training data")
    if len(np.unique(y)) < 2:
        raise ValueError("training labels are constant; need at least 2 distinct values")
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}], got {mtry}")
    if n_trees < 1:
        raise ValueError("n_trees must be positive")
    children = np.random.SeedSequence(seed).spawn(n_trees)
    feats: list[np.ndarray] = []
    thresholds: list[np.ndarray] = []
    lefts: list[np.ndarray] = []
    rights: list[np.ndarray] = []
    values: list[np.ndarray] = []
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    importance = np.zeros(p, dtype=np.float64)
    cap = 2 * n + 1
    for t in range(n_trees):
        rng = np.random.default_rng(children[t])
        boot = rng.integers(0, n, size=n)
        cand = _candidate_matrix(rng, cap, p, mtry, feature_subsample)
        f, thr, left, right, value, _count, n_nodes, imp = kernels.grow_tree(
            X[boot], y[boot], cand, min_leaf
        )
        feats.append(np.asarray(f[:n_nodes], dtype=np.int32))
        thresholds.append(np.asarray(thr[:n_nodes], dtype=np.float64))
        lefts.append(np.asarray(left[:n_nodes], dtype=np.int32))
        rights.append(np.asarray(right[:n_nodes], dtype=np.int32))
        values.append(np.asarray(value[:n_nodes], dtype=np.float64))
        offsets[t + 1] = offsets[t] + n_nodes
        importance += imp
    return ForestModel(
        schema=tuple(schema),
        n_trees=n_trees,
        mtry=mtry,
        min_leaf=min_leaf,
        seed=seed,
        feature_subsample=feature_subsample,
        node_feature=np.concatenate(feats),
        node_threshold=np.concatenate(thresholds),
        node_left=np.concatenate(lefts),
        node_right=np.concatenate(rights),
        node_value=np.concatenate(values),
        offsets=offsets,
        importance_raw=importance,
        label_min=float(y.min()),
        label_max=float(y.max()),
    )


def fit_forest_instances(instances: Sequence[TrainingInstance], **kwargs) -> ForestModel:
    schema = dataset_schema(instances)
    X, y = design_matrix(instances)
    return fit_forest(X, y, schema, **kwargs)


def predict_matrix(model: ForestModel, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.schema):
        raise ValueError(
            f"feature matrix width {X.shape[-1]} does not match schema size {len(model.schema)}"
        )
    return kernels.predict_forest(
        X,
        model.node_feature,
        model.node_threshold,
        model.node_left,
        model.node_right,
        model.node_value,
        model.offsets,
    )


def predict_instance(model: ForestModel, features: FeatureVector) -> float:
    if features.schema != model.schema:
        raise ValueError("feature schema does not match the trained model")
    return float(predict_matrix(model, features.values[None, :])[0])


def gini_importance(model: ForestModel) -> dict[str, float]:
    """Impurity-decrease importance per feature, normalized to sum 1.

    Impurity is the within-node label sum of squares (variance criterion for
    regression trees); a feature never chosen by any split scores 0.
    """
    raw = model.importance_raw
    total = float(raw.sum())
    if total <= 0:
        return {name: 0.0 for name in model.schema}
    return {name: float(v / total) for name, v in zip(model.schema, raw)}


_MODEL_FORMAT = "tablerank-forest"
_MODEL_VERSION = 1


def save_model(model: ForestModel, path: str | Path) -> None:
    meta = {
        "format": _MODEL_FORMAT,
        "version": _MODEL_VERSION,
        "schema": list(model.schema),
        "n_trees": model.n_trees,
        "mtry": model.mtry,
        "min_leaf": model.min_leaf,
        "seed": model.seed,
        "feature_subsample": model.feature_subsample,
        "label_min": model.label_min,
        "label_max": model.label_max,
    }
    np.savez_compressed(
        path,
        meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
        node_feature=model.node_feature,
        node_threshold=model.node_threshold,
        node_left=model.node_left,
        node_right=model.node_right,
        node_value=model.node_value,
        offsets=model.offsets,
        importance_raw=model.importance_raw,
    )


def load_model(path: str | Path) -> ForestModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format") != _MODEL_FORMAT:
            raise ValueError(f"{path} is not a saved forest model")
        if meta.get("version") != _MODEL_VERSION:
            raise ValueError(f"unsupported model version {meta.get('version')}")
        return ForestModel(
            schema=tuple(meta["schema"]),
            n_trees=int(meta["n_trees"]),
            mtry=int(meta["mtry"]),
            min_leaf=int(meta["min_leaf"]),
            seed=int(meta["seed"]),
            feature_subsample=meta["feature_subsample"],
            node_feature=data["node_feature"],
            node_threshold=data["node_threshold"],
            node_left=data["node_left"],
            node_right=data["node_right"],
            node_value=data["node_value"],
            offsets=data["offsets"],
            importance_raw=data["importance_raw"],
            label_min=float(meta["label_min"]),
            label_max=float(meta["label_max"]),
        )


# ---------------------------------------------------------------------------
# Cross-validation grouped by query
# ---------------------------------------------------------------------------


@dataclass
class CVResult:
    cutoff: int
    fold_scores: list[float]
    run: Run  # out-of-fold predictions over every query

    @property
    def mean(self) -> float:
        return sum(self.fold_scores) / len(self.fold_scores)


def assign_folds(query_ids: Sequence[str], k: int, seed: int = 0) -> dict[str, int]:
    """Round-robin fold assignment over a seeded shuffle of the query ids."""
    qids = sorted(set(query_ids))
    if k < 2:
        raise ValueError("cross-validation needs k >= 2")
    if len(qids) < k:
        raise ValueError(f"need at least {k} distinct queries, got {len(qids)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(qids))
    return {qids[int(idx)]: pos % k for pos, idx in enumerate(order)}


def qrels_from_instances(instances: Sequence[TrainingInstance]) -> Qrels:
    qrels = Qrels()
    for inst in instances:
        qrels.set(inst.query_id, inst.doc_id, inst.label)
    return qrels


def cross_validate(
    instances: Sequence[TrainingInstance],
    k: int = 5,
    cutoff: int = 20,
    gain: str = "exp",
    seed: int = 0,
    model: str = "forest",
    **fit_kwargs,
) -> CVResult:
    """Query-grouped k-fold evaluation with out-of-fold predictions.

    Every fold trains on the other folds' queries only, then scores its own
    queries; per-fold values are mean NDCG@cutoff over the fold's queries.
    Supported models: forest, linear, lasso.
    """
    dataset_schema(instances)
    folds = assign_folds([inst.query_id for inst in instances], k, seed)
    qrels = qrels_from_instances(instances)
    run = Run(tag=f"cv-{model}")
    fold_scores: list[float] = []
    for fold_id in range(k):
        train = [inst for inst in instances if folds[inst.query_id] != fold_id]
        test = [inst for inst in instances if folds[inst.query_id] == fold_id]
        if not train or not test:
            raise ValueError("fold assignment produced an empty split")
        if model == "forest":
            fitted = fit_forest_instances(train, seed=seed, **fit_kwargs)
            X_test, _ = design_matrix(test)
            scores = predict_matrix(fitted, X_test)
        elif model == "linear":
            lin = fit_linear_regression(train, **fit_kwargs)
            X_test, _ = design_matrix(test, lin.schema)
            scores = lin.predict_matrix(X_test)
        elif model == "lasso":
            las = fit_lasso(train, **fit_kwargs)
            X_test, _ = design_matrix(test, las.schema)
            scores = las.predict_matrix(X_test)
        else:
            raise ValueError(f"unknown model {model!r}")
        fold_run = Run(tag=run.tag)
        for inst, score in zip(test, scores):
            run.add(inst.query_id, inst.doc_id, float(score))
            fold_run.add(inst.query_id, inst.doc_id, float(score))
        fold_qids = {inst.query_id for inst in test}
        fold_qrels = Qrels({(q, d): g for (q, d), g in qrels.items() if q in fold_qids})
        fold_scores.append(ndcg(fold_run, fold_qrels, cutoff, gain).mean)
    return CVResult(cutoff=cutoff, fold_scores=fold_scores, run=run)


# ---------------------------------------------------------------------------
# Linear baselines over named feature subsets
# ---------------------------------------------------------------------------


@dataclass
class LinearModel:
    schema: tuple[str, ...]
    coef: np.ndarray
    intercept: float

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != len(self.schema):
            raise ValueError("feature matrix width does not match model schema")
        return X @ self.coef + self.intercept

    def predict_instance(self, features: FeatureVector) -> float:
        cols = [features.schema.index(n) for n in self.schema]
        return float(features.values[cols] @ self.coef + self.intercept)


def fit_linear_regression(
    instances: Sequence[TrainingInstance], feature_names: Sequence[str] | None = None
) -> LinearModel:
    """Ordinary least squares with intercept over the named features."""
    schema = dataset_schema(instances)
    names = tuple(feature_names) if feature_names is not None else schema
    X, y = design_matrix(instances, names)
    design = np.hstack([X, np.ones((X.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return LinearModel(schema=names, coef=coef[:-1], intercept=float(coef[-1]))


def fit_lasso(
    instances: Sequence[TrainingInstance],
    feature_names: Sequence[str] | None = None,
    alpha: float = 0.01,
) -> LinearModel:
    """L1-regularized linear fit (coordinate descent) over named features."""
    from sklearn.linear_model import Lasso

    schema = dataset_schema(instances)
    names = tuple(feature_names) if feature_names is not None else schema
    X, y = design_matrix(instances, names)
    reg = Lasso(alpha=alpha, max_iter=10000)
    reg.fit(X, y)
    return LinearModel(
        schema=names,
        coef=np.asarray(reg.coef_, dtype=np.float64),
        intercept=float(reg.intercept_),
    )


def save_linear_model(model: LinearModel, path: str | Path) -> None:
    payload = {
        "format": "tablerank-linear",
        "version": 1,
        "schema": list(model.schema),
        "coef": [float(c) for c in model.coef],
        "intercept": model.intercept,
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_linear_model(path: str | Path) -> LinearModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "tablerank-linear":
        raise ValueError(f"{path} is not a saved linear model")
    return LinearModel(
        schema=tuple(payload["schema"]),
        coef=np.array(payload["coef"], dtype=np.float64),
        intercept=float(payload["intercept"]),
    )
