"""From-scratch classifiers: distance-weighted KNN, random forest, and a
second-order gradient-boosted tree ensemble with softmax objective.

Class labels are kept as text externally; internally every model works with
dense integer ids in first-appearance order. All tie-breaks (votes, argmax
over classes, split candidates) resolve toward the smallest class id / lowest
feature index / lowest threshold, which keeps training and prediction fully
deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from synthbal.dataset import TabularDataset


class ClassifyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# KNN
# ---------------------------------------------------------------------------

@dataclass
class KnnModel:
    train_rows: np.ndarray
    train_label_ids: np.ndarray
    classes: tuple[str, ...]
    k: int
    metric: str = "manhattan"
    weighting: str = "distance"

    def __post_init__(self):
        if self.k < 1:
            raise ClassifyError(f"k must be >= 1, got {self.k}")
        if self.k > len(self.train_rows):
            raise ClassifyError(
                f"k={self.k} exceeds training size {len(self.train_rows)}"
            )
        if self.metric not in ("manhattan", "euclidean"):
            raise ClassifyError(f"unknown metric '{self.metric}'")
        if self.weighting not in ("uniform", "distance"):
            raise ClassifyError(f"unknown weighting '{self.weighting}'")


def knn_train(
    ds: TabularDataset, k: int = 10, metric: str = "manhattan", weighting: str = "distance"
) -> KnnModel:
    if ds.n_rows == 0:
        raise ClassifyError("empty training set")
    return KnnModel(
        train_rows=ds.rows,
        train_label_ids=ds.label_ids(),
        classes=ds.classes,
        k=k,
        metric=metric,
        weighting=weighting,
    )


def _pairwise_distance(queries: np.ndarray, train: np.ndarray, metric: str) -> np.ndarray:
    if metric == "manhattan":
        return np.abs(queries[:, None, :] - train[None, :, :]).sum(axis=2)
    diff = queries[:, None, :] - train[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def knn_predict(model: KnnModel, rows: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Predict labels for query rows.

    Distance weighting votes with 1/d; zero-distance neighbors, when present
    among the k nearest, dominate by majority among themselves. Class-vote
    ties resolve to the smallest class id.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.train_rows.shape[1]:
        raise ClassifyError(
            f"query width {rows.shape} does not match training width "
            f"{model.train_rows.shape[1]}"
        )
    n_classes = len(model.classes)
    out = np.empty(len(rows), dtype=np.int64)
    for start in range(0, len(rows), chunk):
        block = rows[start : start + chunk]
        dists = _pairwise_distance(block, model.train_rows, model.metric)
        for i, d in enumerate(dists):
            nearest = np.argpartition(d, model.k - 1)[: model.k]
            nearest = nearest[np.argsort(d[nearest], kind="stable")]
            nd = d[nearest]
            labels = model.train_label_ids[nearest]
            votes = np.zeros(n_classes)
            zero = nd == 0.0
            if model.weighting == "uniform":
                np.add.at(votes, labels, 1.0)
            elif zero.any():
                # 1/d is singular at exact matches; they win by majority.
                np.add.at(votes, labels[zero], 1.0)
            else:
                np.add.at(votes, labels, 1.0 / nd)
            out[start + i] = int(np.argmax(votes))
    return np.asarray([model.classes[c] for c in out])


# ---------------------------------------------------------------------------
# Trees: flat node arrays shared by the forest and the boosted ensemble
# ---------------------------------------------------------------------------

@dataclass
class DecisionTree:
    """Flat binary tree. feature == -1 marks a leaf; leaf payload is either a
    class distribution (classification) or a scalar value (regression)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    payload: np.ndarray
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, rows: np.ndarray) -> np.ndarray:
        """Leaf node index for every row (vectorized level walk)."""
        node = np.zeros(len(rows), dtype=np.int64)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return node
            idx = np.flatnonzero(internal)
            feats = self.feature[node[idx]]
            thresh = self.threshold[node[idx]]
            go_left = rows[idx, feats] < thresh
            node[idx] = np.where(
                go_left, self.left[node[idx]], self.right[node[idx]]
            )


class _TreeBuilder:
    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.payload: list = []

    def add(self, feature=-1, threshold=0.0, payload=None) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.payload.append(payload)
        return len(self.feature) - 1

    def finish(self, max_depth: int) -> DecisionTree:
        return DecisionTree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            payload=np.asarray(self.payload, dtype=np.float64),
            max_depth=max_depth,
        )


def _best_gini_split(
    rows: np.ndarray, label_ids: np.ndarray, n_classes: int, features: np.ndarray
) -> tuple[int, float, float] | None:
    """Exhaustive midpoint split search; returns (feature, threshold, score).

    Score is the weighted child Gini impurity (lower is better). Ties keep the
    lowest feature index, then the lowest threshold.
    """
    n = len(rows)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), label_ids] = 1.0
    best = None
    for f in sorted(int(x) for x in features):
        order = np.argsort(rows[:, f], kind="stable")
        vals = rows[order, f]
        counts_left = np.cumsum(onehot[order], axis=0)[:-1]
        valid = vals[1:] != vals[:-1]
        if not valid.any():
            continue
        n_left = np.arange(1, n)
        n_right = n - n_left
        total = counts_left[-1] + onehot[order[-1]]
        counts_right = total[None, :] - counts_left
        gini_left = 1.0 - (counts_left**2).sum(axis=1) / n_left**2
        gini_right = 1.0 - (counts_right**2).sum(axis=1) / n_right**2
        score = (n_left * gini_left + n_right * gini_right) / n
        score[~valid] = np.inf
        pos = int(np.argmin(score))
        if best is None or score[pos] < best[2] - 1e-15:
            thresh = (vals[pos] + vals[pos + 1]) / 2.0
            best = (f, float(thresh), float(score[pos]))
    return best


def _grow_gini_tree(
    rows: np.ndarray,
    label_ids: np.ndarray,
    n_classes: int,
    max_depth: int,
    max_features: float,
    rng: np.random.Generator,
) -> DecisionTree:
    builder = _TreeBuilder()
    n_candidates = max(1, math.ceil(max_features * rows.shape[1]))

    def leaf_payload(ids: np.ndarray) -> np.ndarray:
        counts = np.bincount(ids, minlength=n_classes).astype(np.float64)
        return counts / counts.sum()

    def grow(idx: np.ndarray, depth: int) -> int:
        ids = label_ids[idx]
        if depth >= max_depth or len(idx) < 2 or len(np.unique(ids)) == 1:
            return builder.add(payload=leaf_payload(ids))
        features = rng.choice(rows.shape[1], size=n_candidates, replace=False)
        split = _best_gini_split(rows[idx], ids, n_classes, features)
        if split is None:
            return builder.add(payload=leaf_payload(ids))
        f, thresh, _ = split
        node = builder.add(feature=f, threshold=thresh, payload=np.zeros(n_classes))
        mask = rows[idx, f] < thresh
        left = grow(idx[mask], depth + 1)
        right = grow(idx[~mask], depth + 1)
        builder.left[node] = left
        builder.right[node] = right
        return node

    grow(np.arange(len(rows)), 0)
    return builder.finish(max_depth)


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------

@dataclass
class ForestParams:
    n_estimators: int = 100
    max_depth: int = 18
    max_features: float = 0.6
    bootstrap: bool = True
    max_samples: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ClassifyError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.n_estimators < 1:
            raise ClassifyError("n_estimators must be >= 1")
        if not 0 < self.max_features <= 1 or not 0 < self.max_samples <= 1:
            raise ClassifyError("max_features and max_samples must be in (0, 1]")


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    classes: tuple[str, ...]
    params: ForestParams


def forest_train(ds: TabularDataset, params: ForestParams) -> ForestModel:
    """Bagged Gini trees; each tree sees a bootstrap sample and a random
    feature subset per split. Deterministic per seed, with one independent
    stream per tree."""
    if ds.n_rows == 0:
        raise ClassifyError("empty training set")
    label_ids = ds.label_ids()
    n_classes = len(ds.classes)
    n = ds.n_rows
    sample_size = max(1, math.ceil(params.max_samples * n))
    streams = np.random.SeedSequence(params.seed).spawn(params.n_estimators)
    trees = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        if params.bootstrap:
            idx = rng.integers(0, n, size=sample_size)
        else:
            idx = rng.choice(n, size=min(sample_size, n), replace=False)
        trees.append(
            _grow_gini_tree(
                ds.rows[idx], label_ids[idx], n_classes, params.max_depth,
                params.max_features, rng,
            )
        )
    return ForestModel(trees=trees, classes=ds.classes, params=params)


def forest_predict(model: ForestModel, rows: np.ndarray) -> np.ndarray:
    """Majority vote over the per-tree argmax classes; ties -> smallest id."""
    rows = np.asarray(rows, dtype=np.float64)
    n_classes = len(model.classes)
    votes = np.zeros((len(rows), n_classes))
    for tree in model.trees:
        leaves = tree.apply(rows)
        picks = np.argmax(tree.payload[leaves], axis=1)
        votes[np.arange(len(rows)), picks] += 1.0
    ids = np.argmax(votes, axis=1)
    return np.asarray([model.classes[c] for c in ids])


# ---------------------------------------------------------------------------
# Gradient-boosted trees (softmax objective, second-order leaf weights)
# ---------------------------------------------------------------------------

@dataclass
class GbdtParams:
    n_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.1
    l2_lambda: float = 1.0
    subsample: float = 0.9
    colsample: float = 1.0
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1 or self.max_depth < 1:
            raise ClassifyError("n_rounds and max_depth must be >= 1")
        if not 0 < self.subsample <= 1 or not 0 < self.colsample <= 1:
            raise ClassifyError("subsample and colsample must be in (0, 1]")
        if self.learning_rate < 0:
            raise ClassifyError("learning_rate must be >= 0")
        if self.l2_lambda < 0:
            raise ClassifyError("l2_lambda must be >= 0")


@dataclass
class BoostedModel:
    ensembles: list[list[DecisionTree]]  # one additive tree list per class
    base_margins: np.ndarray  # log class priors
    classes: tuple[str, ...]
    params: GbdtParams


def leaf_value(g_sum: float, h_sum: float, l2_lambda: float) -> float:
    """Second-order optimal leaf weight: -sum(g) / (sum(h) + lambda)."""
    return -g_sum / (h_sum + l2_lambda)


def _best_second_order_split(
    rows: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    features: np.ndarray,
    l2_lambda: float,
) -> tuple[int, float, float] | None:
    """Maximize the split gain derived from the second-order loss expansion."""
    n = len(rows)
    g_total = g.sum()
    h_total = h.sum()
    parent = g_total**2 / (h_total + l2_lambda)
    best = None
    for f in sorted(int(x) for x in features):
        order = np.argsort(rows[:, f], kind="stable")
        vals = rows[order, f]
        g_left = np.cumsum(g[order])[:-1]
        h_left = np.cumsum(h[order])[:-1]
        valid = vals[1:] != vals[:-1]
        if not valid.any():
            continue
        g_right = g_total - g_left
        h_right = h_total - h_left
        gain = (
            g_left**2 / (h_left + l2_lambda)
            + g_right**2 / (h_right + l2_lambda)
            - parent
        )
        gain[~valid] = -np.inf
        pos = int(np.argmax(gain))
        if gain[pos] > 1e-12 and (best is None or gain[pos] > best[2] + 1e-15):
            thresh = (vals[pos] + vals[pos + 1]) / 2.0
            best = (f, float(thresh), float(gain[pos]))
    return best


def _grow_regression_tree(
    rows: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    max_depth: int,
    features: np.ndarray,
    l2_lambda: float,
) -> DecisionTree:
    builder = _TreeBuilder()

    def grow(idx: np.ndarray, depth: int) -> int:
        if depth >= max_depth or len(idx) < 2:
            return builder.add(payload=leaf_value(g[idx].sum(), h[idx].sum(), l2_lambda))
        split = _best_second_order_split(rows[idx], g[idx], h[idx], features, l2_lambda)
        if split is None:
            return builder.add(payload=leaf_value(g[idx].sum(), h[idx].sum(), l2_lambda))
        f, thresh, _ = split
        node = builder.add(feature=f, threshold=thresh, payload=0.0)
        mask = rows[idx, f] < thresh
        left = grow(idx[mask], depth + 1)
        right = grow(idx[~mask], depth + 1)
        builder.left[node] = left
        builder.right[node] = right
        return node

    grow(np.arange(len(rows)), 0)
    return builder.finish(max_depth)


def _softmax(margins: np.ndarray) -> np.ndarray:
    s = margins - margins.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def gbdt_train(ds: TabularDataset, params: GbdtParams) -> BoostedModel:
    """Boosted softmax ensemble: per round and class, a regression tree is fit
    to the gradient/hessian statistics and added with shrinkage."""
    if ds.n_rows == 0:
        raise ClassifyError("empty training set")
    if len(ds.classes) < 2:
        raise ClassifyError("gradient boosting needs at least 2 classes")
    label_ids = ds.label_ids()
    n, n_classes = ds.n_rows, len(ds.classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), label_ids] = 1.0
    priors = onehot.mean(axis=0)
    base = np.log(np.maximum(priors, 1e-12))
    margins = np.tile(base, (n, 1))
    n_cols = max(1, math.ceil(params.colsample * ds.n_features))
    sample_size = max(2, math.ceil(params.subsample * n))
    streams = np.random.SeedSequence(params.seed).spawn(params.n_rounds * n_classes)
    ensembles: list[list[DecisionTree]] = [[] for _ in range(n_classes)]
    for r in range(params.n_rounds):
        probs = _softmax(margins)
        for c in range(n_classes):
            rng = np.random.default_rng(streams[r * n_classes + c])
            g = probs[:, c] - onehot[:, c]
            h = probs[:, c] * (1.0 - probs[:, c])
            if params.bootstrap:
                idx = rng.integers(0, n, size=sample_size)
            else:
                idx = rng.choice(n, size=min(sample_size, n), replace=False)
            features = rng.choice(ds.n_features, size=n_cols, replace=False)
            tree = _grow_regression_tree(
                ds.rows[idx], g[idx], h[idx], params.max_depth, features,
                params.l2_lambda,
            )
            ensembles[c].append(tree)
            if params.learning_rate > 0:
                leaves = tree.apply(ds.rows)
                margins[:, c] += params.learning_rate * tree.payload[leaves]
    return BoostedModel(
        ensembles=ensembles, base_margins=base, classes=ds.classes, params=params
    )


def gbdt_margins(model: BoostedModel, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    margins = np.tile(model.base_margins, (len(rows), 1))
    lr = model.params.learning_rate
    if lr > 0:
        for c, trees in enumerate(model.ensembles):
            for tree in trees:
                leaves = tree.apply(rows)
                margins[:, c] += lr * tree.payload[leaves]
    return margins


def gbdt_predict(model: BoostedModel, rows: np.ndarray) -> np.ndarray:
    ids = np.argmax(gbdt_margins(model, rows), axis=1)
    return np.asarray([model.classes[c] for c in ids])


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CKPT_FORMAT = "synthbal-classifier"
CKPT_VERSION = 1


def _tree_to_dict(tree: DecisionTree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "payload": tree.payload.tolist(),
        "max_depth": tree.max_depth,
    }


def _tree_from_dict(doc: dict) -> DecisionTree:
    return DecisionTree(
        feature=np.asarray(doc["feature"], dtype=np.int64),
        threshold=np.asarray(doc["threshold"], dtype=np.float64),
        left=np.asarray(doc["left"], dtype=np.int64),
        right=np.asarray(doc["right"], dtype=np.int64),
        payload=np.asarray(doc["payload"], dtype=np.float64),
        max_depth=int(doc["max_depth"]),
    )


def save_model(model, path: str | Path, feature_names: tuple[str, ...] = ()) -> None:
    if isinstance(model, KnnModel):
        body = {
            "kind": "knn",
            "train_rows": model.train_rows.tolist(),
            "train_label_ids": model.train_label_ids.tolist(),
            "classes": list(model.classes),
            "k": model.k,
            "metric": model.metric,
            "weighting": model.weighting,
        }
    elif isinstance(model, ForestModel):
        body = {
            "kind": "rf",
            "classes": list(model.classes),
            "params": vars(model.params),
            "trees": [_tree_to_dict(t) for t in model.trees],
        }
    elif isinstance(model, BoostedModel):
        body = {
            "kind": "gbdt",
            "classes": list(model.classes),
            "params": vars(model.params),
            "base_margins": model.base_margins.tolist(),
            "ensembles": [[_tree_to_dict(t) for t in trees] for trees in model.ensembles],
        }
    else:
        raise ClassifyError(f"cannot serialize {type(model).__name__}")
    body["format"] = CKPT_FORMAT
    body["version"] = CKPT_VERSION
    body["feature_names"] = list(feature_names)
    Path(path).write_text(json.dumps(body, sort_keys=True))


def load_model(path: str | Path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CKPT_FORMAT:
        raise ClassifyError(f"{path}: not a classifier checkpoint")
    kind = doc["kind"]
    if kind == "knn":
        model = KnnModel(
            train_rows=np.asarray(doc["train_rows"], dtype=np.float64),
            train_label_ids=np.asarray(doc["train_label_ids"], dtype=np.int64),
            classes=tuple(doc["classes"]),
            k=int(doc["k"]),
            metric=doc["metric"],
            weighting=doc["weighting"],
        )
    elif kind == "rf":
        model = ForestModel(
            trees=[_tree_from_dict(t) for t in doc["trees"]],
            classes=tuple(doc["classes"]),
            params=ForestParams(**doc["params"]),
        )
    elif kind == "gbdt":
        model = BoostedModel(
            ensembles=[[_tree_from_dict(t) for t in trees] for trees in doc["ensembles"]],
            base_margins=np.asarray(doc["base_margins"], dtype=np.float64),
            classes=tuple(doc["classes"]),
            params=GbdtParams(**doc["params"]),
        )
    else:
        raise ClassifyError(f"{path}: unknown model kind '{kind}'")
    return model, tuple(doc.get("feature_names", ()))


def train_classifier(ds: TabularDataset, kind: str, params: dict | None = None):
    """Uniform entry point used by the harness and the CLI."""
    params = dict(params or {})
    if kind == "knn":
        return knn_train(
            ds,
            k=int(params.pop("k", 10)),
            metric=params.pop("metric", "manhattan"),
            weighting=params.pop("weighting", "distance"),
        )
    if kind == "rf":
        return forest_train(ds, ForestParams(**params))
    if kind == "gbdt":
        return gbdt_train(ds, GbdtParams(**params))
    raise ClassifyError(f"unknown classifier kind '{kind}'")


def predict_classifier(model, rows: np.ndarray) -> np.ndarray:
    if isinstance(model, KnnModel):
        return knn_predict(model, rows)
    if isinstance(model, ForestModel):
        return forest_predict(model, rows)
    if isinstance(model, BoostedModel):
        return gbdt_predict(model, rows)
    raise ClassifyError(f"cannot predict with {type(model).__name__}")
