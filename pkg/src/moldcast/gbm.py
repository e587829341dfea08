"""Gradient-boosted regression trees for fill-time prediction.

Plain squared-error boosting: each round fits a regression tree to the current
residuals by exact greedy SSE search over midpoint thresholds, leaves predict
the mean residual, and the ensemble adds ``learning_rate`` times each tree on
top of the training-target mean.

Determinism rules, all of which tests rely on:

* split candidates are midpoints between consecutive distinct sorted values;
* gain ties break toward the lower feature index, then the lower threshold;
* node reductions run in value-sorted order, so fitting is invariant under
  training-row permutation, bit for bit.

Sampled predictions are turned into a dense per-vertex field by copying each
prediction over the sample's k nearest vertices and averaging overlaps.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .mesh import Mesh, knn_batch


class GBMError(ValueError):
    pass


@dataclass(frozen=True)
class GBMConfig:
    learning_rate: float = 0.08
    max_depth: int = 8
    n_estimators: int = 200
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise GBMError("learning_rate must be > 0")
        if self.max_depth < 1:
            raise GBMError("max_depth must be >= 1")
        if self.n_estimators < 1:
            raise GBMError("n_estimators must be >= 1")
        if self.min_samples_leaf < 1:
            raise GBMError("min_samples_leaf must be >= 1")


class RegressionTree:
    """Flat-array binary tree; internal nodes route left iff feature <= threshold."""

    __slots__ = ("feature", "threshold", "left", "right", "value", "is_leaf")

    def __init__(self, feature, threshold, left, right, value, is_leaf):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)
        self.is_leaf = np.asarray(is_leaf, dtype=bool)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int32)
        active = ~self.is_leaf[node]
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active = ~self.is_leaf[node]
        return self.value[node]


class _TreeBuilder:
    def __init__(self, X, residuals, config: GBMConfig):
        self.X = X
        self.r = residuals
        self.cfg = config
        self.feature, self.threshold = [], []
        self.left, self.right = [], []
        self.value, self.is_leaf = [], []
        self.train_pred = np.empty(len(residuals))

    def _add_node(self):
        for lst, fill in ((self.feature, -1), (self.threshold, 0.0), (self.left, -1),
                          (self.right, -1), (self.value, 0.0), (self.is_leaf, True)):
            lst.append(fill)
        return len(self.feature) - 1

    def _leaf(self, node, idx):
        r = np.sort(self.r[idx])  # canonical order, see module docstring
        v = r.sum() / len(r)
        self.value[node] = v
        self.train_pred[idx] = v

    def _best_split(self, idx):
        n = len(idx)
        min_leaf = self.cfg.min_samples_leaf
        best = None
        best_gain = 0.0
        for f in range(self.X.shape[1]):
            xs = self.X[idx, f]
            r = self.r[idx]
            order = np.lexsort((r, xs))
            xs_s, r_s = xs[order], r[order]
            boundary = xs_s[1:] != xs_s[:-1]
            if not boundary.any():
                continue
            prefix = np.cumsum(r_s)
            total = prefix[-1]
            k = np.arange(1, n)
            valid = boundary & (k >= min_leaf) & (n - k >= min_leaf)
            if not valid.any():
                continue
            s_left = prefix[:-1]
            gain = s_left * s_left / k + (total - s_left) * (total - s_left) / (n - k) \
                - total * total / n
            gain[~valid] = -np.inf
            j = int(np.argmax(gain))  # first max: lowest threshold
            if gain[j] > best_gain:
                th = (xs_s[j] + xs_s[j + 1]) / 2.0
                if th >= xs_s[j + 1]:  # adjacent floats: midpoint rounded up
                    th = xs_s[j]
                best_gain = gain[j]
                best = (f, th)
        return best

    def build(self):
        root = self._add_node()
        stack = [(root, np.arange(len(self.r)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            r = self.r[idx]
            if (depth >= self.cfg.max_depth or len(idx) < 2 * self.cfg.min_samples_leaf
                    or r.min() == r.max()):
                self._leaf(node, idx)
                continue
            split = self._best_split(idx)
            if split is None:
                self._leaf(node, idx)
                continue
            f, th = split
            go_left = self.X[idx, f] <= th
            self.feature[node] = f
            self.threshold[node] = th
            self.is_leaf[node] = False
            lnode = self._add_node()
            rnode = self._add_node()
            self.left[node] = lnode
            self.right[node] = rnode
            stack.append((rnode, idx[~go_left], depth + 1))
            stack.append((lnode, idx[go_left], depth + 1))
        return RegressionTree(self.feature, self.threshold, self.left, self.right,
                              self.value, self.is_leaf), self.train_pred


class GBMModel:
    """Boosted ensemble: prediction = base_score + learning_rate * sum of trees."""

    def __init__(self, base_score: float, trees: list[RegressionTree], config: GBMConfig,
                 n_features: int, loss_history=None):
        self.base_score = float(base_score)
        self.trees = trees
        self.config = config
        self.n_features = int(n_features)
        self.loss_history = list(loss_history or [])

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise GBMError(f"expected {self.n_features} features, got {X.shape[1]}")
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return self.base_score + self.config.learning_rate * total


def fit(X: np.ndarray, y: np.ndarray, config: GBMConfig | None = None) -> GBMModel:
    """Train the boosted ensemble; model.loss_history holds per-round train MSE."""
    config = config or GBMConfig()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise GBMError("training set must be a nonempty 2d array")
    if len(X) != len(y):
        raise GBMError("features and targets must have equal length")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise GBMError("non-finite value in training data")
    base = np.sort(y).sum() / len(y)
    pred = np.full(len(y), base)
    trees = []
    history = []
    for _ in range(config.n_estimators):
        residual = y - pred
        tree, tree_pred = _TreeBuilder(X, residual, config).build()
        trees.append(tree)
        pred = pred + config.learning_rate * tree_pred
        e = y - pred
        history.append(float(np.mean(e * e)))
    return GBMModel(base, trees, config, X.shape[1], history)


def smooth_predictions(mesh: Mesh, sampled: np.ndarray, preds: np.ndarray,
                       k: int = 100, areas: np.ndarray | None = None) -> np.ndarray:
    """Spread sampled predictions over each sample's k nearest vertices.

    Overlapping areas average their contributions; vertices covered by no area
    take the prediction of the Euclidean-nearest sampled point (ties toward the
    earlier sample). Precomputed neighborhoods may be passed via ``areas``.
    """
    sampled = np.asarray(sampled, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.float64)
    if len(sampled) == 0:
        raise GBMError("empty sample set")
    if len(sampled) != len(preds):
        raise GBMError("preds must align with sampled ids")
    if k < 1:
        raise GBMError("k must be >= 1")
    n = mesh.n_vertices
    k = min(k, n)
    if areas is None:
        areas = knn_batch(mesh.vertices, mesh.vertices[sampled], k)
    elif areas.shape != (len(sampled), k):
        raise GBMError(f"areas must be ({len(sampled)}, {k})")
    sums = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    # accumulate in ascending sample order (row-major flat) for reproducibility
    np.add.at(sums, areas.ravel(), np.repeat(preds, k))
    np.add.at(counts, areas.ravel(), 1)
    field = np.zeros(n)
    covered = counts > 0
    field[covered] = sums[covered] / counts[covered]
    missing = np.flatnonzero(~covered)
    if len(missing):
        d2 = ((mesh.vertices[missing][:, None, :] - mesh.vertices[sampled][None, :, :]) ** 2).sum(axis=2)
        field[missing] = preds[np.argmin(d2, axis=1)]
    return field


# ---------------------------------------------------------------------------
# model file format

_FORMAT = "moldcast-gbm"
_VERSION = 1


def serialize(model: GBMModel) -> str:
    doc = {
        "format": _FORMAT,
        "version": _VERSION,
        "config": asdict(model.config),
        "base_score": model.base_score,
        "n_features": model.n_features,
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "value": tree.value.tolist(),
                "is_leaf": tree.is_leaf.tolist(),
            }
            for tree in model.trees
        ],
    }
    return json.dumps(doc)


def deserialize(text: str) -> GBMModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise GBMError(f"malformed model document: {e}") from None
    if not isinstance(doc, dict) or doc.get("format") != _FORMAT:
        raise GBMError("not a gbm model document")
    if doc.get("version") != _VERSION:
        raise GBMError(f"unsupported model version {doc.get('version')!r}")
    try:
        config = GBMConfig(**doc["config"])
        trees = [
            RegressionTree(t["feature"], t["threshold"], t["left"], t["right"],
                           t["value"], t["is_leaf"])
            for t in doc["trees"]
        ]
        model = GBMModel(doc["base_score"], trees, config, doc["n_features"])
    except (KeyError, TypeError) as e:
        raise GBMError(f"malformed model document: {e}") from None
    return model


def save_model(model: GBMModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize(model))


def load_model(path) -> GBMModel:
    with open(path) as fh:
        return deserialize(fh.read())
