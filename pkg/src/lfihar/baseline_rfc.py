"""Random-forest baseline on per-window summary statistics.

Features per channel are the temporal mean, population variance and L2 norm,
laid out as ``[means..., variances..., norms...]``. The forest is plain CART
with Gini impurity, bootstrap resampling and sqrt(F) candidate features per
split.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyTrainSet

FORMAT_VERSION = "lfihar-rfc-1"


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray  # (3 * S,)
    label: int
    participant_id: str


def stat_block(data: np.ndarray) -> np.ndarray:
    """Features for a ``(T, S)`` matrix or a ``(N, T, S)`` stack."""
    x = np.asarray(data, dtype=np.float64)
    mean = x.mean(axis=-2)
    var = x.var(axis=-2)
    norm = np.sqrt((x * x).sum(axis=-2))
    return np.concatenate([mean, var, norm], axis=-1)


def stat_features(window) -> FeatureVector:
    return FeatureVector(stat_block(window.data), window.label, window.participant_id)


def feature_matrix(windows) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([stat_block(w.data) for w in windows]) if windows else np.zeros((0, 0))
    y = np.array([w.label for w in windows], dtype=np.int64)
    return X, y


@dataclass(frozen=True)
class RfcConfig:
    trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    seed: int = 0


class DecisionTree:
    """Array-backed CART classifier; ``x <= threshold`` goes left."""

    def __init__(self, max_depth: int | None = None, min_leaf: int = 1, max_features: int | None = None):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, rng: np.random.Generator) -> "DecisionTree":
        n_features = X.shape[1]
        m = self.max_features or max(1, int(math.sqrt(n_features)))
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(np.bincount(y[idx], minlength=n_classes))
            return len(feature) - 1

        root = new_node(np.arange(len(y)))
        stack = [(root, np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            counts = value[node]
            if (np.count_nonzero(counts) <= 1 or len(idx) < 2 * self.min_leaf
                    or (self.max_depth is not None and depth >= self.max_depth)):
                continue
            split = self._best_split(X, y, idx, n_classes, m, rng)
            if split is None:
                continue
            f, thr = split
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            feature[node], threshold[node] = f, thr
            left[node] = new_node(li)
            right[node] = new_node(ri)
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))

        self.feature = np.array(feature, dtype=np.int64)
        self.threshold = np.array(threshold, dtype=np.float64)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.value = np.array(value, dtype=np.int64)
        return self

    def _best_split(self, X, y, idx, n_classes, m, rng):
        order = rng.permutation(X.shape[1])
        best = None  # (impurity, feature, threshold)
        n = len(idx)
        onehot = np.eye(n_classes, dtype=np.int64)[y[idx]]
        total = onehot.sum(axis=0)
        pos = np.arange(1, n)
        for tried, f in enumerate(order):
            # sqrt(F) candidates, but keep looking until one valid split exists
            if tried >= m and best is not None:
                break
            x = X[idx, f]
            o = np.argsort(x, kind="stable")
            xs = x[o]
            left_counts = np.cumsum(onehot[o], axis=0)[:-1]
            right_counts = total - left_counts
            n_left = pos
            n_right = n - pos
            ok = (xs[1:] > xs[:-1]) & (n_left >= self.min_leaf) & (n_right >= self.min_leaf)
            if not ok.any():
                continue
            # n * weighted Gini = n - sum(l^2)/n_l - sum(r^2)/n_r
            score = n - (left_counts**2).sum(axis=1) / n_left - (right_counts**2).sum(axis=1) / n_right
            score = np.where(ok, score, np.inf)
            i = int(np.argmin(score))
            if best is None or score[i] < best[0]:
                best = (score[i], int(f), float((xs[i] + xs[i + 1]) / 2))
        return None if best is None else best[1:]

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            inner = self.feature[node] >= 0
            if not inner.any():
                return node
            f = np.where(inner, self.feature[node], 0)
            go_left = X[rows, f] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax picks the lowest class index on ties
        return np.argmax(self.value[self.apply(X)], axis=1)


class RandomForest:
    def __init__(self, trees: list[DecisionTree], n_classes: int, config: RfcConfig):
        self.trees = trees
        self.n_classes = n_classes
        self.config = config

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        counts = np.zeros((len(X), self.n_classes), dtype=np.int64)
        for tree in self.trees:
            counts[np.arange(len(X)), tree.predict(X)] += 1
        return counts

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)

    def save(self, path) -> None:
        header = {
            "format": FORMAT_VERSION,
            "n_classes": self.n_classes,
            "config": self.config.__dict__,
            "trees": len(self.trees),
        }
        arrays = {"header": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)}
        for i, t in enumerate(self.trees):
            for name in ("feature", "threshold", "left", "right", "value"):
                arrays[f"t{i}_{name}"] = getattr(t, name)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "RandomForest":
        with np.load(path) as z:
            header = json.loads(bytes(z["header"]).decode())
            if header.get("format") != FORMAT_VERSION:
                raise ValueError(f"unsupported forest format {header.get('format')!r}")
            trees = []
            for i in range(header["trees"]):
                t = DecisionTree()
                for name in ("feature", "threshold", "left", "right", "value"):
                    setattr(t, name, z[f"t{i}_{name}"])
                trees.append(t)
        return cls(trees, header["n_classes"], RfcConfig(**header["config"]))


def train_rfc(features, config: RfcConfig = RfcConfig(), n_classes: int | None = None) -> RandomForest:
    """Fit a forest on a list of FeatureVectors or an ``(X, y)`` pair."""
    if isinstance(features, tuple):
        X, y = features
    else:
        features = list(features)
        X = np.stack([f.values for f in features]) if features else np.zeros((0, 0))
        y = np.array([f.label for f in features], dtype=np.int64)
    if len(y) == 0:
        raise EmptyTrainSet("random forest needs at least one training sample")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_classes = n_classes or int(y.max()) + 1
    trees = []
    for child in np.random.SeedSequence(config.seed).spawn(config.trees):
        rng = np.random.default_rng(child)
        boot = rng.integers(0, len(y), len(y))
        trees.append(DecisionTree(config.max_depth, config.min_leaf).fit(X[boot], y[boot], n_classes, rng))
    return RandomForest(trees, n_classes, config)


def predict_rfc(model: RandomForest, feature) -> int:
    values = feature.values if isinstance(feature, FeatureVector) else feature
    return int(model.predict(np.asarray(values)[None, :])[0])
