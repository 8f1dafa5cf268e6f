"""CART decision trees for regression and binary/multiclass classification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

_EPS = 1e-12


@dataclass
class TreeModel:
    """A fitted tree stored as flat node arrays.

    ``feature[i] == -1`` marks a leaf. Internal node ``i`` sends a sample
    left when ``x[feature[i]] <= threshold[i]``.
    """

    task: str
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # regression mean, or predicted class
    counts: Optional[np.ndarray]  # classification: per-node class counts
    classes: Optional[np.ndarray]
    n_features: int
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        parent = np.full(self.n_nodes, -1)
        side = [""] * self.n_nodes
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                parent[self.left[i]] = parent[self.right[i]] = i
                side[self.left[i]], side[self.right[i]] = "left", "right"
        nodes = []
        for i in range(self.n_nodes):
            node = {"id": i, "parent": int(parent[i]), "side": side[i]}
            if self.feature[i] >= 0:
                node.update(feature=int(self.feature[i]), threshold=float(self.threshold[i]))
            else:
                node["value"] = float(self.value[i])
            if self.counts is not None:
                node["class_counts"] = [int(c) for c in self.counts[i]]
            nodes.append(node)
        return {
            "task": self.task,
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "classes": None if self.classes is None else [float(c) for c in self.classes],
            "nodes": nodes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeModel":
        nodes = d["nodes"]
        n = len(nodes)
        feature = np.full(n, -1, dtype=int)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=int)
        right = np.full(n, -1, dtype=int)
        value = np.zeros(n)
        counts = None
        if d["task"] == "classification":
            counts = np.array([node["class_counts"] for node in nodes], dtype=int)
        for node in nodes:
            i = node["id"]
            if "feature" in node:
                feature[i] = node["feature"]
                threshold[i] = node["threshold"]
            else:
                value[i] = node["value"]
            if node["parent"] >= 0:
                (left if node["side"] == "left" else right)[node["parent"]] = i
        classes = None if d.get("classes") is None else np.array(d["classes"])
        if counts is not None:
            # internal nodes still carry their majority class
            value = classes[np.argmax(counts, axis=1)]
        else:
            for i in range(n - 1, -1, -1):
                if feature[i] >= 0:
                    value[i] = np.nan
        if not np.all(np.isfinite(threshold[feature >= 0])):
            raise ValueError("non-finite tree threshold")
        return cls(d["task"], feature, threshold, left, right, value, counts, classes,
                   d["n_features"], d.get("max_depth"), d.get("min_samples_leaf", 1))


def _best_split(X, y, rows, features, task, n_classes, min_leaf):
    """Best (feature, threshold, score) over ``features``; score is child impurity mass.

    Regression score: summed squared error of both children.
    Classification score: n_left * gini_left + n_right * gini_right.
    Strictly better scores win, so ties keep the earlier feature and lower threshold.
    """
    n = len(rows)
    best = (None, None, np.inf)
    yr = y[rows]
    for j in features:
        xj = X[rows, j]
        order = np.argsort(xj, kind="stable")
        xs = xj[order]
        # candidate cut positions: between i-1 and i where values differ
        cut = np.nonzero(xs[1:] > xs[:-1])[0] + 1
        cut = cut[(cut >= min_leaf) & (cut <= n - min_leaf)]
        if len(cut) == 0:
            continue
        if task == "regression":
            ys = yr[order]
            c1 = np.cumsum(ys)
            c2 = np.cumsum(ys * ys)
            nl = cut.astype(float)
            nr = n - nl
            sl, ql = c1[cut - 1], c2[cut - 1]
            sr, qr = c1[-1] - sl, c2[-1] - ql
            score = (ql - sl * sl / nl) + (qr - sr * sr / nr)
        else:
            onehot = np.zeros((n, n_classes))
            onehot[np.arange(n), yr[order].astype(int)] = 1.0
            cc = np.cumsum(onehot, axis=0)
            cl = cc[cut - 1]
            cr = cc[-1] - cl
            nl = cut.astype(float)
            nr = n - nl
            score = (nl - (cl * cl).sum(1) / nl) + (nr - (cr * cr).sum(1) / nr)
        score = np.maximum(score, 0.0)
        k = int(np.argmin(score))  # first minimum -> lowest threshold
        if score[k] < best[2] - _EPS * max(1.0, abs(best[2]) if np.isfinite(best[2]) else 1.0):
            thr = 0.5 * (xs[cut[k] - 1] + xs[cut[k]])
            best = (j, thr, float(score[k]))
    return best


class _Builder:
    def __init__(self, X, y, task, n_classes, max_depth, min_leaf, max_features=None, rng=None):
        self.X, self.y, self.task = X, y, task
        self.n_classes = n_classes
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.rng = rng
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.counts = [], []

    def _new(self, rows):
        yr = self.y[rows]
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        if self.task == "regression":
            self.value.append(float(yr.mean()))
        else:
            cnt = np.bincount(yr.astype(int), minlength=self.n_classes)
            self.counts.append(cnt)
            self.value.append(int(np.argmax(cnt)))  # ties -> lowest class
        return len(self.feature) - 1

    def _pure(self, rows) -> bool:
        yr = self.y[rows]
        return bool(np.all(yr == yr[0]))

    def build(self, rows) -> None:
        stack = [(self._new(rows), rows, 0)]
        d = self.X.shape[1]
        while stack:
            node, rows, depth = stack.pop()
            if (self.max_depth is not None and depth >= self.max_depth) or len(rows) < 2 * self.min_leaf \
                    or self._pure(rows):
                continue
            if self.max_features is None or self.max_features >= d:
                feats = range(d)
            else:
                feats = np.sort(self.rng.choice(d, self.max_features, replace=False))
            j, thr, _ = _best_split(self.X, self.y, rows, feats, self.task, self.n_classes, self.min_leaf)
            if j is None:
                continue
            mask = self.X[rows, j] <= thr
            lrows, rrows = rows[mask], rows[~mask]
            self.feature[node], self.threshold[node] = int(j), float(thr)
            li, ri = self._new(lrows), self._new(rrows)
            self.left[node], self.right[node] = li, ri
            stack.append((ri, rrows, depth + 1))
            stack.append((li, lrows, depth + 1))


def fit_tree(X, y, max_depth: Optional[int] = None, min_samples_leaf: int = 1,
             task: str = "regression", max_features: Optional[int] = None, rng=None,
             sample_rows: Optional[Sequence[int]] = None) -> TreeModel:
    """Greedy CART on (X, y).

    Regression splits minimise the children's squared error, classification
    splits the size-weighted Gini impurity. Growth stops at ``max_depth``,
    at pure nodes, or when a node cannot give both children
    ``min_samples_leaf`` rows. ``sample_rows`` lets an ensemble pass a
    bootstrap sample (with repeats) without copying X.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("fit_tree needs a non-empty 2-D feature array")
    if len(y) != len(X):
        raise ValueError("X and y lengths differ")
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    if min_samples_leaf < 1:
        raise ValueError("min_samples_leaf must be >= 1")
    rows = np.arange(len(X)) if sample_rows is None else np.asarray(sample_rows, dtype=int)
    if len(rows) < 2 * min_samples_leaf and len(rows) > 1:
        raise ValueError(f"need at least {2 * min_samples_leaf} rows, got {len(rows)}")
    classes = None
    n_classes = 0
    if task == "classification":
        classes, y = np.unique(y, return_inverse=True)
        y = y.astype(float)
        n_classes = len(classes)
    if rng is None:
        rng = np.random.default_rng(0)
    b = _Builder(X, y, task, n_classes, max_depth, min_samples_leaf, max_features, rng)
    b.build(rows)
    value = np.array(b.value, dtype=float)
    counts = None
    if task == "classification":
        counts = np.array(b.counts, dtype=int)
        value = classes[value.astype(int)]
    return TreeModel(task, np.array(b.feature, dtype=int), np.array(b.threshold), np.array(b.left, dtype=int),
                     np.array(b.right, dtype=int), value, counts, classes, X.shape[1], max_depth,
                     min_samples_leaf)
