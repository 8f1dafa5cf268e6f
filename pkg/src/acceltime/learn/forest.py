"""Bagged regression trees with per-split feature subsetting."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, sqrt
from typing import Optional

import numpy as np

from .tree import TreeModel, fit_tree

# efficiency predictions are kept inside [U_MIN, 1] so times stay finite
U_MIN = 1e-4


@dataclass
class ForestModel:
    trees: list
    seed: int
    max_features: Optional[int]
    bootstrap: bool = True
    clamp: Optional[tuple] = (U_MIN, 1.0)
    target_range: tuple = (0.0, 0.0)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        pred = np.mean([t.predict(X) for t in self.trees], axis=0)
        if self.clamp is not None:
            pred = np.clip(pred, *self.clamp)
        return pred

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "max_features": self.max_features,
            "bootstrap": self.bootstrap,
            "clamp": None if self.clamp is None else list(self.clamp),
            "target_range": list(self.target_range),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls(
            trees=[TreeModel.from_dict(t) for t in d["trees"]],
            seed=d["seed"],
            max_features=d["max_features"],
            bootstrap=d["bootstrap"],
            clamp=None if d["clamp"] is None else tuple(d["clamp"]),
            target_range=tuple(d["target_range"]),
        )


@dataclass
class ForestParams:
    n_trees: int = 100
    min_samples_leaf: int = 2
    max_depth: Optional[int] = None
    max_features: Optional[int] = None  # None -> ceil(sqrt(d))
    bootstrap: bool = True
    seed: int = 0
    clamp: Optional[tuple] = field(default=(U_MIN, 1.0))


def fit_forest(X, y, params: ForestParams = ForestParams()) -> ForestModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("fit_forest needs a non-empty 2-D feature array")
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    d = X.shape[1]
    mf = params.max_features if params.max_features is not None else ceil(sqrt(d))
    mf = min(mf, d)
    seeds = np.random.SeedSequence(params.seed).spawn(params.n_trees)
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        rows = rng.integers(0, len(X), len(X)) if params.bootstrap else None
        trees.append(fit_tree(X, y, params.max_depth, params.min_samples_leaf, "regression",
                              max_features=mf, rng=rng, sample_rows=rows))
    return ForestModel(trees, params.seed, mf, params.bootstrap, params.clamp,
                       (float(y.min()), float(y.max())))
