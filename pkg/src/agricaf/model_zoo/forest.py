"""Random forest: bagged trees with per-split feature subsampling.

Tree t draws its bootstrap rows and split-candidate features from a PCG64
generator seeded by a stable hash of (seed, "tree", t), so fits reproduce
bit-for-bit regardless of parallelism or platform.
"""

from __future__ import annotations

import numpy as np

from agricaf._util import derive_seed
from agricaf.errors import ContractError
from agricaf.model_zoo import _tree
from agricaf.model_zoo.base import Regressor

DEFAULTS = {"ntree": 500, "mtry": None, "max_depth": None, "min_leaf": 2, "cp": 0.0, "bootstrap": True}


class ForestModel(Regressor):
    family = "rf"

    def __init__(self, columns, hyperparameters, seed, trees: list[_tree.Tree]):
        super().__init__(columns, hyperparameters, seed)
        self.trees = trees

    def _predict_matrix(self, X):
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def importance(self):
        total = np.zeros(len(self.columns))
        for tree in self.trees:
            total += tree.importance
        return {name: float(total[j]) for j, name in enumerate(self.columns)}

    def to_dict(self):
        return {
            "version": 1,
            "family": self.family,
            "columns": list(self.columns),
            "hyperparameters": self.hyperparameters,
            "seed": self.seed,
            "trees": [t.to_nested(self.columns) for t in self.trees],
        }

    @staticmethod
    def from_dict(d: dict) -> "ForestModel":
        trees = [_tree.Tree.from_nested(t, d["columns"]) for t in d["trees"]]
        return ForestModel(d["columns"], d["hyperparameters"], d["seed"], trees)


def fit_forest(point: dict, X: np.ndarray, y: np.ndarray, columns, seed: int) -> ForestModel:
    hp = {**DEFAULTS, **point}
    n, k = X.shape
    if n < 2:
        raise ContractError(f"need at least 2 rows to fit, got {n}")
    mtry = hp["mtry"]
    if mtry is None:
        mtry = max(1, int(np.ceil(k / 3)))
    mtry = min(int(mtry), k)
    ntree = int(hp["ntree"])
    if ntree < 1:
        raise ContractError(f"ntree must be >= 1, got {ntree}")
    trees = []
    for t in range(ntree):
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "tree", t)))
        if hp["bootstrap"]:
            rows = rng.integers(0, n, size=n).astype(np.int64)
        else:
            rows = np.arange(n, dtype=np.int64)
        trees.append(
            _tree.build_tree(
                X, y, rows,
                max_depth=hp["max_depth"], min_leaf=int(hp["min_leaf"]),
                cp=float(hp["cp"]), mtry=mtry, rng=rng,
            )
        )
    hp["mtry"] = mtry
    return ForestModel(columns, hp, seed, trees)
