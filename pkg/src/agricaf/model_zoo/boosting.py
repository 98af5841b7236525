"""Gradient boosting: stagewise squared-error fitting of shallow trees.

Each round fits a depth-limited tree to the current residuals and moves the
prediction by ``shrinkage`` times the tree output. Because leaf values are
residual means, training MSE is non-increasing for any shrinkage in (0, 2).
"""

from __future__ import annotations

import numpy as np

from agricaf.errors import ContractError
from agricaf.model_zoo import _tree
from agricaf.model_zoo.base import Regressor

DEFAULTS = {"rounds": 100, "shrinkage": 0.1, "max_depth": 3, "min_leaf": 5}


class GbmModel(Regressor):
    family = "gbm"

    def __init__(self, columns, hyperparameters, seed, init: float, trees: list[_tree.Tree], train_mse: list[float]):
        super().__init__(columns, hyperparameters, seed)
        self.init = float(init)
        self.trees = trees
        self.train_mse = list(train_mse)  # MSE after each round, index 0 = initial model

    def _predict_matrix(self, X):
        nu = float(self.hyperparameters["shrinkage"])
        acc = np.full(X.shape[0], self.init)
        for tree in self.trees:
            acc += nu * tree.predict(X)
        return acc

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
            "init": self.init,
            "trees": [t.to_nested(self.columns) for t in self.trees],
        }

    @staticmethod
    def from_dict(d: dict) -> "GbmModel":
        trees = [_tree.Tree.from_nested(t, d["columns"]) for t in d["trees"]]
        return GbmModel(d["columns"], d["hyperparameters"], d["seed"], d["init"], trees, [])


def fit_gbm(point: dict, X: np.ndarray, y: np.ndarray, columns, seed: int) -> GbmModel:
    hp = {**DEFAULTS, **point}
    n = X.shape[0]
    if n < 2:
        raise ContractError(f"need at least 2 rows to fit, got {n}")
    nu = float(hp["shrinkage"])
    if not 0.0 < nu < 2.0:
        raise ContractError(f"shrinkage must be in (0, 2), got {nu}")
    rows = np.arange(n, dtype=np.int64)
    init = float(np.mean(y))
    current = np.full(n, init)
    trees = []
    mse_path = [float(np.mean((y - current) ** 2))]
    for _ in range(int(hp["rounds"])):
        residuals = y - current
        tree = _tree.build_tree(
            X, residuals, rows,
            max_depth=hp["max_depth"], min_leaf=int(hp["min_leaf"]),
            cp=0.0, mtry=None, rng=None,
        )
        current = current + nu * tree.predict(X)
        trees.append(tree)
        mse_path.append(float(np.mean((y - current) ** 2)))
    return GbmModel(columns, hp, seed, init, trees, mse_path)
