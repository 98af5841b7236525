"""CART regression: a single greedy SSE-minimizing binary tree."""

from __future__ import annotations

import numpy as np

from agricaf.errors import ContractError
from agricaf.model_zoo import _tree
from agricaf.model_zoo.base import Regressor

DEFAULTS = {"max_depth": 5, "min_leaf": 2, "cp": 0.0}


class CartModel(Regressor):
    family = "cart"

    def __init__(self, columns, hyperparameters, seed, tree: _tree.Tree):
        super().__init__(columns, hyperparameters, seed)
        self.tree = tree

    def _predict_matrix(self, X):
        return self.tree.predict(X)

    def importance(self):
        return {name: float(self.tree.importance[j]) for j, name in enumerate(self.columns)}

    def to_dict(self):
        return {
            "version": 1,
            "family": self.family,
            "columns": list(self.columns),
            "hyperparameters": self.hyperparameters,
            "seed": self.seed,
            "tree": self.tree.to_nested(self.columns),
        }

    @staticmethod
    def from_dict(d: dict) -> "CartModel":
        tree = _tree.Tree.from_nested(d["tree"], d["columns"])
        return CartModel(d["columns"], d["hyperparameters"], d["seed"], tree)

    def to_text(self) -> str:
        """Indented if/else rendering of the tree for the decision-tree view."""
        lines: list[str] = []

        def walk(i: int, indent: int):
            pad = "  " * indent
            t = self.tree
            if t.feature[i] < 0:
                lines.append(f"{pad}predict {t.value[i]:.6g}  (n={t.n_samples[i]})")
                return
            name = self.columns[t.feature[i]]
            lines.append(f"{pad}if {name} <= {t.threshold[i]:.6g}:")
            walk(int(t.left[i]), indent + 1)
            lines.append(f"{pad}else:")
            walk(int(t.right[i]), indent + 1)

        walk(0, 0)
        return "\n".join(lines)


def fit_cart(point: dict, X: np.ndarray, y: np.ndarray, columns, seed: int) -> CartModel:
    hp = {**DEFAULTS, **point}
    if X.shape[0] < 2:
        raise ContractError(f"need at least 2 rows to fit, got {X.shape[0]}")
    rows = np.arange(X.shape[0], dtype=np.int64)
    tree = _tree.build_tree(
        X, y, rows,
        max_depth=hp["max_depth"], min_leaf=int(hp["min_leaf"]),
        cp=float(hp["cp"]), mtry=None, rng=None,
    )
    return CartModel(columns, hp, seed, tree)
