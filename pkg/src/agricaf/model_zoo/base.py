"""Shared regressor contract and the model specification type."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from agricaf.errors import ContractError

FAMILIES = ("cart", "rf", "gbm", "ols-stepwise", "arima")

VALID_HYPERS = {
    "cart": {"max_depth", "min_leaf", "cp"},
    "rf": {"ntree", "mtry", "max_depth", "min_leaf", "cp", "bootstrap"},
    "gbm": {"rounds", "shrinkage", "max_depth", "min_leaf"},
    "ols-stepwise": {"correlation_cutoff"},
    "arima": {"p", "d", "q"},
}


@dataclass(frozen=True)
class ModelSpec:
    """A model family with its hyperparameter search grid and seed."""

    family: str
    grid: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractError(f"unknown model family {self.family!r}")
        if not self.grid:
            raise ContractError(f"grid for {self.family} must be non-empty")
        bad = set(self.grid) - VALID_HYPERS[self.family]
        if bad:
            raise ContractError(f"invalid hyperparameters for {self.family}: {sorted(bad)}")
        for name, values in self.grid.items():
            if not isinstance(values, (list, tuple)) or len(values) == 0:
                raise ContractError(f"grid entry {name!r} must be a non-empty sequence")

    def single_point(self) -> dict:
        if any(len(v) != 1 for v in self.grid.values()):
            raise ContractError(f"spec for {self.family} has multiple grid points; run grid_search first")
        return {name: values[0] for name, values in self.grid.items()}

    def with_point(self, point: dict) -> "ModelSpec":
        return ModelSpec(self.family, {k: (v,) for k, v in point.items()}, self.seed)


class Regressor:
    """Base for fitted models: immutable, deterministic, serializable.

    ``predict`` accepts exactly the training columns; subclasses implement
    ``_predict_matrix`` over a validated float64 matrix.
    """

    family: str = ""

    def __init__(self, columns, hyperparameters: dict, seed: int):
        self.columns = tuple(columns)
        self.hyperparameters = dict(hyperparameters)
        self.seed = int(seed)

    def predict(self, X, columns=None) -> np.ndarray:
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        if X.ndim != 2:
            raise ContractError(f"X must be 2-d, got shape {X.shape}")
        if columns is not None and tuple(columns) != self.columns:
            raise ContractError(
                f"column mismatch: model trained on {list(self.columns)}, got {list(columns)}"
            )
        if X.shape[1] != len(self.columns):
            raise ContractError(
                f"X has {X.shape[1]} columns, model trained on {len(self.columns)}"
            )
        out = self._predict_matrix(X)
        if not np.all(np.isfinite(out)):
            raise ContractError("non-finite prediction produced")
        return out

    def _predict_matrix(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def importance(self) -> dict[str, float]:
        """Intrinsic feature importance; non-negative, keyed by column name."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError
