"""Hyperparameter grids and cross-validated grid search."""

from __future__ import annotations

import itertools
import math

import numpy as np

from agricaf.errors import AgricafError, ContractError
from agricaf.model_zoo.base import ModelSpec


def default_grid(family: str, n_features: int) -> dict:
    """Per-family default grids; rf's mtry depends on the feature count K."""
    k = max(1, int(n_features))
    if family == "cart":
        return {"max_depth": (2, 3, 5), "min_leaf": (2, 5)}
    if family == "rf":
        mtry = sorted({math.ceil(math.sqrt(k)), math.ceil(k / 3), math.ceil(k / 2)})
        return {"ntree": (500,), "mtry": tuple(mtry)}
    if family == "gbm":
        return {"max_depth": (1, 2, 3), "shrinkage": (0.01, 0.1), "rounds": (100, 500)}
    if family == "ols-stepwise":
        return {"correlation_cutoff": (0.6, 0.9)}
    if family == "arima":
        return {"p": tuple(range(6)), "d": (0, 1), "q": tuple(range(6))}
    raise ContractError(f"unknown family {family!r}")


def resolve_grid(spec: ModelSpec, n_features: int) -> dict:
    """Concretize symbolic rf mtry entries ("sqrt", "div3", "div2") for K features."""
    k = max(1, int(n_features))
    grid = dict(spec.grid)
    if spec.family == "rf" and "mtry" in grid:
        resolved = []
        for v in grid["mtry"]:
            if v == "sqrt":
                v = math.ceil(math.sqrt(k))
            elif v == "div3":
                v = math.ceil(k / 3)
            elif v == "div2":
                v = math.ceil(k / 2)
            resolved.append(min(int(v), k))
        grid["mtry"] = tuple(sorted(set(resolved)))
    return grid


def _sort_key(value):
    if value is None:
        return (2, "")
    if isinstance(value, bool):
        return (1, str(value))
    if isinstance(value, (int, float)):
        return (0, float(value))
    return (1, str(value))


def grid_points(grid: dict) -> list[dict]:
    """All grid points in lexicographic hyperparameter order."""
    names = sorted(grid)
    value_lists = [sorted(grid[n], key=_sort_key) for n in names]
    return [dict(zip(names, combo)) for combo in itertools.product(*value_lists)]


def grid_search(spec: ModelSpec, X, y, columns=None, folds: int = 3) -> dict:
    """Grid point minimizing mean fold RMSE over contiguous row folds.

    Scanning in lexicographic order with strict improvement makes ties
    resolve to the lexicographically smallest point. A single-point grid
    returns immediately without fitting.
    """
    from agricaf.model_zoo import fit as fit_model

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    grid = resolve_grid(spec, X.shape[1])
    points = grid_points(grid)
    if not points:
        raise ContractError("empty grid")
    if len(points) == 1:
        return points[0]
    if not 2 <= folds <= n:
        raise ContractError(f"need frame rows >= folds >= 2, got rows={n} folds={folds}")

    blocks = np.array_split(np.arange(n), folds)
    best_point = None
    best_rmse = np.inf
    for point in points:
        fold_rmse = []
        failed = False
        for block in blocks:
            train = np.setdiff1d(np.arange(n), block)
            try:
                model = fit_model(spec.with_point(point), X[train], y[train], columns)
                pred = model.predict(X[block])
            except AgricafError:
                failed = True
                break
            fold_rmse.append(math.sqrt(float(np.mean((y[block] - pred) ** 2))))
        if failed or not fold_rmse:
            continue
        rmse = float(np.mean(fold_rmse))
        if rmse < best_rmse:
            best_rmse = rmse
            best_point = point
    if best_point is None:
        raise ContractError("every grid point failed to fit")
    return best_point
