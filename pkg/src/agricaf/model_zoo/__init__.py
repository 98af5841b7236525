"""Regression model families behind one fit/predict contract.

Families: cart, rf, gbm, ols-stepwise, arima. Fits are deterministic given
(data, hyperparameters, seed); tree bootstraps and feature subsampling draw
from PCG64 streams derived by a stable hash, so results are portable across
platforms and parallelism layouts.
"""

from __future__ import annotations

import numpy as np

from agricaf._util import canonical_json
from agricaf.errors import ContractError
from agricaf.model_zoo.arima import ArimaModel, arima_fit, arima_order_search
from agricaf.model_zoo.base import FAMILIES, ModelSpec, Regressor
from agricaf.model_zoo.boosting import GbmModel, fit_gbm
from agricaf.model_zoo.cart import CartModel, fit_cart
from agricaf.model_zoo.forest import ForestModel, fit_forest
from agricaf.model_zoo.grid import default_grid, grid_points, grid_search, resolve_grid
from agricaf.model_zoo.linear import OlsStepwiseModel, fit_ols_stepwise, stepwise_aic

__all__ = [
    "FAMILIES",
    "ModelSpec",
    "Regressor",
    "CartModel",
    "ForestModel",
    "GbmModel",
    "OlsStepwiseModel",
    "ArimaModel",
    "fit",
    "predict",
    "stepwise_aic",
    "arima_fit",
    "arima_order_search",
    "grid_search",
    "grid_points",
    "default_grid",
    "resolve_grid",
    "serialize",
    "deserialize",
]

_FITTERS = {
    "cart": fit_cart,
    "rf": fit_forest,
    "gbm": fit_gbm,
    "ols-stepwise": fit_ols_stepwise,
}


def fit(spec: ModelSpec, X, y, columns=None) -> Regressor:
    """Fit one model at a single grid point.

    For the feature-based families X is the design matrix and y the target;
    for arima, y is the series itself and X is ignored.
    """
    point = spec.single_point()
    y = np.asarray(y, dtype=np.float64)
    if spec.family == "arima":
        order = (point.get("p", 0), point.get("d", 0), point.get("q", 0))
        model = arima_fit(y, order)
        model.seed = spec.seed
        return model
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ContractError(f"X {X.shape} and y {y.shape} are inconsistent")
    if X.shape[0] < 2:
        raise ContractError(f"need at least 2 rows to fit, got {X.shape[0]}")
    if columns is None:
        columns = [f"x{j}" for j in range(X.shape[1])]
    if len(columns) != X.shape[1]:
        raise ContractError("columns must match the width of X")
    return _FITTERS[spec.family](point, X, y, list(columns), spec.seed)


def predict(model: Regressor, X, columns=None) -> np.ndarray:
    return model.predict(X, columns)


def serialize(model: Regressor) -> str:
    """Versioned JSON document; byte-identical for identical fits."""
    return canonical_json(model.to_dict())


_LOADERS = {
    "cart": CartModel.from_dict,
    "rf": ForestModel.from_dict,
    "gbm": GbmModel.from_dict,
    "ols-stepwise": OlsStepwiseModel.from_dict,
    "arima": ArimaModel.from_dict,
}


def deserialize(text: str) -> Regressor:
    import json

    doc = json.loads(text)
    if doc.get("version") != 1:
        raise ContractError(f"unsupported model document version {doc.get('version')}")
    family = doc.get("family")
    if family not in _LOADERS:
        raise ContractError(f"unknown model family {family!r}")
    return _LOADERS[family](doc)
