"""Stage 4: model-agnostic attribution and diagnostic surfaces.

Shapley values use the interventional expectation: a feature outside the
coalition is marginalized by averaging model predictions over the training
background rows. Exact enumeration is the oracle for the permutation
sampling estimator; both satisfy the efficiency identity by construction
(the sampled marginal contributions telescope between shared endpoint
evaluations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from agricaf._util import derive_seed
from agricaf.errors import ContractError, DegenerateInputError
from agricaf.model_zoo import ModelSpec, fit
from agricaf.model_zoo.cart import CartModel

EXACT_MAX_FEATURES = 12


@dataclass(frozen=True)
class ShapleyAttribution:
    instance: object  # target year (pipeline) or test label
    phi: dict[str, float]
    baseline: float
    prediction: float

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "phi": self.phi,
            "baseline": self.baseline,
            "prediction": self.prediction,
        }


@dataclass(frozen=True)
class PdpCurve:
    feature: str
    points: list[tuple[float, float]]  # (feature value, phi) per instance
    curve: list[tuple[float, float]]  # binned-mean polyline
    band: list[tuple[float, float, float]]  # (x, lower, upper) per bin

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "points": [[a, b] for a, b in self.points],
            "curve": [[a, b] for a, b in self.curve],
            "band": [[a, b, c] for a, b, c in self.band],
        }


def _predictor(model):
    return model.predict if hasattr(model, "predict") else model


def _coalition_values(predict, background: np.ndarray, instance: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Mean prediction over the background per coalition mask, batched."""
    n_bg = background.shape[0]
    out = np.empty(masks.shape[0])
    chunk = max(1, 65536 // max(1, n_bg))
    for start in range(0, masks.shape[0], chunk):
        block = masks[start : start + chunk]
        mats = []
        for mask in block:
            comp = background.copy()
            comp[:, mask] = instance[mask]
            mats.append(comp)
        preds = predict(np.concatenate(mats, axis=0))
        preds = np.asarray(preds, dtype=np.float64).reshape(len(block), n_bg)
        out[start : start + len(block)] = preds.mean(axis=1)
    return out


def shapley_exact(model, background, instance, names) -> ShapleyAttribution:
    """Classical Shapley values by full coalition enumeration (K <= 12)."""
    background = np.ascontiguousarray(np.asarray(background, dtype=np.float64))
    instance = np.asarray(instance, dtype=np.float64).ravel()
    k = instance.size
    if k > EXACT_MAX_FEATURES:
        raise ContractError(
            f"exact enumeration supports at most {EXACT_MAX_FEATURES} features, got {k}; use shapley_sampling"
        )
    if background.ndim != 2 or background.shape[1] != k or len(names) != k:
        raise ContractError("background, instance and names have inconsistent shapes")
    predict = _predictor(model)

    n_masks = 1 << k
    masks = np.zeros((n_masks, k), dtype=bool)
    for j in range(k):
        masks[:, j] = (np.arange(n_masks) >> j) & 1
    v = _coalition_values(predict, background, instance, masks)

    counts = masks.sum(axis=1)
    fact = [math.factorial(i) for i in range(k + 1)]
    weight_by_size = np.array([fact[s] * fact[k - 1 - s] / fact[k] for s in range(k)])
    phi = np.zeros(k)
    for j in range(k):
        bit = 1 << j
        without = np.nonzero(~masks[:, j])[0]
        phi[j] = np.sum(weight_by_size[counts[without]] * (v[without | bit] - v[without]))

    prediction = float(predict(instance[np.newaxis, :])[0])
    return ShapleyAttribution(
        instance=None,
        phi={names[j]: float(phi[j]) for j in range(k)},
        baseline=float(v[0]),
        prediction=prediction,
    )


def shapley_sampling(model, background, instance, names, n_permutations: int = 200, seed: int = 0) -> ShapleyAttribution:
    """Permutation-sampling Shapley estimator with a seeded PCG64 stream."""
    if n_permutations < 1:
        raise ContractError(f"n_permutations must be >= 1, got {n_permutations}")
    background = np.ascontiguousarray(np.asarray(background, dtype=np.float64))
    instance = np.asarray(instance, dtype=np.float64).ravel()
    k = instance.size
    if background.ndim != 2 or background.shape[1] != k or len(names) != k:
        raise ContractError("background, instance and names have inconsistent shapes")
    predict = _predictor(model)
    rng = np.random.Generator(np.random.PCG64(seed))

    endpoint = _coalition_values(
        predict, background, instance,
        np.array([[False] * k, [True] * k], dtype=bool),
    )
    v_empty, v_full = float(endpoint[0]), float(endpoint[1])

    phi = np.zeros(k)
    for _ in range(n_permutations):
        order = rng.permutation(k)
        if k > 1:
            masks = np.zeros((k - 1, k), dtype=bool)
            running = np.zeros(k, dtype=bool)
            for j in range(k - 1):
                running[order[j]] = True
                masks[j] = running
            v_mid = _coalition_values(predict, background, instance, masks)
        else:
            v_mid = np.empty(0)
        walk = np.concatenate([[v_empty], v_mid, [v_full]])
        phi[order] += np.diff(walk)
    phi /= n_permutations

    prediction = float(predict(instance[np.newaxis, :])[0])
    return ShapleyAttribution(
        instance=None,
        phi={names[j]: float(phi[j]) for j in range(k)},
        baseline=v_empty,
        prediction=prediction,
    )


def median_relative_influence(attributions: list[ShapleyAttribution]) -> dict[str, float]:
    """Median |phi| per feature, normalized to share of the sum of medians."""
    if not attributions:
        raise ContractError("need at least one attribution")
    names = list(attributions[0].phi)
    medians = {
        name: float(np.median([abs(a.phi[name]) for a in attributions])) for name in names
    }
    total = sum(medians.values())
    if total == 0.0:
        return {name: 0.0 for name in names}
    return {name: m / total for name, m in medians.items()}


def permutation_importance(model, X, y, names, repeats: int = 10, seed: int = 0) -> dict[str, float]:
    """Mean RMSE increase when one feature column is shuffled (seeded)."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    predict = _predictor(model)
    base_rmse = float(np.sqrt(np.mean((y - predict(X)) ** 2)))
    out = {}
    for j, name in enumerate(names):
        increases = []
        for r in range(repeats):
            rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "perm", name, r)))
            Xp = X.copy()
            Xp[:, j] = Xp[rng.permutation(X.shape[0]), j]
            rmse = float(np.sqrt(np.mean((y - predict(Xp)) ** 2)))
            increases.append(rmse - base_rmse)
        out[name] = float(np.mean(increases))
    return out


def pdp(feature: str, values, phis, bins: int = 10) -> PdpCurve:
    """Shapley-vs-value scatter with a quantile-binned mean curve and 95% band."""
    values = np.asarray(values, dtype=np.float64)
    phis = np.asarray(phis, dtype=np.float64)
    if values.size != phis.size or values.size < 1:
        raise ContractError("values and phis must be equal-length and non-empty")
    if np.unique(values).size < 2:
        raise DegenerateInputError(f"feature {feature!r} is constant; PDP undefined")
    edges = np.quantile(values, np.linspace(0.0, 1.0, bins + 1))
    assignment = np.clip(np.searchsorted(edges[1:-1], values, side="right"), 0, bins - 1)
    curve = []
    band = []
    for b in range(bins):
        in_bin = assignment == b
        n = int(np.sum(in_bin))
        if n == 0:
            continue
        x = float(np.mean(values[in_bin]))
        m = float(np.mean(phis[in_bin]))
        se = float(np.std(phis[in_bin], ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        curve.append((x, m))
        band.append((x, m - 1.96 * se, m + 1.96 * se))
    points = sorted(zip(values.tolist(), phis.tolist()))
    return PdpCurve(feature=feature, points=points, curve=curve, band=band)


def global_surrogate(model, X, names, depth: int = 3, seed: int = 0) -> tuple[CartModel, float]:
    """Fit an interpretable tree to the model's own predictions.

    Fidelity is R-squared of the surrogate against the black-box outputs.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.shape[0] < 1:
        raise ContractError("need a non-empty frame")
    predict = _predictor(model)
    target = np.asarray(predict(X), dtype=np.float64)
    spec = ModelSpec("cart", {"max_depth": (depth,), "min_leaf": (2,), "cp": (0.0,)}, seed)
    surrogate = fit(spec, X, target, list(names))
    approx = surrogate.predict(X)
    sst = float(np.sum((target - np.mean(target)) ** 2))
    sse = float(np.sum((target - approx) ** 2))
    if sst == 0.0:
        fidelity = 1.0 if sse <= 1e-18 else 0.0
    else:
        fidelity = 1.0 - sse / sst
    return surrogate, fidelity


def residual_analysis(records) -> dict:
    """Residual mean, spread, lag-1 autocorrelation, extremes with their targets.

    ``records`` are forecast records; only those with an observed value
    enter, ordered by target.
    """
    obs = [
        r for r in records
        if (r.observed if hasattr(r, "observed") else r.get("observed")) is not None
    ]
    if len(obs) < 2:
        raise ContractError("residual analysis needs at least 2 observed records")

    def get(r, key):
        return getattr(r, key) if hasattr(r, key) else r[key]

    obs.sort(key=lambda r: (get(r, "target_year"), get(r, "target_month")))
    resid = np.array([get(r, "observed") - get(r, "predicted") for r in obs])
    centered = resid - resid.mean()
    denom = float(centered @ centered)
    lag1 = float(centered[:-1] @ centered[1:] / denom) if denom > 0 else 0.0
    i_min = int(np.argmin(resid))
    i_max = int(np.argmax(resid))
    return {
        "n": len(obs),
        "mean": float(resid.mean()),
        "std": float(resid.std()),
        "lag1_autocorr": lag1,
        "min": {
            "residual": float(resid[i_min]),
            "target_year": get(obs[i_min], "target_year"),
            "target_month": get(obs[i_min], "target_month"),
        },
        "max": {
            "residual": float(resid[i_max]),
            "target_year": get(obs[i_max], "target_year"),
            "target_month": get(obs[i_max], "target_month"),
        },
    }


def coefficients_report(model) -> dict[str, dict[str, float]]:
    """Raw and standardized coefficients of a fitted stepwise OLS model."""
    if getattr(model, "family", None) != "ols-stepwise":
        raise ContractError(f"coefficients_report requires an ols-stepwise model, got {getattr(model, 'family', type(model))}")
    std = model.standardized_coefficients()
    out = {"(intercept)": {"coefficient": model.coefficients["(intercept)"], "standardized": 0.0}}
    for name, b in model.coefficients.items():
        if name == "(intercept)":
            continue
        out[name] = {"coefficient": b, "standardized": std[name]}
    return out


def beeswarm_rows(attributions: list[ShapleyAttribution], instances: list, X: np.ndarray, names) -> list[dict]:
    """Long-format rows for the Shapley summary (beeswarm) plot.

    One row per (instance, feature): phi, the feature's value, and the
    feature's global rank by mean |phi| (rank 1 = most influential).
    """
    mean_abs = {name: float(np.mean([abs(a.phi[name]) for a in attributions])) for name in names}
    ranked = sorted(names, key=lambda n: (-mean_abs[n], n))
    rank = {name: i + 1 for i, name in enumerate(ranked)}
    rows = []
    for a, inst, x in zip(attributions, instances, X):
        for j, name in enumerate(names):
            rows.append(
                {
                    "instance": inst,
                    "feature": name,
                    "phi": a.phi[name],
                    "value": float(x[j]),
                    "rank": rank[name],
                }
            )
    return rows
