"""Multivariate linear regression with bidirectional stepwise AIC selection."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from agricaf.errors import ContractError, FitError
from agricaf.model_zoo.base import Regressor
from agricaf.stats import alias_detect, correlation_filter, regression_aic

DEFAULTS = {"correlation_cutoff": None}

# a move must beat the current AIC by more than this to be taken
AIC_IMPROVEMENT = 1e-8


def _fit_ols(X: np.ndarray, y: np.ndarray, selected: list[int]):
    """Intercept + selected columns; returns (beta, rss) or None if singular."""
    n = X.shape[0]
    design = np.column_stack([np.ones(n)] + [X[:, j] for j in selected])
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        return None
    resid = y - design @ beta
    rss = float(resid @ resid)
    return beta, rss


def stepwise_aic(X: np.ndarray, y: np.ndarray, names) -> tuple[list[str], dict[str, float], list[dict]]:
    """Greedy bidirectional selection from the intercept-only model.

    Each step evaluates every single add and every single remove, takes the
    best strictly improving move, and stops when nothing improves AIC by
    more than 1e-8. Columns that would make the design singular are never
    admitted. Returns (selected names, coefficients incl. "(intercept)",
    step trace).

    AIC = n*ln(RSS/n) + 2k with k counting the intercept. Additions are
    scored in one shot: residualizing every candidate against the current
    orthonormal basis Q gives each add's RSS drop as (r'e)^2 / (r'r).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    names = list(names)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[1] != len(names):
        raise ContractError("X, y and names have inconsistent shapes")
    n, n_cols = X.shape
    col_norms = np.einsum("ij,ij->j", X, X)
    # numerically perfect fits must differ only through the 2k penalty
    rss_floor = 1e-24 * max(float(y @ y), 1e-300)

    def aic_of(rss: float, k: int) -> float:
        return regression_aic(n, max(rss, rss_floor), k)

    def refit(sel: list[int]):
        design = np.empty((n, len(sel) + 1))
        design[:, 0] = 1.0
        for pos, j in enumerate(sel):
            design[:, pos + 1] = X[:, j]
        q, r = np.linalg.qr(design)
        beta = scipy.linalg.solve_triangular(r, q.T @ y)
        r_inv = scipy.linalg.solve_triangular(r, np.eye(r.shape[0]))
        gram_inv_diag = np.einsum("ij,ij->i", r_inv, r_inv)
        resid = y - q @ (q.T @ y)
        rss = float(resid @ resid)
        return q, resid, rss, aic_of(rss, len(sel) + 1), beta, gram_inv_diag

    selected: list[int] = []
    q, resid, rss, current_aic, beta, gram_inv_diag = refit(selected)
    if not np.isfinite(current_aic):
        raise FitError("intercept-only fit failed")
    trace = [{"step": 0, "action": "start", "column": None, "aic": current_aic}]

    while True:
        best = None  # (aic, action, j)
        rest = [j for j in range(n_cols) if j not in selected]
        if rest:
            cand = X[:, rest]
            residualized = cand - q @ (q.T @ cand)
            d = np.einsum("ij,ij->j", residualized, residualized)
            c = residualized.T @ resid
            admissible = d > 1e-10 * np.maximum(col_norms[rest], 1e-300)
            with np.errstate(divide="ignore", invalid="ignore"):
                rss_after = np.maximum(rss - c * c / d, 0.0)
            k_after = len(selected) + 2
            for pos, j in enumerate(rest):
                if not admissible[pos]:
                    continue
                aic = aic_of(float(rss_after[pos]), k_after)
                if best is None or aic < best[0]:
                    best = (aic, "add", j)
        # dropping column at position p+1 raises RSS by beta^2 / [(A'A)^-1]_pp
        for pos, j in enumerate(selected):
            rss_without = rss + float(beta[pos + 1] ** 2 / gram_inv_diag[pos + 1])
            aic = aic_of(rss_without, len(selected))
            if best is None or aic < best[0]:
                best = (aic, "remove", j)
        if best is None or best[0] >= current_aic - AIC_IMPROVEMENT:
            trace.append({"step": len(trace), "action": "stop", "column": None, "aic": current_aic})
            break
        aic, action, j = best
        if action == "add":
            selected.append(j)
        else:
            selected.remove(j)
        q, resid, rss, current_aic, beta, gram_inv_diag = refit(selected)
        trace.append({"step": len(trace), "action": action, "column": names[j], "aic": current_aic})

    selected = sorted(selected)
    beta, _ = _fit_ols(X, y, selected)
    coef = {"(intercept)": float(beta[0])}
    for pos, j in enumerate(selected):
        coef[names[j]] = float(beta[pos + 1])
    return [names[j] for j in selected], coef, trace


class OlsStepwiseModel(Regressor):
    family = "ols-stepwise"

    def __init__(self, columns, hyperparameters, seed, coefficients: dict, trace: list,
                 filtered_out: list[str], train_std: dict, target_std: float):
        super().__init__(columns, hyperparameters, seed)
        self.coefficients = dict(coefficients)
        self.trace = list(trace)
        self.filtered_out = list(filtered_out)  # dropped by the correlation pre-step
        self.train_std = dict(train_std)
        self.target_std = float(target_std)

    @property
    def selected(self) -> list[str]:
        return [n for n in self.coefficients if n != "(intercept)"]

    def _predict_matrix(self, X):
        out = np.full(X.shape[0], self.coefficients["(intercept)"])
        pos = {name: j for j, name in enumerate(self.columns)}
        for name, b in self.coefficients.items():
            if name != "(intercept)":
                out += b * X[:, pos[name]]
        return out

    def importance(self):
        """Absolute standardized coefficient; unselected columns score 0."""
        out = {}
        for name in self.columns:
            b = self.coefficients.get(name)
            if b is None or self.target_std == 0.0:
                out[name] = 0.0
            else:
                out[name] = abs(b) * self.train_std[name] / self.target_std
        return out

    def standardized_coefficients(self) -> dict[str, float]:
        out = {}
        for name, b in self.coefficients.items():
            if name == "(intercept)":
                continue
            out[name] = b * self.train_std[name] / self.target_std if self.target_std else 0.0
        return out

    def to_dict(self):
        return {
            "version": 1,
            "family": self.family,
            "columns": list(self.columns),
            "hyperparameters": {k: v for k, v in self.hyperparameters.items()},
            "seed": self.seed,
            "coefficients": self.coefficients,
            "filtered_out": self.filtered_out,
            "train_std": self.train_std,
            "target_std": self.target_std,
        }

    @staticmethod
    def from_dict(d: dict) -> "OlsStepwiseModel":
        return OlsStepwiseModel(
            d["columns"], d["hyperparameters"], d["seed"], d["coefficients"],
            [], d.get("filtered_out", []), d["train_std"], d["target_std"],
        )


def fit_ols_stepwise(point: dict, X: np.ndarray, y: np.ndarray, columns, seed: int) -> OlsStepwiseModel:
    hp = {**DEFAULTS, **point}
    names = list(columns)
    if X.shape[0] < 2:
        raise ContractError(f"need at least 2 rows to fit, got {X.shape[0]}")

    # aliased (exactly collinear) columns leave the candidate set first,
    # then the optional correlation pre-filter thins near-duplicates
    aliased = alias_detect(X, names)
    filtered: list[str] = sorted(aliased)
    candidates = [n for n in names if n not in aliased]
    pos = {n: j for j, n in enumerate(names)}
    cutoff = hp["correlation_cutoff"]
    if cutoff is not None and candidates:
        removed = correlation_filter(X[:, [pos[n] for n in candidates]], candidates, float(cutoff))
        filtered = sorted(set(filtered) | removed)
        candidates = [n for n in candidates if n not in removed]
    sub = X[:, [pos[n] for n in candidates]]

    _, coef, trace = stepwise_aic(sub, y, candidates)
    train_std = {n: float(np.std(X[:, pos[n]])) for n in names}
    return OlsStepwiseModel(names, hp, seed, coef, trace, filtered, train_std, float(np.std(y)))
