"""ARIMA estimation by conditional sum of squares with likelihood polishing.

Coefficients are parametrized through partial autocorrelations (Monahan
1984 recursion, tanh-squashed), which enforces stationarity of the AR part
and invertibility of the MA part for any unconstrained optimizer input.
Estimation runs in two phases: a derivative-free Nelder-Mead minimization
of the conditional sum of squared one-step errors, then an L-BFGS-B
refinement of the profiled conditional Gaussian likelihood.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.optimize

from agricaf import _kernels
from agricaf.errors import ContractError, FitError
from agricaf.model_zoo.base import Regressor
from agricaf.stats import adf_test

MIN_OBSERVATIONS = 150


def _coef_from_raw(raw: np.ndarray, ma: bool) -> np.ndarray:
    """Map unconstrained reals to stationary AR (or invertible MA) coefficients."""
    pac = np.tanh(raw)
    coef = pac.copy()
    for k in range(1, raw.size):
        head = coef[:k].copy()
        if ma:
            coef[:k] = head + pac[k] * head[::-1]
        else:
            coef[:k] = head - pac[k] * head[::-1]
    return coef


def _unpack(params: np.ndarray, p: int, q: int, include_mean: bool):
    ofs = 1 if include_mean else 0
    mu = params[0] if include_mean else 0.0
    phi = _coef_from_raw(params[ofs : ofs + p], ma=False) if p else np.empty(0)
    theta = _coef_from_raw(params[ofs + p : ofs + p + q], ma=True) if q else np.empty(0)
    return mu, phi, theta


def _css_rss(z: np.ndarray, mu: float, phi: np.ndarray, theta: np.ndarray, burn: int) -> float:
    x = z - mu
    eps = _kernels.arma_residuals(x, phi, theta, burn)
    tail = eps[burn:]
    return float(tail @ tail)


class ArimaModel(Regressor):
    """Fitted ARIMA(p, d, q); the mean term is estimated only when d = 0."""

    family = "arima"

    def __init__(self, order, mu, phi, theta, sigma2, aic, seed=0, converged=True):
        super().__init__((), {"p": order[0], "d": order[1], "q": order[2]}, seed)
        self.order = tuple(int(v) for v in order)
        self.mu = float(mu)
        self.phi = np.asarray(phi, dtype=np.float64)
        self.theta = np.asarray(theta, dtype=np.float64)
        self.sigma2 = float(sigma2)
        self.aic = float(aic)
        self.converged = bool(converged)

    def _predict_matrix(self, X):
        raise ContractError("arima has no feature matrix; use one_step()/forecasting helpers")

    def importance(self):
        # no per-feature decomposition exists; excluded from importance aggregation
        return {}

    def one_step(self, history) -> float:
        """Forecast the value following the given history under fitted parameters.

        Residuals for the history are rebuilt by the conditional recursion,
        so appending a previous forecast and calling again yields the
        recursive multi-step path (appended points get ~zero residuals).
        """
        p, d, q = self.order
        x = np.asarray(history, dtype=np.float64)
        if d > 0:
            z = np.diff(x, n=d)
        else:
            z = x
        if z.size < max(p, q, 1):
            raise ContractError("history too short for one-step forecast")
        centered = z - self.mu
        eps = _kernels.arma_residuals(centered, self.phi, self.theta, p)
        n = centered.size
        acc = 0.0
        for i in range(p):
            acc += self.phi[i] * centered[n - 1 - i]
        for j in range(q):
            acc += self.theta[j] * eps[n - 1 - j]
        forecast_z = self.mu + acc
        if d == 0:
            return float(forecast_z)
        if d == 1:
            return float(x[-1] + forecast_z)
        raise ContractError(f"d={d} not supported (only 0 and 1)")

    def to_dict(self):
        return {
            "version": 1,
            "family": self.family,
            "order": list(self.order),
            "mu": self.mu,
            "phi": [float(v) for v in self.phi],
            "theta": [float(v) for v in self.theta],
            "sigma2": self.sigma2,
            "aic": self.aic,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "ArimaModel":
        return ArimaModel(d["order"], d["mu"], d["phi"], d["theta"], d["sigma2"], d["aic"], d.get("seed", 0))


def arima_fit(series, order, burn: int | None = None) -> ArimaModel:
    """Estimate ARIMA(p, d, q) on a (monthly) series.

    ``burn`` overrides the number of conditioned-on observations (>= p);
    the order search passes a common value so AICs stay comparable across
    candidate orders.
    """
    p, d, q = (int(v) for v in order)
    if p < 0 or q < 0 or d not in (0, 1):
        raise ContractError(f"unsupported order {order}")
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ContractError("series must be 1-d")
    z = np.diff(x, n=d) if d else x
    n = z.size
    if n < MIN_OBSERVATIONS:
        raise ContractError(f"need at least {MIN_OBSERVATIONS} observations after differencing, got {n}")
    include_mean = d == 0
    burn = max(p, burn if burn is not None else p)
    n_eff = n - burn
    k = p + q + (1 if include_mean else 0) + 1  # + residual variance

    if p == 0 and q == 0:
        mu = float(np.mean(z)) if include_mean else 0.0
        rss = float(np.sum((z - mu) ** 2))
        sigma2 = rss / n_eff
        return ArimaModel(order, mu, [], [], sigma2, _aic(n_eff, rss, k))

    def objective(params):
        mu, phi, theta = _unpack(params, p, q, include_mean)
        rss = _css_rss(z, mu, phi, theta, burn)
        if not math.isfinite(rss):
            return 1e300
        # profiled conditional Gaussian negative log-likelihood (monotone in RSS)
        return 0.5 * n_eff * math.log(max(rss, 1e-300) / n_eff)

    x0 = np.zeros(p + q + (1 if include_mean else 0))
    if include_mean:
        x0[0] = float(np.mean(z))

    stage1 = scipy.optimize.minimize(objective, x0, method="Nelder-Mead",
                                     options={"maxiter": 200 * (p + q + 1), "xatol": 1e-6, "fatol": 1e-10})
    start = stage1.x if math.isfinite(stage1.fun) else x0
    stage2 = scipy.optimize.minimize(objective, start, method="L-BFGS-B")
    best = stage2 if (math.isfinite(stage2.fun) and stage2.fun <= stage1.fun) else stage1

    if not math.isfinite(best.fun):
        raise FitError(f"ARIMA{order} estimation did not converge", best_params=stage1.x)
    mu, phi, theta = _unpack(best.x, p, q, include_mean)
    rss = _css_rss(z, mu, phi, theta, burn)
    sigma2 = rss / n_eff
    return ArimaModel(order, mu, phi, theta, sigma2, _aic(n_eff, rss, k),
                      converged=bool(stage2.success or stage1.success))


def _aic(n_eff: int, rss: float, k: int) -> float:
    return n_eff * math.log(max(rss, 1e-300) / n_eff) + 2 * k


def arima_order_search(series, max_p: int = 5, max_q: int = 5, d_candidates=(0, 1),
                       alpha: float = 0.05) -> tuple[int, int, int]:
    """Minimal-AIC order over the p x q grid; d chosen by the unit-root test.

    All candidates are fit conditioning on the same ``max_p`` observations
    so their AICs are comparable; ties resolve to the smallest (p, q).
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < MIN_OBSERVATIONS:
        raise ContractError(f"need at least {MIN_OBSERVATIONS} observations, got {x.size}")
    d = 0 if adf_test(x, alpha=alpha).reject_unit_root else 1
    if d not in d_candidates:
        d = d_candidates[0]

    best_order = None
    best_aic = np.inf
    failures = []
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            try:
                model = arima_fit(x, (p, d, q), burn=max_p)
            except FitError as exc:
                failures.append(((p, d, q), str(exc)))
                continue
            if model.aic < best_aic:
                best_aic = model.aic
                best_order = (p, d, q)
    if best_order is None:
        raise FitError(f"all ARIMA orders failed: {failures}")
    return best_order
