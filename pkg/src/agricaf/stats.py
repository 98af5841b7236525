"""Statistical gates and evaluation: error metrics, unit-root test, collinearity.

All functions are stateless and safe under arbitrary concurrency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from agricaf.errors import ContractError, DegenerateInputError

METRICS_CSV_HEADER = "commodity,month,horizon,model,dataset,mae,mad,mape,mse,rmse,ra,n"


@dataclass(frozen=True)
class MetricsRow:
    """The six evaluation metrics over one set of (observed, predicted) pairs.

    ``mape`` is in percent and is None when any observed value is exactly 0;
    ``ra`` is None when the observed values are constant. Downstream error
    sums must exclude None entries.
    """

    mae: float
    mad: float
    mape: float | None
    mse: float
    rmse: float
    ra: float | None
    n: int

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "mad": self.mad,
            "mape": self.mape,
            "mse": self.mse,
            "rmse": self.rmse,
            "ra": self.ra,
            "n": self.n,
        }


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lags_used: int
    critical_5pct: float
    reject_unit_root: bool


def compute_metrics(observed, predicted) -> MetricsRow:
    """MAE, MAD, MAPE, MSE, RMSE and relative advantage for paired vectors."""
    obs = np.asarray(observed, dtype=np.float64)
    pred = np.asarray(predicted, dtype=np.float64)
    if obs.shape != pred.shape or obs.ndim != 1 or obs.size < 1:
        raise ContractError(f"observed/predicted must be equal-length 1-d vectors, got {obs.shape} vs {pred.shape}")
    err = obs - pred
    abs_err = np.abs(err)
    mae = float(np.mean(abs_err))
    mad = float(np.median(abs_err))
    mape = None
    if not np.any(obs == 0.0):
        mape = float(np.mean(np.abs(err / obs)) * 100.0)
    mse = float(np.mean(err * err))
    rmse = math.sqrt(mse)
    return MetricsRow(mae=mae, mad=mad, mape=mape, mse=mse, rmse=rmse,
                      ra=relative_advantage(obs, pred), n=int(obs.size))


def relative_advantage(observed, predicted) -> float | None:
    """1 - RMSE / population std of the observed values.

    The population divisor (n) makes the constant mean-of-observed predictor
    score exactly 0; None when the observed values are constant.
    """
    obs = np.asarray(observed, dtype=np.float64)
    pred = np.asarray(predicted, dtype=np.float64)
    if obs.shape != pred.shape or obs.ndim != 1 or obs.size < 1:
        raise ContractError(f"observed/predicted must be equal-length 1-d vectors, got {obs.shape} vs {pred.shape}")
    centered = obs - np.mean(obs)
    sigma = math.sqrt(float(np.mean(centered * centered)))
    if sigma == 0.0:
        return None
    err = obs - pred
    rmse = math.sqrt(float(np.mean(err * err)))
    return 1.0 - rmse / sigma


def _ols(X: np.ndarray, y: np.ndarray):
    """Least squares with coefficient standard errors; returns (beta, se, rss)."""
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    n, k = X.shape
    if rank < k or n <= k:
        return beta, None, rss
    sigma2 = rss / (n - k)
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))
    return beta, se, rss


def regression_aic(n: int, rss: float, k: int) -> float:
    """AIC for a Gaussian regression up to a constant: n*ln(RSS/n) + 2k."""
    if rss <= 0.0:
        rss = 1e-300
    return n * math.log(rss / n) + 2 * k


# MacKinnon (2010), "Critical Values for Cointegration Tests", Queen's
# University working paper 1227. Response surface for the ADF tau statistic
# with constant (drift), one variable: cv = b0 + b1/n + b2/n^2 + b3/n^3.
_MACKINNON_DRIFT = {
    0.01: (-3.43035, -6.5393, -16.786, -79.433),
    0.05: (-2.86154, -2.8903, -4.234, -40.04),
    0.10: (-2.56677, -1.5384, -2.809, 0.0),
}


def mackinnon_critical(alpha: float, nobs: int) -> float:
    if alpha not in _MACKINNON_DRIFT:
        raise ContractError(f"no tabulated critical value for alpha={alpha}; choose 0.01, 0.05 or 0.10")
    b0, b1, b2, b3 = _MACKINNON_DRIFT[alpha]
    return b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3


def adf_test(series, alpha: float = 0.05) -> AdfResult:
    """Augmented Dickey-Fuller test with drift (constant, no trend).

    The lag order is chosen by minimal AIC over 0..floor(12*(n/100)^0.25),
    with all candidate regressions fit on a common sample so their AICs are
    comparable; the reported statistic comes from a refit on the full usable
    sample at the chosen lag. Rejection compares against the MacKinnon
    response-surface critical value at ``alpha``.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 20:
        raise ContractError(f"series must be 1-d with at least 20 observations, got {x.shape}")
    if np.all(x == x[0]):
        raise DegenerateInputError("series is constant; unit-root test undefined")
    n = x.size
    max_lag = int(12 * (n / 100.0) ** 0.25)
    max_lag = min(max_lag, n // 2 - 2)
    dx = np.diff(x)

    def design(lag: int, start: int):
        # rows t = start..len(dx)-1 of: dx[t] ~ const + x[t] + dx[t-1..t-lag]
        rows = np.arange(start, dx.size)
        cols = [np.ones(rows.size), x[rows]]
        for i in range(1, lag + 1):
            cols.append(dx[rows - i])
        return np.column_stack(cols), dx[rows]

    best_lag, best_aic = 0, np.inf
    for lag in range(0, max_lag + 1):
        X, yv = design(lag, max_lag)
        _, _, rss = _ols(X, yv)
        aic = regression_aic(yv.size, rss, X.shape[1])
        if aic < best_aic - 1e-12:
            best_lag, best_aic = lag, aic

    X, yv = design(best_lag, best_lag)
    beta, se, _ = _ols(X, yv)
    if se is None:
        raise DegenerateInputError("ADF regression is singular")
    stat = float(beta[1] / se[1])
    crit = mackinnon_critical(alpha, yv.size)
    return AdfResult(statistic=stat, lags_used=best_lag, critical_5pct=crit,
                     reject_unit_root=bool(stat < crit))


def correlation_filter(X: np.ndarray, names: list[str], cutoff: float) -> set[str]:
    """Columns to drop so that no surviving pair correlates above the cutoff.

    While any |pairwise Pearson r| > cutoff, take the worst pair and drop
    the member with the larger mean absolute correlation to all other
    survivors (ties drop the lexicographically larger name).
    """
    if not 0.0 < cutoff < 1.0:
        raise ContractError(f"cutoff must be in (0, 1), got {cutoff}")
    X = np.asarray(X, dtype=np.float64)
    k = X.shape[1]
    if k != len(names):
        raise ContractError("names must match the number of columns")
    if k < 2 or X.shape[0] < 2:
        return set()
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(X, rowvar=False)
    corr = np.nan_to_num(corr, nan=0.0)
    np.fill_diagonal(corr, 0.0)
    abscorr = np.abs(corr)

    alive = list(range(k))
    removed: set[str] = set()
    while len(alive) > 1:
        sub = abscorr[np.ix_(alive, alive)]
        worst = np.unravel_index(int(np.argmax(sub)), sub.shape)
        if sub[worst] <= cutoff:
            break
        a, b = alive[worst[0]], alive[worst[1]]
        mean_a = float(np.mean(np.delete(abscorr[a, alive], alive.index(a))))
        mean_b = float(np.mean(np.delete(abscorr[b, alive], alive.index(b))))
        if mean_a > mean_b:
            drop = a
        elif mean_b > mean_a:
            drop = b
        else:
            drop = a if names[a] > names[b] else b
        removed.add(names[drop])
        alive.remove(drop)
    return removed


def alias_detect(X: np.ndarray, names: list[str], tol: float = 1e-8) -> set[str]:
    """Exactly collinear columns whose removal leaves the column rank unchanged.

    Found with a rank-revealing pivoted QR: the columns pivoted in beyond
    the numerical rank (pivot magnitude below ``tol`` relative to the
    largest) are flagged.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ContractError("X must be a 2-d matrix with at least one row")
    k = X.shape[1]
    if k != len(names):
        raise ContractError("names must match the number of columns")
    if k == 0:
        return set()
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R)) if R.ndim == 2 else np.abs(R[:1])
    if diag.size == 0 or diag[0] == 0.0:
        return {names[j] for j in piv[1:]} if k > 1 else set()
    rank = int(np.sum(diag > tol * diag[0]))
    rank = min(rank, min(X.shape))
    return {names[j] for j in piv[rank:]}
