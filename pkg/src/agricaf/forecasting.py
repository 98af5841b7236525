"""Stage 3: expanding-window rolling forecasts and recursive TS forecasts.

Model families refit (grid search included) at every rolling iteration; the
final iteration predicts one year beyond the last observed row when the
frame carries a complete future feature vector. The ARIMA path forecasts
the monthly change series directly: trained on observations up to one month
before the target at horizon 1 (the issuance month itself is the last
training point), it iterates h one-step forecasts, feeding each prediction
back into the input.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from agricaf._util import derive_seed, month_index, shift_month
from agricaf.errors import AgricafError, ContractError, InsufficientDataError
from agricaf.model_zoo import ModelSpec, arima_fit, arima_order_search, fit, grid_search
from agricaf.model_zoo.arima import ArimaModel
from agricaf.transform import FeatureFrame

log = logging.getLogger(__name__)

T_MIN = 44
TS_FLOOR = 150


@dataclass(frozen=True)
class ForecastRecord:
    commodity: str
    target_year: int
    target_month: int
    horizon: int
    model: str
    dataset: str
    predicted: float
    observed: float | None
    train_size: int  # training years for frame families, observations for arima

    def to_dict(self) -> dict:
        return {
            "commodity": self.commodity,
            "target_year": self.target_year,
            "target_month": self.target_month,
            "horizon": self.horizon,
            "model": self.model,
            "dataset": self.dataset,
            "predicted": self.predicted,
            "observed": self.observed,
            "train_size": self.train_size,
        }


def naive_forecast(training_observed) -> float:
    """Constant forecast: the arithmetic mean of past observed changes."""
    vals = np.asarray(training_observed, dtype=np.float64)
    if vals.ndim != 1 or vals.size < 1:
        raise ContractError("naive forecast needs at least one training value")
    return float(np.mean(vals))


def rolling_forecast(
    frame: FeatureFrame,
    spec: ModelSpec,
    t_min: int = T_MIN,
    inner_folds: int = 3,
) -> list[ForecastRecord]:
    """Expanding-window one-step-ahead forecasts over the frame's years.

    For T = t_min, t_min+1, ... fit on the first T rows and predict row
    T+1; with Y complete rows this yields Y - t_min observed records plus,
    when the frame has a complete future feature row, one unobserved record
    for the year after the last row.
    """
    n = len(frame.years)
    if n < t_min:
        raise InsufficientDataError(
            f"frame has {n} rows, below the training floor {t_min} "
            f"({frame.commodity} m={frame.month} h={frame.horizon})"
        )
    records: list[ForecastRecord] = []
    columns = list(frame.column_names)
    for t in range(t_min, n + 1):
        if t == n:
            if frame.future_x is None:
                log.info(
                    "no future feature row for (%s m=%d h=%d %s); final iteration skipped",
                    frame.commodity, frame.month, frame.horizon, frame.dataset,
                )
                break
            target_year = frame.future_year
            x_next = frame.future_x[np.newaxis, :]
            observed = None
        else:
            target_year = frame.years[t]
            x_next = frame.X[t : t + 1]
            observed = float(frame.y[t])
        X_tr, y_tr = frame.X[:t], frame.y[:t]
        iter_spec = ModelSpec(spec.family, spec.grid, derive_seed(spec.seed, "rolling", target_year))
        point = grid_search(iter_spec, X_tr, y_tr, columns, folds=inner_folds)
        model = fit(iter_spec.with_point(point), X_tr, y_tr, columns)
        pred = float(model.predict(x_next)[0])
        records.append(
            ForecastRecord(
                commodity=frame.commodity,
                target_year=int(target_year),
                target_month=frame.month,
                horizon=frame.horizon,
                model=spec.family,
                dataset=frame.dataset,
                predicted=pred,
                observed=observed,
                train_size=t,
            )
        )
    return records


def rolling_naive(frame: FeatureFrame, t_min: int = T_MIN) -> list[ForecastRecord]:
    """The naive baseline run through the same rolling protocol."""
    n = len(frame.years)
    if n < t_min:
        raise InsufficientDataError(f"frame has {n} rows, below the training floor {t_min}")
    records = []
    for t in range(t_min, n + 1):
        if t == n:
            if frame.future_x is None:
                break
            target_year, observed = frame.future_year, None
        else:
            target_year, observed = frame.years[t], float(frame.y[t])
        records.append(
            ForecastRecord(
                commodity=frame.commodity,
                target_year=int(target_year),
                target_month=frame.month,
                horizon=frame.horizon,
                model="naive",
                dataset=frame.dataset,
                predicted=naive_forecast(frame.y[:t]),
                observed=observed,
                train_size=t,
            )
        )
    return records


def recursive_ts_forecast(series, model: ArimaModel, horizon: int) -> list[float]:
    """Iterate one-step forecasts ``horizon`` times, appending each prediction.

    Appended predictions re-enter the conditional recursion, where they
    produce (numerically) zero residuals, so the horizon-1 call is
    bit-identical to a direct one-step forecast.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < TS_FLOOR:
        raise ContractError(f"recursive TS forecast needs at least {TS_FLOOR} observations, got {x.size}")
    if not 1 <= horizon <= 12:
        raise ContractError(f"horizon must be in 1..12, got {horizon}")
    history = list(x)
    out = []
    for _ in range(horizon):
        nxt = model.one_step(np.asarray(history))
        out.append(float(nxt))
        history.append(nxt)
    return out


def rolling_ts_forecast(
    monthly_changes: dict[tuple[int, int], float],
    commodity: str,
    month: int,
    horizon: int,
    target_years: list[int],
    future_year: int | None = None,
    ts_floor: int = TS_FLOOR,
    max_p: int = 2,
    max_q: int = 2,
    order: tuple[int, int, int] | None = None,
) -> list[ForecastRecord]:
    """ARIMA records for the same targets as the frame families.

    The training series for target (y, month) contains every monthly change
    observed up to and including the issuance month; the ARIMA order is
    searched once per cell on the first window and coefficients refit each
    iteration.
    """
    keyed = sorted((month_index(y, m), v) for (y, m), v in monthly_changes.items())
    positions = np.array([k for k, _ in keyed])
    values = np.array([v for _, v in keyed])
    records: list[ForecastRecord] = []
    years = list(target_years) + ([future_year] if future_year is not None else [])
    for target_year in years:
        issuance_pos = month_index(*shift_month(target_year, month, -horizon))
        usable = values[positions <= issuance_pos]
        if usable.size < ts_floor:
            log.info(
                "TS window for (%s m=%d h=%d year %d) has %d obs < floor %d; skipped",
                commodity, month, horizon, target_year, usable.size, ts_floor,
            )
            continue
        try:
            if order is None:
                order = arima_order_search(usable, max_p=max_p, max_q=max_q)
            model = arima_fit(usable, order)
            pred = recursive_ts_forecast(usable, model, horizon)[-1]
        except AgricafError as exc:
            log.warning("TS forecast failed (%s m=%d h=%d year %d): %s", commodity, month, horizon, target_year, exc)
            continue
        observed = monthly_changes.get((target_year, month))
        records.append(
            ForecastRecord(
                commodity=commodity,
                target_year=int(target_year),
                target_month=month,
                horizon=horizon,
                model="arima",
                dataset="monthly",
                predicted=float(pred),
                observed=None if observed is None else float(observed),
                train_size=int(usable.size),
            )
        )
    return records


def best_model_per_cell(records: list[ForecastRecord]) -> dict[tuple[int, int], tuple[str, str]]:
    """Winner (model, dataset) per (month, horizon) by MAE over observed records.

    Ties break by RMSE, then lexicographic family name and dataset.
    """
    cells: dict[tuple[int, int], dict[tuple[str, str], list[ForecastRecord]]] = {}
    for r in records:
        cells.setdefault((r.target_month, r.horizon), {}).setdefault((r.model, r.dataset), []).append(r)
    winners: dict[tuple[int, int], tuple[str, str]] = {}
    for cell, options in cells.items():
        def key(opt):
            obs = [(r.observed, r.predicted) for r in options[opt] if r.observed is not None]
            if not obs:
                return (math.inf, math.inf, opt[0], opt[1])
            o = np.array([a for a, _ in obs])
            p = np.array([b for _, b in obs])
            mae = float(np.mean(np.abs(o - p)))
            rmse = float(np.sqrt(np.mean((o - p) ** 2)))
            return (mae, rmse, opt[0], opt[1])

        winners[cell] = min(options, key=key)
    return winners
