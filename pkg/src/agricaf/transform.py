"""Stage 1: deflation, relative annual changes, lagging, trade-year alignment.

Everything here is a pure function over immutable inputs; frames for
distinct (month, horizon) cells can be built concurrently.

The information cutoff is the load-bearing rule: a forecast for target
(year, month) at horizon h is issued at the calendar position (year, month)
minus h months, and every feature cell must be observable by then. Monthly
values are observable only once their month has completed (strictly before
issuance); a marketing year's annual value is observable from its start
month onward (at or before issuance).
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace

import numpy as np

from agricaf._util import month_index, shift_month
from agricaf.data_model import (
    AnnualSupplySeries,
    GeographyMap,
    MonthlyPriceSeries,
    RelativeChangeSeries,
    TradeCalendar,
    aggregate_to_regions,
)
from agricaf.errors import ConfigurationError, ContractError, DomainError, StageError

log = logging.getLogger(__name__)

BASE_YEAR = 2010
DATASET_IDS = ("R-P", "R-Y", "L-P", "L-Y")

DEFAULT_LAGS = (1, 2, 3, 6, 12)
REGIONAL_SUPPLY_CAP = 19
REGIONAL_STOCKS_CAP = 15
LOCAL_CAP = 21
TOP_COUNTRIES = 21


@dataclass(frozen=True)
class ColumnSpec:
    """Provenance of one feature column, sufficient to rebuild it."""

    name: str
    source: str  # "price-lag" | "supply"
    series: str = ""
    lag: int = 0
    kind: str = ""
    level: str = ""
    geo: str = ""
    my_start_month: int = 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "source": self.source,
            "series": self.series,
            "lag": self.lag,
            "kind": self.kind,
            "level": self.level,
            "geo": self.geo,
            "my_start_month": self.my_start_month,
        }

    @staticmethod
    def from_dict(d: dict) -> "ColumnSpec":
        return ColumnSpec(
            name=d["name"],
            source=d["source"],
            series=d.get("series", ""),
            lag=int(d.get("lag", 0)),
            kind=d.get("kind", ""),
            level=d.get("level", ""),
            geo=d.get("geo", ""),
            my_start_month=int(d.get("my_start_month", 0)),
        )


@dataclass(frozen=True)
class FeatureFrame:
    """Design matrix for one (commodity, month, horizon, dataset) cell.

    Rows are years, ordered ascending; the target is the fractional price
    change for (year, month). ``future_x`` carries the feature vector for
    the year after the last observed row when every cell is computable,
    enabling the one-year-ahead forecast iteration.
    """

    commodity: str
    month: int
    horizon: int
    dataset: str
    years: tuple[int, ...]
    columns: tuple[ColumnSpec, ...]
    X: np.ndarray
    y: np.ndarray
    future_year: int | None = None
    future_x: np.ndarray | None = None
    dropped_years: tuple[tuple[int, str], ...] = ()
    dropped_columns: tuple[tuple[str, str], ...] = ()

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def issuance(self, year: int) -> tuple[int, int]:
        return shift_month(year, self.month, -self.horizon)

    def subset_rows(self, idx) -> "FeatureFrame":
        idx = np.asarray(idx)
        return replace(
            self,
            years=tuple(np.asarray(self.years)[idx].tolist()),
            X=self.X[idx],
            y=self.y[idx],
            future_year=None,
            future_x=None,
        )

    def subset_columns(self, names: list[str]) -> "FeatureFrame":
        pos = {c.name: j for j, c in enumerate(self.columns)}
        missing = [n for n in names if n not in pos]
        if missing:
            raise ContractError(f"columns not in frame: {missing}")
        sel = [pos[n] for n in names]
        return replace(
            self,
            columns=tuple(self.columns[j] for j in sel),
            X=self.X[:, sel],
            future_x=None if self.future_x is None else self.future_x[sel],
        )


def deflate(series: MonthlyPriceSeries) -> MonthlyPriceSeries:
    """Convert nominal prices to real base-year values via the price index.

    deflated(y, m) = nominal(y, m) * index(base year, m) / index(y, m).
    Months missing from the base year fall back to the base-year annual
    mean of the index.
    """
    base_months = {m: v for (y, m), v in series.index.items() if y == BASE_YEAR}
    if not base_months:
        raise ConfigurationError(
            f"price index for {series.commodity!r} has no {BASE_YEAR} values; cannot deflate"
        )
    base_mean = sum(base_months.values()) / len(base_months)
    deflated = {}
    for key in sorted(series.nominal):
        if key not in series.index:
            continue
        idx = series.index[key]
        if idx <= 0:
            raise DomainError(f"non-positive price index {idx} at {key}")
        base = base_months.get(key[1], base_mean)
        if base <= 0:
            raise DomainError(f"non-positive base-year index {base} for month {key[1]}")
        deflated[key] = series.nominal[key] * base / idx
    return MonthlyPriceSeries(series.commodity, dict(series.nominal), dict(series.index), deflated)


def annual_relative_change(values: dict) -> RelativeChangeSeries:
    """Fractional change against the same key one year earlier.

    Accepts (year, month) keys (monthly prices) or plain year keys (annual
    supply). Entries whose previous-year value is missing or non-positive
    are omitted and logged; the first covered year never has an entry.
    """
    changes = {}
    for key in sorted(values):
        prev_key = (key[0] - 1, key[1]) if isinstance(key, tuple) else key - 1
        prev = values.get(prev_key)
        if prev is None:
            continue
        if prev <= 0:
            log.debug("relative change at %s skipped: previous value %s not positive", key, prev)
            continue
        changes[key] = (values[key] - prev) / prev
    sample = next(iter(values)) if values else None
    kind = "price" if isinstance(sample, tuple) else "supply-annual"
    return RelativeChangeSeries(kind, changes)


def lag_price_features(
    changes: RelativeChangeSeries,
    series: str,
    month: int,
    horizon: int,
    lags,
    years,
) -> list[tuple[ColumnSpec, dict[int, float | None]]]:
    """Lagged price-change columns for the given target years.

    The cell for target year y at lag L is the change observed L months
    before issuance, i.e. at calendar position (y, month) - horizon - L.
    Lag 0 (or below) would leak the issuance month and is rejected.
    """
    out = []
    for lag in sorted(lags):
        if not 1 <= lag <= 12:
            raise ContractError(f"lag {lag} violates the information cutoff (must be in 1..12)")
        col = ColumnSpec(name=f"{series}_lag{lag}", source="price-lag", series=series, lag=lag)
        cells: dict[int, float | None] = {}
        for y in years:
            ts = shift_month(y, month, -(horizon + lag))
            cells[y] = changes.values.get(ts)
        out.append((col, cells))
    return out


def trade_year_for_issuance(issuance: tuple[int, int], my_start: int) -> int:
    """Most recent marketing year whose start month is at or before issuance."""
    iy, im = issuance
    return iy if im >= my_start else iy - 1


def align_trade_year(
    changes: RelativeChangeSeries,
    my_start: int,
    month: int,
    horizon: int,
    years,
) -> dict[int, float | None]:
    """Supply-change cells aligned to the marketing year observable at issuance.

    A marketing year's value is observable from its start month onward; the
    cell is missing when the selected year has no data (the row is dropped
    later rather than falling back to an older year).
    """
    cells: dict[int, float | None] = {}
    for y in years:
        my_year = trade_year_for_issuance(shift_month(y, month, -horizon), my_start)
        cells[y] = changes.values.get(my_year)
    return cells


def select_top_countries(supplies: list[AnnualSupplySeries], n: int = TOP_COUNTRIES) -> list[AnnualSupplySeries]:
    """The n series with greatest total value over the covered period.

    Ties break by lexicographic geography code; fewer than n candidates
    returns everything with a warning.
    """
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    ranked = sorted(supplies, key=lambda s: (-s.total(), s.geo))
    if len(ranked) < n:
        log.warning("only %d series available, requested top %d", len(ranked), n)
        return ranked
    return ranked[:n]


def _supply_columns(
    supplies: list[AnnualSupplySeries],
    kind: str,
    level: str,
    commodity: str,
    cal: TradeCalendar,
    cap: int,
    month: int,
    horizon: int,
    years,
) -> list[tuple[ColumnSpec, dict[int, float | None]]]:
    candidates = [s for s in supplies if s.commodity == commodity and s.kind == kind and s.level == level]
    chosen = select_top_countries(candidates, cap) if len(candidates) > cap else list(candidates)
    chosen = sorted(chosen, key=lambda s: s.geo)
    out = []
    for s in chosen:
        my_start = cal.start_month(commodity, s.geo)
        col = ColumnSpec(
            name=f"{kind}_{level}_{s.geo}",
            source="supply",
            kind=kind,
            level=level,
            geo=s.geo,
            my_start_month=my_start,
        )
        changes = annual_relative_change(s.values)
        out.append((col, align_trade_year(changes, my_start, month, horizon, years)))
    return out


def _build_frame(
    commodity: str,
    month: int,
    horizon: int,
    dataset: str,
    target: dict[int, float],
    columns: list[tuple[ColumnSpec, dict[int, float | None]]],
) -> FeatureFrame:
    years = sorted(target)
    if not years:
        raise StageError(f"no computable target values for ({commodity}, m={month}, h={horizon})")
    future_year = years[-1] + 1

    kept_years: list[int] = []
    dropped: list[tuple[int, str]] = []
    for y in years:
        missing = [col.name for col, cells in columns if cells.get(y) is None]
        if missing:
            dropped.append((y, f"missing {missing[0]}" + (f" (+{len(missing) - 1} more)" if len(missing) > 1 else "")))
        else:
            kept_years.append(y)
    if not kept_years:
        raise StageError(f"empty frame after row-dropping for ({commodity}, m={month}, h={horizon}, {dataset})")

    X = np.array([[cells[y] for _, cells in columns] for y in kept_years], dtype=np.float64)
    yv = np.array([target[y] for y in kept_years], dtype=np.float64)

    keep_cols: list[int] = []
    dropped_cols: list[tuple[str, str]] = []
    for j, (col, _) in enumerate(columns):
        vals = X[:, j]
        if len(kept_years) > 1 and np.all(vals == vals[0]):
            dropped_cols.append((col.name, "constant across all rows"))
        else:
            keep_cols.append(j)
    if not keep_cols:
        raise StageError(f"no usable predictor columns for ({commodity}, m={month}, h={horizon}, {dataset})")
    specs = tuple(columns[j][0] for j in keep_cols)
    X = np.ascontiguousarray(X[:, keep_cols])

    future_cells = [columns[j][1].get(future_year) for j in keep_cols]
    future_x = None
    if all(c is not None for c in future_cells):
        future_x = np.array(future_cells, dtype=np.float64)
    else:
        future_year = None

    for y, why in dropped:
        log.debug("frame %s m=%d h=%d %s: dropped year %d (%s)", commodity, month, horizon, dataset, y, why)
    return FeatureFrame(
        commodity=commodity,
        month=month,
        horizon=horizon,
        dataset=dataset,
        years=tuple(kept_years),
        columns=specs,
        X=X,
        y=yv,
        future_year=future_year,
        future_x=future_x,
        dropped_years=tuple(dropped),
        dropped_columns=tuple(dropped_cols),
    )


def assemble_datasets(
    prices: dict[str, MonthlyPriceSeries],
    supplies: list[AnnualSupplySeries],
    geo_map: GeographyMap,
    cal: TradeCalendar,
    commodity: str,
    month: int,
    horizon: int,
    lags=DEFAULT_LAGS,
    monthly_series: list[str] | None = None,
    regional_supply_cap: int = REGIONAL_SUPPLY_CAP,
    regional_stocks_cap: int = REGIONAL_STOCKS_CAP,
    local_cap: int = LOCAL_CAP,
) -> dict[str, FeatureFrame]:
    """Build the four predictor datasets for one (month, horizon) cell.

    R-P/R-Y pair regional production/yield with regional stocks; L-P/L-Y
    pair top-country production/yield with top-country stocks. All four
    share the monthly lagged price-change columns and the target.
    """
    if commodity not in prices:
        raise ConfigurationError(f"no price series for {commodity!r}")
    if not prices[commodity].deflated:
        raise ContractError(f"price series {commodity!r} has not been deflated")
    series_names = list(monthly_series) if monthly_series else [commodity]
    if commodity not in series_names:
        series_names.insert(0, commodity)

    target_changes = annual_relative_change(prices[commodity].deflated)
    target = {y: v for (y, m_), v in target_changes.values.items() if m_ == month}
    years = sorted(target)
    cell_years = years + [years[-1] + 1] if years else []

    lag_cols: list[tuple[ColumnSpec, dict]] = []
    for name in series_names:
        if name not in prices:
            raise ConfigurationError(f"configured monthly series {name!r} not in prices")
        if not prices[name].deflated:
            raise ContractError(f"price series {name!r} has not been deflated")
        changes = annual_relative_change(prices[name].deflated)
        lag_cols.extend(lag_price_features(changes, name, month, horizon, lags, cell_years))

    all_supplies = aggregate_to_regions(supplies, geo_map)

    def sup(kind, level, cap):
        return _supply_columns(all_supplies, kind, level, commodity, cal, cap, month, horizon, cell_years)

    composition = {
        "R-P": sup("production", "region", regional_supply_cap) + sup("stocks", "region", regional_stocks_cap),
        "R-Y": sup("yield", "region", regional_supply_cap) + sup("stocks", "region", regional_stocks_cap),
        "L-P": sup("production", "country", local_cap) + sup("stocks", "country", local_cap),
        "L-Y": sup("yield", "country", local_cap) + sup("stocks", "country", local_cap),
    }
    return {
        ds: _build_frame(commodity, month, horizon, ds, target, cols + lag_cols)
        for ds, cols in composition.items()
    }


def assemble_from_columns(
    prices: dict[str, MonthlyPriceSeries],
    supplies: list[AnnualSupplySeries],
    geo_map: GeographyMap,
    cal: TradeCalendar,
    commodity: str,
    month: int,
    horizon: int,
    column_specs: list[ColumnSpec],
    dataset: str = "screened",
) -> FeatureFrame:
    """Rebuild a frame holding exactly the given columns (stage-3 input).

    Runs through the same cell machinery as :func:`assemble_datasets`, so
    the information cutoff holds by construction.
    """
    target_changes = annual_relative_change(prices[commodity].deflated)
    target = {y: v for (y, m_), v in target_changes.values.items() if m_ == month}
    years = sorted(target)
    cell_years = years + [years[-1] + 1] if years else []

    all_supplies = aggregate_to_regions(supplies, geo_map)
    by_key = {(s.kind, s.level, s.geo): s for s in all_supplies if s.commodity == commodity}

    columns: list[tuple[ColumnSpec, dict]] = []
    for spec in column_specs:
        if spec.source == "price-lag":
            if spec.series not in prices:
                raise ConfigurationError(f"price series {spec.series!r} not available")
            changes = annual_relative_change(prices[spec.series].deflated)
            (col, cells), = lag_price_features(changes, spec.series, month, horizon, [spec.lag], cell_years)
            columns.append((col, cells))
        elif spec.source == "supply":
            s = by_key.get((spec.kind, spec.level, spec.geo))
            if s is None:
                raise ConfigurationError(f"supply series {spec.kind}/{spec.level}/{spec.geo} not available")
            my_start = cal.start_month(commodity, spec.geo)
            changes = annual_relative_change(s.values)
            cells = align_trade_year(changes, my_start, month, horizon, cell_years)
            columns.append((replace(spec, my_start_month=my_start), cells))
        else:
            raise ContractError(f"unknown column source {spec.source!r}")
    return _build_frame(commodity, month, horizon, dataset, target, columns)


def check_information_cutoff(frame: FeatureFrame) -> list[str]:
    """Exhaustively verify the cutoff for every cell; returns violations.

    Monthly cells must be timestamped strictly before issuance; annual cells
    must come from a marketing year whose start is at or before issuance.
    """
    problems = []
    rows = list(frame.years) + ([frame.future_year] if frame.future_year is not None else [])
    for y in rows:
        issuance = month_index(*shift_month(y, frame.month, -frame.horizon))
        for col in frame.columns:
            if col.source == "price-lag":
                ts = month_index(*shift_month(y, frame.month, -(frame.horizon + col.lag)))
                if not ts < issuance:
                    problems.append(f"{col.name} row {y}: monthly timestamp not before issuance")
            else:
                my_year = trade_year_for_issuance(shift_month(y, frame.month, -frame.horizon), col.my_start_month)
                avail = month_index(my_year, col.my_start_month)
                if not avail <= issuance:
                    problems.append(f"{col.name} row {y}: marketing year starts after issuance")
    return problems


# ---------------------------------------------------------------------------
# Frame serialization: long-format CSV plus a metadata JSON document.

def frame_to_csv(frame: FeatureFrame) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["year", "column", "value"])
    for i, y in enumerate(frame.years):
        w.writerow([y, "__target__", repr(float(frame.y[i]))])
        for j, col in enumerate(frame.columns):
            w.writerow([y, col.name, repr(float(frame.X[i, j]))])
    if frame.future_year is not None:
        for j, col in enumerate(frame.columns):
            w.writerow([frame.future_year, col.name, repr(float(frame.future_x[j]))])
    return buf.getvalue()


def frame_meta(frame: FeatureFrame) -> dict:
    return {
        "commodity": frame.commodity,
        "month": frame.month,
        "horizon": frame.horizon,
        "dataset": frame.dataset,
        "issuance_rule": "issuance = (year, month) shifted back by horizon months",
        "years": list(frame.years),
        "future_year": frame.future_year,
        "columns": [c.to_dict() for c in frame.columns],
        "dropped_years": [[y, why] for y, why in frame.dropped_years],
        "dropped_columns": [[n, why] for n, why in frame.dropped_columns],
    }


def frame_from_csv(csv_text: str, meta: dict) -> FeatureFrame:
    cells: dict[tuple[int, str], float] = {}
    for row in csv.DictReader(io.StringIO(csv_text)):
        cells[(int(row["year"]), row["column"])] = float(row["value"])
    columns = tuple(ColumnSpec.from_dict(d) for d in meta["columns"])
    years = tuple(int(y) for y in meta["years"])
    X = np.array([[cells[(y, c.name)] for c in columns] for y in years], dtype=np.float64)
    y = np.array([cells[(yr, "__target__")] for yr in years], dtype=np.float64)
    future_year = meta.get("future_year")
    future_x = None
    if future_year is not None:
        future_year = int(future_year)
        future_x = np.array([cells[(future_year, c.name)] for c in columns], dtype=np.float64)
    return FeatureFrame(
        commodity=meta["commodity"],
        month=int(meta["month"]),
        horizon=int(meta["horizon"]),
        dataset=meta["dataset"],
        years=years,
        columns=columns,
        X=X,
        y=y,
        future_year=future_year,
        future_x=future_x,
        dropped_years=tuple((int(a), b) for a, b in meta.get("dropped_years", [])),
        dropped_columns=tuple((a, b) for a, b in meta.get("dropped_columns", [])),
    )
