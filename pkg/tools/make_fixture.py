"""Regenerate the bundled maize fixture (seeded, deterministic).

Writes prices.csv, supply.csv, regions.csv, calendar.csv and config.json
into src/agricaf/fixtures/maize/. The monthly change process mixes a
persistent autoregressive component with marketing-year supply shocks so
short-horizon forecasts have learnable signal; the April 2010/2011 maize
pair is planted so the deflated values are 156.98 and 233.9 (a +49% event).

Usage: python tools/make_fixture.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "agricaf" / "fixtures" / "maize"

PRICE_YEARS = range(1960, 2025)  # monthly, inclusive
SUPPLY_YEARS = range(1961, 2025)  # annual
BASE_YEAR = 2010

# country -> (region, production base Mt, relative spread)
COUNTRIES = {
    "USA": ("NAM", 350.0, 0.09),
    "CHN": ("EAS", 260.0, 0.07),
    "BRA": ("SAM", 130.0, 0.12),
    "ARG": ("SAM", 60.0, 0.14),
    "IND": ("SAS", 32.0, 0.10),
    "UKR": ("CIS", 38.0, 0.16),
    "RUS": ("CIS", 15.0, 0.15),
    "FRA": ("EU", 16.0, 0.10),
    "DEU": ("EU", 4.5, 0.11),
    "GBR": ("EU", 2.6, 0.10),
    "ROU": ("EU", 11.0, 0.15),
    "HUN": ("EU", 7.5, 0.14),
    "POL": ("EU", 4.2, 0.12),
    "ESP": ("EU", 4.4, 0.10),
    "ITA": ("EU", 6.5, 0.10),
    "CAN": ("NAM", 14.0, 0.10),
    "MEX": ("NAM", 27.0, 0.09),
    "EGY": ("MEA", 7.4, 0.08),
    "TUR": ("MEA", 6.0, 0.09),
    "NGA": ("AFR", 10.5, 0.11),
    "ZAF": ("AFR", 13.0, 0.16),
    "AUS": ("OCE", 0.5, 0.18),
    "IDN": ("EAS", 12.0, 0.09),
    # deliberately below the top-21 cut so validity-limited series
    # (Czechoslovakia handover) never puncture the local frames
    "VNM": ("EAS", 0.30, 0.10),
    "THA": ("EAS", 0.28, 0.10),
    "CZE": ("EU", 0.26, 0.12),
    "SVK": ("EU", 0.14, 0.12),
    "CSK": ("EU", 0.40, 0.12),
}

CSK_LAST_YEAR = 1992


def country_years(code: str):
    if code == "CSK":
        return [y for y in SUPPLY_YEARS if y <= CSK_LAST_YEAR]
    if code in ("CZE", "SVK"):
        return [y for y in SUPPLY_YEARS if y > CSK_LAST_YEAR]
    return list(SUPPLY_YEARS)


def ar1(rng, n, rho, sigma, init=0.0):
    out = np.empty(n)
    prev = init
    for i in range(n):
        prev = rho * prev + rng.normal(0.0, sigma)
        out[i] = prev
    return out


def main() -> None:
    rng = np.random.default_rng(20240810)
    OUT.mkdir(parents=True, exist_ok=True)

    n_years = len(list(SUPPLY_YEARS))
    global_shock = ar1(rng, n_years, 0.2, 0.045)

    production: dict[str, dict[int, float]] = {}
    yields: dict[str, dict[int, float]] = {}
    stocks: dict[str, dict[int, float]] = {}
    for code, (region, base, spread) in COUNTRIES.items():
        shock = ar1(rng, n_years, 0.3, spread)
        stock_shock = ar1(rng, n_years, 0.75, 0.13)
        base_yield = rng.uniform(25_000, 90_000)  # hg/ha
        production[code] = {}
        yields[code] = {}
        stocks[code] = {}
        for i, year in enumerate(SUPPLY_YEARS):
            if year not in country_years(code):
                continue
            growth = 1.015 ** (year - 1990)
            yld = base_yield * 1.012 ** (year - 1990) * float(np.exp(0.7 * shock[i] + 0.3 * global_shock[i]))
            prod = base * 1e6 * growth * float(np.exp(shock[i] + 0.5 * global_shock[i]))
            stk = base * 220.0 * growth * float(np.exp(stock_shock[i]))  # 1000 mt
            production[code][year] = round(prod, 1)
            yields[code][year] = round(yld, 1)
            stocks[code][year] = round(max(stk, 1.0), 1)

    # global marketing-year aggregates drive the price process
    def total(series_by_country, year):
        return sum(series_by_country[c].get(year, 0.0) for c in series_by_country)

    years = list(SUPPLY_YEARS)
    g_prod = {}
    g_stock = {}
    for prev, year in zip(years, years[1:]):
        g_prod[year] = total(production, year) / total(production, prev) - 1.0
        g_stock[year] = total(stocks, year) / total(stocks, prev) - 1.0

    # monthly year-on-year change series: persistent AR + supply shocks
    months = [(y, m) for y in PRICE_YEARS for m in range(1, 13)]
    first_change = (1961, 1)
    changes: dict[tuple[int, int], float] = {}
    prev_c = 0.0
    for (y, m) in months:
        if (y, m) < first_change:
            continue
        my_year = y if m >= 9 else y - 1  # most recent September
        supply_term = 0.0
        if my_year - 1 in g_prod:
            supply_term = -1.25 * g_prod[my_year - 1] - 0.5 * g_stock[my_year - 1]
        c = 0.85 * prev_c + 0.15 * supply_term + float(rng.normal(0.0, 0.02))
        c = float(np.clip(c, -0.6, 1.5))
        changes[(y, m)] = c
        prev_c = c

    # plant the April 2011 event: deflated 156.98 -> 233.9, a +49% change
    changes[(2011, 4)] = 233.9 / 156.98 - 1.0

    deflated: dict[tuple[int, int], float] = {}
    for m in range(1, 13):
        deflated[(1960, m)] = float(120.0 * (1.0 + 0.05 * np.sin(2 * np.pi * (m - 1) / 12)))
    for (y, m) in months:
        if (y, m) in changes:
            deflated[(y, m)] = deflated[(y - 1, m)] * (1.0 + changes[(y, m)])
    scale = 156.98 / deflated[(2010, 4)]
    deflated = {k: float(v * scale) for k, v in deflated.items()}

    # a second monthly series (fertilizer price) for lagged cross features
    fert: dict[tuple[int, int], float] = {}
    fc_prev = 0.0
    for m in range(1, 13):
        fert[(1960, m)] = float(95.0 * (1.0 + 0.03 * np.sin(2 * np.pi * (m - 1) / 12 + 0.8)))
    for (y, m) in months:
        if (y, m) < first_change:
            continue
        fc = 0.8 * fc_prev + 0.3 * changes[(y, m)] + float(rng.normal(0.0, 0.025))
        fc = float(np.clip(fc, -0.6, 1.5))
        fert[(y, m)] = fert[(y - 1, m)] * (1.0 + fc)
        fc_prev = fc

    def index_value(y, m):
        return float(100.0 * 1.028 ** (y - BASE_YEAR) * (1.0 + 0.01 * np.sin(2 * np.pi * (m - 1) / 12 + 1.0)))

    price_rows = []
    for commodity, series in (("maize", deflated), ("fertilizer", fert)):
        for (y, m) in sorted(series):
            idx = index_value(y, m)
            nominal = float(series[(y, m)]) * idx / index_value(BASE_YEAR, m)
            price_rows.append(f"{commodity},{y},{m},{nominal!r},{idx!r}")
    (OUT / "prices.csv").write_text(
        "commodity,year,month,nominal_price,price_index\n" + "\n".join(price_rows) + "\n"
    )

    supply_rows = []
    for kind, series in (("production", production), ("yield", yields), ("stocks", stocks)):
        for code in sorted(COUNTRIES):
            for year in sorted(series[code]):
                supply_rows.append(f"maize,{kind},{code},country,{year},{series[code][year]!r}")
    (OUT / "supply.csv").write_text(
        "commodity,kind,geo,level,year,value\n" + "\n".join(supply_rows) + "\n"
    )

    region_rows = []
    for code in sorted(COUNTRIES):
        region = COUNTRIES[code][0]
        if code == "CSK":
            region_rows.append(f"{code},{region},1900,{CSK_LAST_YEAR}")
        elif code in ("CZE", "SVK"):
            region_rows.append(f"{code},{region},{CSK_LAST_YEAR + 1},2100")
        else:
            region_rows.append(f"{code},{region},1900,2100")
    (OUT / "regions.csv").write_text(
        "country,region,valid_from,valid_to\n" + "\n".join(region_rows) + "\n"
    )

    calendar_rows = [
        "maize,*,9",  # default marketing year starts in September (USA et al.)
        "maize,BRA,3",
        "maize,ARG,3",
        "maize,SAM,3",
        "maize,AUS,12",
        "maize,OCE,12",
    ]
    (OUT / "calendar.csv").write_text(
        "commodity,geo,my_start_month\n" + "\n".join(calendar_rows) + "\n"
    )

    config = {
        "commodity": "maize",
        "data": {
            "prices": "prices.csv",
            "supply": "supply.csv",
            "regions": "regions.csv",
            "calendar": "calendar.csv",
        },
        "output_dir": "out",
        "seed": 20240810,
        "months": list(range(1, 13)),
        "horizons": [1, 6, 12],
        "lags": [1, 2, 3, 6, 12],
        "monthly_series": ["maize", "fertilizer"],
        "caps": {"regional_supply": 19, "regional_stocks": 15, "local": 21},
        "top_countries": 21,
        "t_min": 44,
        "ts_floor": 150,
        "retain_top_k": 19,
        "inner_cv_folds": 3,
        "screen_families": ["cart", "rf", "gbm", "ols-stepwise"],
        "forecast_families": ["cart", "rf", "gbm", "ols-stepwise"],
        "include_ts": True,
        "include_naive": True,
        "grids": {
            "cart": {"max_depth": [3], "min_leaf": [5]},
            "rf": {"ntree": [15], "mtry": ["div3"], "min_leaf": [5], "max_depth": [6]},
            "gbm": {"rounds": [40], "shrinkage": [0.1], "max_depth": [2], "min_leaf": [5]},
            "ols-stepwise": {"correlation_cutoff": [0.9]},
        },
        "arima": {"max_p": 1, "max_q": 1},
        "shapley": {"permutations": 24, "exact_max_features": 12},
        "perm_importance_repeats": 5,
        "pdp_bins": 10,
        "pdp_top_features": 2,
        "surrogate_depth": 3,
    }
    (OUT / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"fixture written to {OUT}")


if __name__ == "__main__":
    main()
