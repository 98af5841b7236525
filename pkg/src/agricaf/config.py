"""Run configuration: one JSON file drives the whole pipeline.

Every constant the methodology leaves open lives here with its published
default: training floor 44 years, TS floor 150 observations, retention of
19 features, caps 19/15/21, top-21 countries, ADF at 5%, monthly lag set
{1, 2, 3, 6, 12}, 200 Shapley permutations.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from agricaf._util import canonical_json
from agricaf.errors import ConfigurationError
from agricaf.model_zoo import ModelSpec, default_grid
from agricaf.model_zoo.base import FAMILIES

SCREEN_FAMILIES = ("cart", "rf", "gbm", "ols-stepwise")


@dataclass
class RunConfig:
    commodity: str
    prices_path: Path
    supply_path: Path
    regions_path: Path
    calendar_path: Path
    output_dir: Path
    seed: int = 0
    months: tuple[int, ...] = tuple(range(1, 13))
    horizons: tuple[int, ...] = tuple(range(1, 13))
    lags: tuple[int, ...] = (1, 2, 3, 6, 12)
    monthly_series: tuple[str, ...] = ()
    regional_supply_cap: int = 19
    regional_stocks_cap: int = 15
    local_cap: int = 21
    top_countries: int = 21
    adf_alpha: float = 0.05
    t_min: int = 44
    ts_floor: int = 150
    retain_top_k: int = 19
    inner_cv_folds: int = 3
    screen_families: tuple[str, ...] = SCREEN_FAMILIES
    forecast_families: tuple[str, ...] = SCREEN_FAMILIES
    include_ts: bool = True
    include_naive: bool = True
    grids: dict = field(default_factory=dict)
    arima_max_p: int = 2
    arima_max_q: int = 2
    shap_permutations: int = 200
    shap_exact_max_features: int = 12
    perm_importance_repeats: int = 10
    pdp_bins: int = 10
    pdp_top_features: int = 2
    surrogate_depth: int = 3

    def __post_init__(self):
        if not self.commodity:
            raise ConfigurationError("commodity must be set")
        for m in self.months:
            if not 1 <= m <= 12:
                raise ConfigurationError(f"month {m} outside 1..12")
        for h in self.horizons:
            if not 1 <= h <= 12:
                raise ConfigurationError(f"horizon {h} outside 1..12")
        for fam in tuple(self.screen_families) + tuple(self.forecast_families):
            if fam not in FAMILIES:
                raise ConfigurationError(f"unknown model family {fam!r}")
        if "arima" in self.screen_families:
            raise ConfigurationError("arima is not a screening family (no intrinsic importance)")
        if self.t_min < 1 or self.ts_floor < 1 or self.retain_top_k < 1:
            raise ConfigurationError("t_min, ts_floor and retain_top_k must be positive")
        if self.inner_cv_folds < 2:
            raise ConfigurationError("inner_cv_folds must be >= 2")

    def grid_for(self, family: str) -> dict:
        custom = self.grids.get(family)
        if custom:
            return {k: tuple(v) for k, v in custom.items()}
        # symbolic mtry entries are resolved per frame at search time
        if family == "rf":
            return {"ntree": (500,), "mtry": ("sqrt", "div3", "div2")}
        return {k: tuple(v) for k, v in default_grid(family, 1).items()}

    def spec_for(self, family: str, seed: int) -> ModelSpec:
        return ModelSpec(family, self.grid_for(family), seed)

    def to_dict(self) -> dict:
        return {
            "commodity": self.commodity,
            "data": {
                "prices": str(self.prices_path),
                "supply": str(self.supply_path),
                "regions": str(self.regions_path),
                "calendar": str(self.calendar_path),
            },
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "months": list(self.months),
            "horizons": list(self.horizons),
            "lags": list(self.lags),
            "monthly_series": list(self.monthly_series),
            "caps": {
                "regional_supply": self.regional_supply_cap,
                "regional_stocks": self.regional_stocks_cap,
                "local": self.local_cap,
            },
            "top_countries": self.top_countries,
            "adf_alpha": self.adf_alpha,
            "t_min": self.t_min,
            "ts_floor": self.ts_floor,
            "retain_top_k": self.retain_top_k,
            "inner_cv_folds": self.inner_cv_folds,
            "screen_families": list(self.screen_families),
            "forecast_families": list(self.forecast_families),
            "include_ts": self.include_ts,
            "include_naive": self.include_naive,
            "grids": self.grids,
            "arima": {"max_p": self.arima_max_p, "max_q": self.arima_max_q},
            "shapley": {
                "permutations": self.shap_permutations,
                "exact_max_features": self.shap_exact_max_features,
            },
            "perm_importance_repeats": self.perm_importance_repeats,
            "pdp_bins": self.pdp_bins,
            "pdp_top_features": self.pdp_top_features,
            "surrogate_depth": self.surrogate_depth,
        }

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()[:16]

    @staticmethod
    def from_dict(doc: dict, base_dir: Path) -> "RunConfig":
        def path_of(p):
            p = Path(p)
            return p if p.is_absolute() else base_dir / p

        data = doc.get("data", {})
        for key in ("prices", "supply", "regions", "calendar"):
            if key not in data:
                raise ConfigurationError(f"config data section is missing {key!r}")
        caps = doc.get("caps", {})
        shap = doc.get("shapley", {})
        arima = doc.get("arima", {})
        kwargs = {}
        for name in (
            "seed", "adf_alpha", "t_min", "ts_floor", "retain_top_k", "inner_cv_folds",
            "top_countries", "include_ts", "include_naive", "grids",
            "perm_importance_repeats", "pdp_bins", "pdp_top_features", "surrogate_depth",
        ):
            if name in doc:
                kwargs[name] = doc[name]
        for name in ("months", "horizons", "lags", "monthly_series", "screen_families", "forecast_families"):
            if name in doc:
                kwargs[name] = tuple(doc[name])
        if "regional_supply" in caps:
            kwargs["regional_supply_cap"] = caps["regional_supply"]
        if "regional_stocks" in caps:
            kwargs["regional_stocks_cap"] = caps["regional_stocks"]
        if "local" in caps:
            kwargs["local_cap"] = caps["local"]
        if "max_p" in arima:
            kwargs["arima_max_p"] = arima["max_p"]
        if "max_q" in arima:
            kwargs["arima_max_q"] = arima["max_q"]
        if "permutations" in shap:
            kwargs["shap_permutations"] = shap["permutations"]
        if "exact_max_features" in shap:
            kwargs["shap_exact_max_features"] = shap["exact_max_features"]
        return RunConfig(
            commodity=doc["commodity"],
            prices_path=path_of(data["prices"]),
            supply_path=path_of(data["supply"]),
            regions_path=path_of(data["regions"]),
            calendar_path=path_of(data["calendar"]),
            output_dir=path_of(doc.get("output_dir", "agricaf-run")),
            **kwargs,
        )

    @staticmethod
    def from_file(path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot load config {path}: {exc}") from exc
        return RunConfig.from_dict(doc, path.parent.resolve())
