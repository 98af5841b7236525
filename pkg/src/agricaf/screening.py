"""Stage 2: LOOCV retrospective analysis, option selection, importance aggregation.

Every (model family, dataset) pair is an *option*. Each option is evaluated
by leave-one-out cross-validation over years with a per-iteration grid
search; the two options with the lowest error sum are kept, weighted by
complementary error share, and their per-iteration feature importances are
cleaned, min-max scaled, weighted, and averaged. The top features by
aggregated importance (at most 19 by default) feed stage 3.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from agricaf._util import derive_seed
from agricaf.errors import AgricafError, ContractError, StageError
from agricaf.model_zoo import ModelSpec, fit, grid_search
from agricaf.stats import compute_metrics
from agricaf.transform import FeatureFrame

log = logging.getLogger(__name__)

RETAIN_TOP_K = 19


@dataclass(frozen=True)
class LoocvRecord:
    year: int
    model: str
    dataset: str
    predicted: float | None
    observed: float
    failed: bool = False

    def to_dict(self) -> dict:
        return {
            "year": self.year,
            "model": self.model,
            "dataset": self.dataset,
            "predicted": self.predicted,
            "observed": self.observed,
            "failed": self.failed,
        }


@dataclass(frozen=True)
class ScreeningResult:
    commodity: str
    month: int
    horizon: int
    records: tuple[LoocvRecord, ...]
    selected: tuple[tuple[str, str], tuple[str, str]]  # two (model, dataset) options
    error_sums: tuple[float, float]
    weights: tuple[float, float]
    importance: dict[str, float]
    retained: tuple[str, ...]
    config_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "commodity": self.commodity,
            "month": self.month,
            "horizon": self.horizon,
            "records": [r.to_dict() for r in self.records],
            "selected": [list(opt) for opt in self.selected],
            "error_sums": list(self.error_sums),
            "weights": list(self.weights),
            "importance": self.importance,
            "retained": list(self.retained),
            "config_hash": self.config_hash,
        }

    @staticmethod
    def from_dict(d: dict) -> "ScreeningResult":
        return ScreeningResult(
            commodity=d["commodity"],
            month=int(d["month"]),
            horizon=int(d["horizon"]),
            records=tuple(LoocvRecord(**r) for r in d["records"]),
            selected=tuple((a, b) for a, b in d["selected"]),
            error_sums=tuple(d["error_sums"]),
            weights=tuple(d["weights"]),
            importance=dict(d["importance"]),
            retained=tuple(d["retained"]),
            config_hash=d.get("config_hash", ""),
        )


def loocv_evaluate(
    frame: FeatureFrame,
    spec: ModelSpec,
    inner_folds: int = 3,
    max_failure_share: float = 0.2,
) -> tuple[list[LoocvRecord], list[dict]]:
    """One held-out prediction per year, refitting (grid search included) each time.

    Returns the records and the per-iteration intrinsic importance maps of
    the successful fits (in year order).
    """
    n = len(frame.years)
    if n < 10:
        raise ContractError(f"LOOCV needs at least 10 rows, got {n}")
    if spec.family == "arima":
        raise ContractError("arima exposes no intrinsic importance; it is not a screening family")
    records: list[LoocvRecord] = []
    importances: list[dict] = []
    failures = 0
    for i, year in enumerate(frame.years):
        train = np.concatenate([np.arange(0, i), np.arange(i + 1, n)])
        X_tr, y_tr = frame.X[train], frame.y[train]
        iter_spec = ModelSpec(spec.family, spec.grid, derive_seed(spec.seed, "loocv", year))
        try:
            point = grid_search(iter_spec, X_tr, y_tr, list(frame.column_names), folds=inner_folds)
            model = fit(iter_spec.with_point(point), X_tr, y_tr, list(frame.column_names))
            pred = float(model.predict(frame.X[i : i + 1])[0])
        except AgricafError as exc:
            log.warning("LOOCV fit failed (%s, %s, year %d): %s", spec.family, frame.dataset, year, exc)
            records.append(LoocvRecord(year, spec.family, frame.dataset, None, float(frame.y[i]), failed=True))
            failures += 1
            continue
        records.append(LoocvRecord(year, spec.family, frame.dataset, pred, float(frame.y[i])))
        importances.append(model.importance())
    if failures > max_failure_share * n:
        raise StageError(
            f"{failures}/{n} LOOCV iterations failed for ({spec.family}, {frame.dataset})"
        )
    return records, importances


def option_error_sum(records: list[LoocvRecord]) -> float:
    """MAE + MAD + RMSE over an option's successful records.

    These three are commensurate with the target scale; MAPE (fragile at
    zero observations), MSE (squared scale) and RA (inverse-oriented) stay
    out of the sum.
    """
    ok = [r for r in records if not r.failed]
    if not ok:
        return math.inf
    m = compute_metrics([r.observed for r in ok], [r.predicted for r in ok])
    return m.mae + m.mad + m.rmse


def select_top_two(records: list[LoocvRecord]) -> list[tuple[str, str, float]]:
    """The two (model, dataset) options with the lowest error sum.

    Ties break by MAE, then lexicographic (model, dataset).
    """
    by_option: dict[tuple[str, str], list[LoocvRecord]] = {}
    for r in records:
        by_option.setdefault((r.model, r.dataset), []).append(r)
    if len(by_option) < 2:
        raise ContractError(f"need at least 2 evaluated options, got {len(by_option)}")

    def key(opt):
        recs = by_option[opt]
        ok = [r for r in recs if not r.failed]
        mae = compute_metrics([r.observed for r in ok], [r.predicted for r in ok]).mae if ok else math.inf
        return (option_error_sum(recs), mae, opt[0], opt[1])

    ranked = sorted(by_option, key=key)
    return [(opt[0], opt[1], option_error_sum(by_option[opt])) for opt in ranked[:2]]


def model_weights(e1: float, e2: float) -> tuple[float, float]:
    """Complementary error-share weights: w_i = e_other / (e1 + e2)."""
    if e1 < 0 or e2 < 0:
        raise ContractError(f"error sums must be non-negative, got ({e1}, {e2})")
    total = e1 + e2
    if total == 0.0:
        return (0.5, 0.5)
    return (e2 / total, e1 / total)


def aggregate_importance(
    option_importances: list[list[dict]],
    weights: tuple[float, float],
    all_features: list[str],
) -> dict[str, float]:
    """Weighted mean of per-iteration importances, each min-max scaled to [0, 1].

    Per iteration: negative or non-finite raw values become 0, the vector is
    min-max scaled over the option's own features (constant vectors become
    all zeros), then multiplied by the option's weight. The mean runs over
    every iteration of both options; features absent from an option's frame
    contribute 0 for its iterations.
    """
    if len(option_importances) != 2 or len(weights) != 2:
        raise ContractError("expected importances and weights for exactly two options")
    sums = {f: 0.0 for f in all_features}
    count = 0
    for iterations, w in zip(option_importances, weights):
        for raw in iterations:
            cleaned = {}
            for name, v in raw.items():
                v = float(v)
                cleaned[name] = v if math.isfinite(v) and v > 0.0 else 0.0
            if cleaned:
                lo = min(cleaned.values())
                hi = max(cleaned.values())
                span = hi - lo
                if span > 0.0:
                    scaled = {n: (v - lo) / span for n, v in cleaned.items()}
                else:
                    scaled = {n: 0.0 for n in cleaned}
            else:
                scaled = {}
            for f in all_features:
                sums[f] += w * scaled.get(f, 0.0)
            count += 1
    if count == 0:
        return {f: 0.0 for f in all_features}
    return {f: sums[f] / count for f in all_features}


def retain_top(importance: dict[str, float], k: int = RETAIN_TOP_K) -> list[str]:
    """Top-k feature names by importance, ties lexicographic."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    ranked = sorted(importance, key=lambda f: (-importance[f], f))
    return ranked[:k]


def screen_cell(
    frames: dict[str, FeatureFrame],
    specs: list[ModelSpec],
    inner_folds: int = 3,
    retain_k: int = RETAIN_TOP_K,
    config_hash: str = "",
) -> ScreeningResult:
    """Full stage-2 run for one (month, horizon) cell."""
    if not frames or not specs:
        raise ContractError("need at least one frame and one spec")
    sample = next(iter(frames.values()))
    all_records: list[LoocvRecord] = []
    importances: dict[tuple[str, str], list[dict]] = {}
    for ds in sorted(frames):
        for spec in specs:
            recs, imps = loocv_evaluate(frames[ds], spec, inner_folds=inner_folds)
            all_records.extend(recs)
            importances[(spec.family, ds)] = imps

    top = select_top_two(all_records)
    (m1, d1, e1), (m2, d2, e2) = top
    w = model_weights(e1, e2)

    union_features: list[str] = []
    for _, ds, _ in top:
        for name in frames[ds].column_names:
            if name not in union_features:
                union_features.append(name)
    union_features.sort()

    agg = aggregate_importance([importances[(m1, d1)], importances[(m2, d2)]], w, union_features)
    retained = retain_top(agg, retain_k)

    all_records.sort(key=lambda r: (r.dataset, r.model, r.year))
    return ScreeningResult(
        commodity=sample.commodity,
        month=sample.month,
        horizon=sample.horizon,
        records=tuple(all_records),
        selected=((m1, d1), (m2, d2)),
        error_sums=(e1, e2),
        weights=w,
        importance=agg,
        retained=tuple(retained),
        config_hash=config_hash,
    )
