"""Stage orchestration, the run manifest, and all file I/O.

Stages: validate, assemble, screen, forecast, explain, report. Each stage
declares its prerequisites, writes outputs atomically (temp file + rename),
and records per-cell status in the manifest. Identical inputs, config and
seed reproduce byte-identical outputs regardless of ``--jobs`` because all
randomness flows through seeds derived from (seed, stage, cell, ...) and
aggregated outputs are sorted by key before writing.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
import logging
import os
from pathlib import Path

import numpy as np

from agricaf import __version__, explain as explain_mod, screening as screening_mod
from agricaf._util import atomic_write_text, canonical_json, derive_seed, sha256_file
from agricaf.config import RunConfig
from agricaf.data_model import (
    read_calendar,
    read_prices,
    read_regions,
    read_supply,
    validate_dataset,
)
from agricaf.errors import (
    AgricafError,
    InsufficientDataError,
    PrerequisiteError,
    StageError,
)
from agricaf.forecasting import (
    ForecastRecord,
    best_model_per_cell,
    rolling_forecast,
    rolling_naive,
    rolling_ts_forecast,
)
from agricaf.model_zoo import ModelSpec, fit, grid_search
from agricaf.stats import adf_test, compute_metrics
from agricaf.transform import (
    ColumnSpec,
    annual_relative_change,
    assemble_datasets,
    assemble_from_columns,
    deflate,
    frame_from_csv,
    frame_meta,
    frame_to_csv,
)

log = logging.getLogger("agricaf.pipeline")

STAGES = ("validate", "assemble", "screen", "forecast", "explain", "report")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARTIAL = 3
EXIT_PREREQUISITE = 4

XML_FAMILIES = ("cart", "rf", "gbm", "ols-stepwise")


def _cell_key(month: int, horizon: int) -> str:
    return f"m{month:02d}_h{horizon:02d}"


def _log_event(stage: str, cell: str, event: str, **kv) -> None:
    extras = " ".join(f"{k}={v}" for k, v in kv.items())
    log.info("stage=%s cell=%s event=%s%s", stage, cell or "-", event, f" {extras}" if extras else "")


class _Inputs:
    """Parsed and deflated inputs shared by every cell of a run."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.prices = read_prices(config.prices_path)
        self.supplies = read_supply(config.supply_path)
        self.geo_map = read_regions(config.regions_path)
        self.calendar = read_calendar(config.calendar_path)
        self.series_names = list(config.monthly_series) if config.monthly_series else [config.commodity]
        if config.commodity not in self.series_names:
            self.series_names.insert(0, config.commodity)
        for name in self.series_names:
            if name in self.prices:
                self.prices[name] = deflate(self.prices[name])

    def monthly_changes(self) -> dict:
        return annual_relative_change(self.prices[self.config.commodity].deflated).values


_WORKER: dict = {}


def _worker_init(config_doc: dict, base_dir: str):
    config = RunConfig.from_dict(config_doc, Path(base_dir))
    _WORKER["config"] = config
    _WORKER["inputs"] = _Inputs(config)


def _run_cells(config: RunConfig, cells, task, jobs: int):
    """Run ``task(config, inputs, m, h)`` per cell, inline or across workers.

    Results come back as {cell_key: payload}; payloads are plain dicts so
    they cross process boundaries. Worker scheduling cannot affect output
    bytes: everything is keyed and sorted by the parent.
    """
    results: dict[str, dict] = {}
    if jobs <= 1:
        inputs = _Inputs(config)
        for m, h in cells:
            results[_cell_key(m, h)] = task(config, inputs, m, h)
        return results
    doc = config.to_dict()
    base = str(Path.cwd())
    with concurrent.futures.ProcessPoolExecutor(
        max_workers=jobs, initializer=_worker_init, initargs=(doc, base)
    ) as pool:
        futures = {
            pool.submit(_worker_task, task.__name__, m, h): (m, h) for m, h in cells
        }
        for fut in concurrent.futures.as_completed(futures):
            m, h = futures[fut]
            results[_cell_key(m, h)] = fut.result()
    return results


def _worker_task(task_name: str, m: int, h: int) -> dict:
    task = _CELL_TASKS[task_name]
    return task(_WORKER["config"], _WORKER["inputs"], m, h)


def _guarded(task):
    """Convert per-cell domain errors into status payloads."""

    def run(config, inputs, m, h):
        try:
            payload = task(config, inputs, m, h)
            payload.setdefault("status", "done")
            return payload
        except InsufficientDataError as exc:
            return {"status": "skipped", "reason": str(exc)}
        except AgricafError as exc:
            return {"status": "error", "reason": f"{type(exc).__name__}: {exc}"}

    run.__name__ = task.__name__
    return run


# ---------------------------------------------------------------------------
# Per-cell tasks (module level so worker processes can resolve them by name)

def _assemble_cell(config: RunConfig, inputs: _Inputs, m: int, h: int) -> dict:
    frames = assemble_datasets(
        inputs.prices, inputs.supplies, inputs.geo_map, inputs.calendar,
        config.commodity, m, h,
        lags=config.lags,
        monthly_series=inputs.series_names,
        regional_supply_cap=config.regional_supply_cap,
        regional_stocks_cap=config.regional_stocks_cap,
        local_cap=config.local_cap,
    )
    return {
        "frames": {
            ds: {"csv": frame_to_csv(f), "meta": frame_meta(f)} for ds, f in frames.items()
        }
    }


def _screen_cell(config: RunConfig, inputs: _Inputs, m: int, h: int) -> dict:
    frames = {}
    for ds in ("R-P", "R-Y", "L-P", "L-Y"):
        path = config.output_dir / "frames" / f"{_cell_key(m, h)}_{ds}.csv"
        meta_path = path.with_suffix(".meta.json")
        if not path.exists() or not meta_path.exists():
            raise PrerequisiteError(f"missing frame {path.name}; run the assemble stage", missing=str(path))
        frames[ds] = frame_from_csv(path.read_text(encoding="utf-8"), json.loads(meta_path.read_text()))
    specs = [
        config.spec_for(fam, derive_seed(config.seed, "screen", m, h, fam))
        for fam in config.screen_families
    ]
    result = screening_mod.screen_cell(
        frames, specs,
        inner_folds=config.inner_cv_folds,
        retain_k=config.retain_top_k,
        config_hash=config.config_hash(),
    )
    return {"screening": result.to_dict()}


def _load_screening(config: RunConfig, m: int, h: int) -> screening_mod.ScreeningResult:
    path = config.output_dir / "screening" / f"{_cell_key(m, h)}.json"
    if not path.exists():
        raise PrerequisiteError(
            f"missing screening output {path}; run the screen stage", missing=str(path)
        )
    return screening_mod.ScreeningResult.from_dict(json.loads(path.read_text()))


def _screened_column_specs(config: RunConfig, m: int, h: int, retained) -> list[ColumnSpec]:
    specs: dict[str, ColumnSpec] = {}
    for ds in ("R-P", "R-Y", "L-P", "L-Y"):
        meta_path = config.output_dir / "frames" / f"{_cell_key(m, h)}_{ds}.meta.json"
        if not meta_path.exists():
            raise PrerequisiteError(f"missing frame metadata {meta_path}", missing=str(meta_path))
        for doc in json.loads(meta_path.read_text())["columns"]:
            specs.setdefault(doc["name"], ColumnSpec.from_dict(doc))
    missing = [name for name in retained if name not in specs]
    if missing:
        raise StageError(f"retained features lack provenance: {missing}")
    return [specs[name] for name in retained]


def _forecast_cell(config: RunConfig, inputs: _Inputs, m: int, h: int) -> dict:
    screening = _load_screening(config, m, h)
    col_specs = _screened_column_specs(config, m, h, screening.retained)
    frame = assemble_from_columns(
        inputs.prices, inputs.supplies, inputs.geo_map, inputs.calendar,
        config.commodity, m, h, col_specs,
    )
    records: list[ForecastRecord] = []
    for fam in config.forecast_families:
        spec = config.spec_for(fam, derive_seed(config.seed, "forecast", m, h, fam))
        records.extend(rolling_forecast(frame, spec, t_min=config.t_min, inner_folds=config.inner_cv_folds))
    if config.include_naive:
        records.extend(rolling_naive(frame, t_min=config.t_min))
    if config.include_ts:
        target_years = list(frame.years[config.t_min:])
        records.extend(
            rolling_ts_forecast(
                inputs.monthly_changes(), config.commodity, m, h,
                target_years, future_year=frame.future_year,
                ts_floor=config.ts_floor,
                max_p=config.arima_max_p, max_q=config.arima_max_q,
            )
        )
    return {
        "records": [r.to_dict() for r in records],
        "screened": {"csv": frame_to_csv(frame), "meta": frame_meta(frame)},
    }


def _explain_cell(config: RunConfig, inputs: _Inputs, m: int, h: int) -> dict:
    key = _cell_key(m, h)
    frame_path = config.output_dir / "frames" / f"{key}_screened.csv"
    meta_path = frame_path.with_suffix(".meta.json")
    if not frame_path.exists() or not meta_path.exists():
        raise PrerequisiteError(f"missing screened frame {frame_path}; run the forecast stage", missing=str(frame_path))
    frame = frame_from_csv(frame_path.read_text(encoding="utf-8"), json.loads(meta_path.read_text()))

    forecasts_path = config.output_dir / "forecasts.csv"
    if not forecasts_path.exists():
        raise PrerequisiteError(f"missing {forecasts_path}; run the forecast stage", missing=str(forecasts_path))
    cell_records = [
        r for r in _read_forecast_records(forecasts_path)
        if r.target_month == m and r.horizon == h and r.model in XML_FAMILIES
    ]
    if not any(r.observed is not None for r in cell_records):
        raise StageError(f"no observed forecast records for cell {key}")
    winner = best_model_per_cell(cell_records)[(m, h)]
    family = winner[0]

    seed = derive_seed(config.seed, "explain", m, h)
    spec = config.spec_for(family, seed)
    columns = list(frame.column_names)
    point = grid_search(spec, frame.X, frame.y, columns, folds=config.inner_cv_folds)
    model = fit(spec.with_point(point), frame.X, frame.y, columns)

    k = len(columns)
    attributions = []
    for i, year in enumerate(frame.years):
        if k <= min(explain_mod.EXACT_MAX_FEATURES, config.shap_exact_max_features):
            att = explain_mod.shapley_exact(model, frame.X, frame.X[i], columns)
            mode = "exact"
        else:
            att = explain_mod.shapley_sampling(
                model, frame.X, frame.X[i], columns,
                n_permutations=config.shap_permutations,
                seed=derive_seed(config.seed, "shap", m, h, year),
            )
            mode = "sampling"
        attributions.append(
            explain_mod.ShapleyAttribution(int(year), att.phi, att.baseline, att.prediction)
        )

    influence = explain_mod.median_relative_influence(attributions)
    perm_importance = explain_mod.permutation_importance(
        model, frame.X, frame.y, columns,
        repeats=config.perm_importance_repeats,
        seed=derive_seed(config.seed, "permimp", m, h),
    )

    pdp_curves = []
    ranked = sorted(influence, key=lambda f: (-influence[f], f))
    pos = {name: j for j, name in enumerate(columns)}
    for feature in ranked[: config.pdp_top_features]:
        values = frame.X[:, pos[feature]]
        phis = [a.phi[feature] for a in attributions]
        if np.unique(values).size < 2:
            continue
        pdp_curves.append(explain_mod.pdp(feature, values, phis, bins=config.pdp_bins))

    surrogate, fidelity = explain_mod.global_surrogate(
        model, frame.X, columns, depth=config.surrogate_depth, seed=seed
    )
    winner_records = [r for r in cell_records if (r.model, r.dataset) == winner]
    residuals = explain_mod.residual_analysis(winner_records)
    coefficients = explain_mod.coefficients_report(model) if family == "ols-stepwise" else None

    beeswarm = explain_mod.beeswarm_rows(attributions, [int(y) for y in frame.years], frame.X, columns)
    return {
        "explanation": {
            "model": family,
            "dataset": winner[1],
            "hyperparameters": point,
            "shapley_mode": mode,
            "attributions": [a.to_dict() for a in attributions],
            "influence": influence,
            "permutation_importance": perm_importance,
            "pdp": [c.to_dict() for c in pdp_curves],
            "surrogate": {"fidelity_r2": fidelity, "tree": surrogate.to_dict()["tree"], "text": surrogate.to_text()},
            "residuals": residuals,
            "coefficients": coefficients,
        },
        "beeswarm": beeswarm,
    }


_CELL_TASKS = {}
for _task in (_assemble_cell, _screen_cell, _forecast_cell, _explain_cell):
    _CELL_TASKS[_task.__name__] = _guarded(_task)


# ---------------------------------------------------------------------------
# Forecast record file round-trip

def _write_forecasts_csv(path: Path, records: list[ForecastRecord]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["commodity", "target_year", "target_month", "horizon", "model", "dataset", "predicted", "observed", "T"])
    ordered = sorted(records, key=lambda r: (r.target_month, r.horizon, r.model, r.dataset, r.target_year))
    for r in ordered:
        w.writerow([
            r.commodity, r.target_year, r.target_month, r.horizon, r.model, r.dataset,
            repr(r.predicted), "" if r.observed is None else repr(r.observed), r.train_size,
        ])
    atomic_write_text(path, buf.getvalue())


def _read_forecast_records(path: Path) -> list[ForecastRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(path.read_text(encoding="utf-8"))):
        out.append(
            ForecastRecord(
                commodity=row["commodity"],
                target_year=int(row["target_year"]),
                target_month=int(row["target_month"]),
                horizon=int(row["horizon"]),
                model=row["model"],
                dataset=row["dataset"],
                predicted=float(row["predicted"]),
                observed=None if row["observed"] == "" else float(row["observed"]),
                train_size=int(row["T"]),
            )
        )
    return out


# ---------------------------------------------------------------------------
# The manifest

class RunManifest:
    def __init__(self, path: Path):
        self.path = path
        if path.exists():
            self.doc = json.loads(path.read_text(encoding="utf-8"))
        else:
            self.doc = {
                "tool_version": __version__,
                "config": None,
                "config_hash": None,
                "seed": None,
                "inputs": {},
                "stages": {},
                "cells": {},
                "outputs": {},
            }

    def start_run(self, config: RunConfig) -> None:
        snapshot = config.to_dict()
        if self.doc["config_hash"] not in (None, config.config_hash()):
            log.warning("config changed since previous run in this output directory")
            self.doc["stages"] = {}
            self.doc["cells"] = {}
            self.doc["outputs"] = {}
        self.doc["tool_version"] = __version__
        self.doc["config"] = snapshot
        self.doc["config_hash"] = config.config_hash()
        self.doc["seed"] = config.seed

    def record_inputs(self, paths: dict[str, Path]) -> None:
        self.doc["inputs"] = {name: sha256_file(p) for name, p in sorted(paths.items())}

    def record_stage(self, stage: str, status: str, info: dict | None = None) -> None:
        self.doc["stages"][stage] = {"status": status, **(info or {})}

    def record_cell(self, stage: str, cell: str, status: str, reason: str = "") -> None:
        entry = self.doc["cells"].setdefault(cell, {})
        entry[stage] = {"status": status} if not reason else {"status": status, "reason": reason}

    def record_output(self, root: Path, path: Path) -> None:
        self.doc["outputs"][str(path.relative_to(root))] = sha256_file(path)

    def stage_done(self, stage: str) -> bool:
        return self.doc["stages"].get(stage, {}).get("status") in ("done", "partial")

    def save(self) -> None:
        atomic_write_text(self.path, canonical_json(self.doc) + "\n")


# ---------------------------------------------------------------------------
# Stage runners

def run_stage(stage: str, config: RunConfig, jobs: int = 1) -> int:
    """Execute one pipeline stage; returns the process exit code."""
    if stage not in STAGES:
        raise AgricafError(f"unknown stage {stage!r}; choose from {STAGES}")
    outdir = config.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(outdir / "manifest.json")
    manifest.start_run(config)
    cells = [(m, h) for m in config.months for h in config.horizons]
    runner = {
        "validate": _stage_validate,
        "assemble": _stage_assemble,
        "screen": _stage_screen,
        "forecast": _stage_forecast,
        "explain": _stage_explain,
        "report": _stage_report,
    }[stage]
    try:
        code = runner(config, manifest, cells, jobs)
    except PrerequisiteError as exc:
        _log_event(stage, "", "prerequisite-missing", missing=exc.missing)
        log.error("%s", exc)
        return EXIT_PREREQUISITE
    except AgricafError as exc:
        _log_event(stage, "", "failed", error=type(exc).__name__)
        log.error("%s", exc)
        manifest.record_stage(stage, "failed", {"error": str(exc)})
        manifest.save()
        from agricaf.errors import DataValidationError, ParseError

        return EXIT_VALIDATION if isinstance(exc, (ParseError, DataValidationError)) else 1
    manifest.save()
    return code


def _require(path: Path, hint: str) -> None:
    if not path.exists():
        raise PrerequisiteError(f"missing prerequisite {path.name}: {hint}", missing=str(path))


def _record_cell_statuses(manifest: RunManifest, stage: str, results: dict) -> tuple[int, int]:
    errors = 0
    done = 0
    for cell in sorted(results):
        payload = results[cell]
        status = payload.get("status", "done")
        manifest.record_cell(stage, cell, status, payload.get("reason", ""))
        if status == "done":
            done += 1
        elif status == "error":
            errors += 1
        _log_event(stage, cell, status, **({"reason": payload["reason"]} if payload.get("reason") else {}))
    return done, errors


def _finish(manifest: RunManifest, stage: str, done: int, errors: int, total: int, info: dict | None = None) -> int:
    if total > 0 and done == 0 and errors > 0:
        manifest.record_stage(stage, "failed", info)
        return 1
    manifest.record_stage(stage, "partial" if errors else "done", info)
    return EXIT_PARTIAL if errors else EXIT_OK


def _stage_validate(config: RunConfig, manifest: RunManifest, cells, jobs: int) -> int:
    inputs = _Inputs(config)
    manifest.record_inputs({
        "prices.csv": config.prices_path,
        "supply.csv": config.supply_path,
        "regions.csv": config.regions_path,
        "calendar.csv": config.calendar_path,
    })
    if config.commodity not in inputs.prices:
        raise StageError(f"commodity {config.commodity!r} not present in prices file")
    reports = {}
    for name in inputs.series_names:
        if name not in inputs.prices:
            raise StageError(f"configured monthly series {name!r} not present in prices file")
        reports[name] = validate_dataset(
            inputs.prices[name], inputs.supplies, inputs.geo_map, inputs.calendar
        )
    ok = all(r.ok for r in reports.values())
    doc = {"ok": ok, "series": {name: r.to_dict() for name, r in sorted(reports.items())}}
    path = config.output_dir / "validation.json"
    atomic_write_text(path, canonical_json(doc) + "\n")
    manifest.record_output(config.output_dir, path)
    manifest.record_stage("validate", "done" if ok else "failed", {"hard_violations": sum(len(r.hard) for r in reports.values())})
    _log_event("validate", "", "done" if ok else "hard-violations")
    return EXIT_OK if ok else EXIT_VALIDATION


def _stage_assemble(config: RunConfig, manifest: RunManifest, cells, jobs: int) -> int:
    validation = config.output_dir / "validation.json"
    _require(validation, "run the validate stage first")
    if not json.loads(validation.read_text())["ok"]:
        raise StageError("validation reported hard violations; refusing to assemble")

    inputs = _Inputs(config)
    changes = inputs.monthly_changes()
    series = np.array([v for _, v in sorted(changes.items())])
    adf = adf_test(series, alpha=config.adf_alpha)
    adf_info = {
        "adf_statistic": adf.statistic,
        "adf_lags": adf.lags_used,
        "adf_critical": adf.critical_5pct,
        "stationary": adf.reject_unit_root,
    }
    if not adf.reject_unit_root:
        manifest.record_stage("assemble", "failed", adf_info)
        _log_event("assemble", "", "adf-gate-failed", statistic=f"{adf.statistic:.3f}")
        log.error("dependent change series is not stationary at %.0f%%; pipeline stops", config.adf_alpha * 100)
        return EXIT_VALIDATION
    _log_event("assemble", "", "adf-gate-passed", statistic=f"{adf.statistic:.3f}")

    results = _run_cells(config, cells, _CELL_TASKS["_assemble_cell"], jobs)
    frames_dir = config.output_dir / "frames"
    for cell in sorted(results):
        payload = results[cell]
        if payload.get("status") != "done":
            continue
        for ds, blob in sorted(payload["frames"].items()):
            path = frames_dir / f"{cell}_{ds}.csv"
            atomic_write_text(path, blob["csv"])
            atomic_write_text(path.with_suffix(".meta.json"), canonical_json(blob["meta"]) + "\n")
            manifest.record_output(config.output_dir, path)
            manifest.record_output(config.output_dir, path.with_suffix(".meta.json"))
    done, errors = _record_cell_statuses(manifest, "assemble", results)
    return _finish(manifest, "assemble", done, errors, len(results), adf_info)


def _stage_screen(config: RunConfig, manifest: RunManifest, cells, jobs: int) -> int:
    _require(config.output_dir / "frames", "run the assemble stage first")
    results = _run_cells(config, cells, _CELL_TASKS["_screen_cell"], jobs)
    screening_dir = config.output_dir / "screening"
    for cell in sorted(results):
        payload = results[cell]
        if payload.get("status") != "done":
            continue
        path = screening_dir / f"{cell}.json"
        atomic_write_text(path, canonical_json(payload["screening"]) + "\n")
        manifest.record_output(config.output_dir, path)
    done, errors = _record_cell_statuses(manifest, "screen", results)
    return _finish(manifest, "screen", done, errors, len(results))


def _stage_forecast(config: RunConfig, manifest: RunManifest, cells, jobs: int) -> int:
    screening_dir = config.output_dir / "screening"
    _require(screening_dir, "run the screen stage first")
    for m, h in cells:
        _require(screening_dir / f"{_cell_key(m, h)}.json", "run the screen stage first")
    results = _run_cells(config, cells, _CELL_TASKS["_forecast_cell"], jobs)

    frames_dir = config.output_dir / "frames"
    records: list[ForecastRecord] = []
    for cell in sorted(results):
        payload = results[cell]
        if payload.get("status") != "done":
            continue
        path = frames_dir / f"{cell}_screened.csv"
        atomic_write_text(path, payload["screened"]["csv"])
        atomic_write_text(path.with_suffix(".meta.json"), canonical_json(payload["screened"]["meta"]) + "\n")
        manifest.record_output(config.output_dir, path)
        manifest.record_output(config.output_dir, path.with_suffix(".meta.json"))
        for doc in payload["records"]:
            records.append(ForecastRecord(**{
                "commodity": doc["commodity"],
                "target_year": doc["target_year"],
                "target_month": doc["target_month"],
                "horizon": doc["horizon"],
                "model": doc["model"],
                "dataset": doc["dataset"],
                "predicted": doc["predicted"],
                "observed": doc["observed"],
                "train_size": doc["train_size"],
            }))
    path = config.output_dir / "forecasts.csv"
    _write_forecasts_csv(path, records)
    manifest.record_output(config.output_dir, path)
    done, errors = _record_cell_statuses(manifest, "forecast", results)
    return _finish(manifest, "forecast", done, errors, len(results))


def _stage_explain(config: RunConfig, manifest: RunManifest, cells, jobs: int) -> int:
    _require(config.output_dir / "forecasts.csv", "run the forecast stage first")
    results = _run_cells(config, cells, _CELL_TASKS["_explain_cell"], jobs)

    explanations = {}
    beeswarm_rows = []
    pdp_rows = []
    influence_rows = []
    for cell in sorted(results):
        payload = results[cell]
        if payload.get("status") != "done":
            continue
        doc = payload["explanation"]
        explanations[cell] = doc
        m, h = int(cell[1:3]), int(cell[5:7])
        for row in payload["beeswarm"]:
            beeswarm_rows.append([config.commodity, m, h, row["instance"], row["feature"],
                                  repr(row["phi"]), repr(row["value"]), row["rank"]])
        for curve in doc["pdp"]:
            for x, phi in curve["points"]:
                pdp_rows.append([config.commodity, m, h, curve["feature"], "point", repr(x), repr(phi), "", ""])
            for x, v in curve["curve"]:
                pdp_rows.append([config.commodity, m, h, curve["feature"], "curve", repr(x), repr(v), "", ""])
            for x, lo, hi in curve["band"]:
                pdp_rows.append([config.commodity, m, h, curve["feature"], "band", repr(x), "", repr(lo), repr(hi)])
        for feature in sorted(doc["influence"]):
            influence_rows.append([config.commodity, m, h, feature, repr(doc["influence"][feature])])

    path = config.output_dir / "explanations.json"
    atomic_write_text(path, canonical_json(explanations) + "\n")
    manifest.record_output(config.output_dir, path)

    plotdata = config.output_dir / "plotdata"
    for name, header, rows in (
        ("beeswarm.csv", ["commodity", "month", "horizon", "instance", "feature", "phi", "value", "rank"], beeswarm_rows),
        ("pdp.csv", ["commodity", "month", "horizon", "feature", "kind", "x", "y", "lo", "hi"], pdp_rows),
        ("influence.csv", ["commodity", "month", "horizon", "feature", "share"], influence_rows),
    ):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(header)
        w.writerows(rows)
        atomic_write_text(plotdata / name, buf.getvalue())
        manifest.record_output(config.output_dir, plotdata / name)

    done, errors = _record_cell_statuses(manifest, "explain", results)
    return _finish(manifest, "explain", done, errors, len(results))


def _stage_report(config: RunConfig, manifest: RunManifest, cells, jobs: int) -> int:
    path = config.output_dir / "forecasts.csv"
    _require(path, "run the forecast stage first")
    records = _read_forecast_records(path)

    by_option: dict[tuple, list[ForecastRecord]] = {}
    for r in records:
        if r.observed is not None:
            by_option.setdefault((r.target_month, r.horizon, r.model, r.dataset), []).append(r)

    metrics_rows = []
    for key in sorted(by_option):
        m, h, model, dataset = key
        recs = by_option[key]
        row = compute_metrics([r.observed for r in recs], [r.predicted for r in recs])
        metrics_rows.append([
            config.commodity, m, h, model, dataset,
            repr(row.mae), repr(row.mad),
            "" if row.mape is None else repr(row.mape),
            repr(row.mse), repr(row.rmse),
            "" if row.ra is None else repr(row.ra),
            row.n,
        ])
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["commodity", "month", "horizon", "model", "dataset", "mae", "mad", "mape", "mse", "rmse", "ra", "n"])
    w.writerows(metrics_rows)
    metrics_path = config.output_dir / "metrics.csv"
    atomic_write_text(metrics_path, buf.getvalue())
    manifest.record_output(config.output_dir, metrics_path)

    winners = best_model_per_cell(records)
    summary_cells = {}
    mae_table: dict[str, dict[str, float]] = {}
    ra_table: dict[str, dict[str, float]] = {}
    for (m, h) in sorted(winners):
        model, dataset = winners[(m, h)]
        recs = by_option.get((m, h, model, dataset), [])
        if not recs:
            continue
        row = compute_metrics([r.observed for r in recs], [r.predicted for r in recs])
        summary_cells[_cell_key(m, h)] = {
            "winner": [model, dataset],
            "mae": row.mae,
            "ra": row.ra,
            "n": row.n,
        }
        mae_table.setdefault(str(m), {})[str(h)] = row.mae
        ra_table.setdefault(str(m), {})[str(h)] = row.ra
    report = {
        "commodity": config.commodity,
        "cells": summary_cells,
        "mae_by_month_and_horizon": mae_table,
        "ra_by_month_and_horizon": ra_table,
        "rows": len(summary_cells),
    }
    report_path = config.output_dir / "report.json"
    atomic_write_text(report_path, canonical_json(report) + "\n")
    manifest.record_output(config.output_dir, report_path)
    manifest.record_stage("report", "done", {"rows": len(summary_cells)})
    _log_event("report", "", "done", rows=len(summary_cells))
    return EXIT_OK
