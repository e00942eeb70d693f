"""Metrics, scenario orchestration, pooled evaluation, and model comparison.

A scenario fixes the feature set, split, granularity, and model list, fits
every model per series on training rows only, forecasts the test window,
and pools residuals across series (ordered by store, item, date) into one
set of headline metrics per model.  Failures are recorded per model without
aborting the others.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .data import Granularity, SalesTable, SplitSpec, aggregate
from .errors import FingerprintMismatchError
from .features import (
    DeviationConfig,
    DeviationMode,
    FeatureMatrix,
    FeatureSpec,
    HolidayCalendar,
    build_train_test_matrices,
)
from .models.arimax import (
    ArimaxModel,
    ForecastMode,
    fit_arimax,
    forecast_arimax,
    in_sample_predictions,
)
from .models.gbdt import GbdtConfig, GbdtModel, fit_gbdt, predict_gbdt
from .models.naive import seasonal_naive_forecast, seasonal_naive_insample
from .models.svr import SvrConfig, SvrModel, fit_svr, predict_svr
from .models.trend_seasonal import (
    TrendSeasonalConfig,
    TrendSeasonalModel,
    fit_trend_seasonal,
    forecast_trend_seasonal,
)

logger = logging.getLogger(__name__)

MODEL_NAMES = ("gbdt", "arimax", "trend_seasonal", "svr", "naive")

# Exogenous regressors handed to the AR(1) model: calendar/anomaly flags
# only, never lag columns (the autoregressive term already covers lag 1).
ARIMAX_EXOG_COLUMNS = ("weekday_sin", "weekday_cos", "weekday", "holiday", "deviation_flag")

HISTOGRAM_BINS = 30


# --- metrics -----------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    mae: float
    rmse: float
    r2: float | None  # None when the actuals are constant (undefined)
    n: int


def score(actual: np.ndarray, predicted: np.ndarray) -> Metrics:
    """MAE, RMSE, and R^2 about the actuals' mean."""
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if len(actual) == 0 or len(actual) != len(predicted):
        raise ValueError("need equal, non-zero-length vectors")
    err = actual - predicted
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = None
    else:
        r2 = 1.0 - float(np.sum(err * err)) / ss_tot
    return Metrics(mae=mae, rmse=rmse, r2=r2, n=len(actual))


def error_histogram(residuals: np.ndarray, n_bins: int) -> list[tuple[float, float, int]]:
    """Equal-width bins spanning [min, max]; half-open low edges, last bin closed."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    residuals = np.asarray(residuals, dtype=np.float64)
    if len(residuals) == 0:
        return []
    lo, hi = float(residuals.min()), float(residuals.max())
    if lo == hi:
        return [(lo, hi, len(residuals))]
    counts, edges = np.histogram(residuals, bins=n_bins, range=(lo, hi))
    return [
        (float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(n_bins)
    ]


def naive_baseline(train: np.ndarray, test_dates: Sequence) -> np.ndarray:
    """Seasonal-naive predictions for a contiguous test window."""
    return seasonal_naive_forecast(np.asarray(train, dtype=np.float64), len(test_dates))


# --- scenario specification ---------------------------------------------------

S1_FEATURES = FeatureSpec(lags=(1, 7, 14, 28), cyclical=frozenset({"month"}))


def s2_features(deviation_mode: DeviationMode = DeviationMode.SAME_DAY) -> FeatureSpec:
    return FeatureSpec(
        lags=(1, 7, 14, 28),
        cyclical=frozenset({"month", "weekday"}),
        use_weekday_numeric=True,
        use_holiday=True,
        use_deviation_flag=True,
        deviation=DeviationConfig(mode=deviation_mode),
    )


_EXOGENOUS_MARKERS = ("weekday", "holiday", "deviation_flag")


@dataclass(frozen=True)
class ScenarioSpec:
    """One evaluation condition: feature set, split, granularity, models."""

    id: str
    feature_spec: FeatureSpec
    split: SplitSpec
    granularity: Granularity = Granularity.PER_SERIES
    models: tuple[str, ...] = MODEL_NAMES
    arimax_mode: ForecastMode = ForecastMode.RECURSIVE
    gbdt_config: GbdtConfig = field(default_factory=GbdtConfig)
    svr_config: SvrConfig = field(default_factory=SvrConfig)
    trend_config: TrendSeasonalConfig = field(default_factory=TrendSeasonalConfig)

    def __post_init__(self) -> None:
        unknown = set(self.models) - set(MODEL_NAMES)
        if unknown:
            raise ValueError(f"unknown models: {sorted(unknown)}")
        fs = self.feature_spec
        has_exog = (
            fs.use_weekday_numeric
            or fs.use_holiday
            or fs.use_deviation_flag
            or "weekday" in fs.cyclical
        )
        if self.id == "S1" and has_exog:
            raise ValueError("S1 must exclude weekday/holiday/deviation columns")
        if self.id == "S2" and not has_exog:
            raise ValueError("S2 must include the exogenous flag columns")

    def fingerprint_payload(self) -> dict:
        return {
            "id": self.id,
            "split": [
                self.split.train_end.isoformat(),
                self.split.test_start.isoformat(),
                self.split.test_end.isoformat(),
            ],
            "granularity": self.granularity.value,
        }


def make_scenario(
    scenario_id: str,
    split: SplitSpec,
    granularity: Granularity = Granularity.PER_SERIES,
    deviation_mode: DeviationMode = DeviationMode.SAME_DAY,
    models: tuple[str, ...] = MODEL_NAMES,
    **overrides,
) -> ScenarioSpec:
    feature_spec = S1_FEATURES if scenario_id == "S1" else s2_features(deviation_mode)
    return ScenarioSpec(
        id=scenario_id,
        feature_spec=feature_spec,
        split=split,
        granularity=granularity,
        models=models,
        **overrides,
    )


# --- per-series model tasks ---------------------------------------------------

def _exog_columns(columns: Sequence[str]) -> list[str]:
    return [c for c in columns if c in ARIMAX_EXOG_COLUMNS]


def _sub_matrix(fm: FeatureMatrix, sl: slice) -> FeatureMatrix:
    return FeatureMatrix(
        list(fm.columns),
        fm.rows[sl],
        fm.target[sl],
        fm.dates[sl],
        fm.stores[sl],
        fm.items[sl],
        dict(fm.scaling),
    )


def _run_series_task(payload: dict) -> dict:
    """Fit one model on one series and forecast its test window.

    Top-level function so worker processes can unpickle it.  Returns the
    test predictions, in-sample training residual std, and the serialized
    model artifact.
    """
    model_name = payload["model"]
    train: FeatureMatrix = payload["train"]
    test: FeatureMatrix = payload["test"]
    spec: ScenarioSpec = payload["spec"]
    calendar_entries: dict | None = payload["calendar_entries"]
    started = time.perf_counter()

    if model_name == "gbdt":
        model = fit_gbdt(train, spec.gbdt_config)
        predictions = predict_gbdt(model, test)
        train_pred = predict_gbdt(model, train)
        artifact = model.to_dict()
        mode = "one-step-features"
    elif model_name == "svr":
        model = fit_svr(train, spec.svr_config)
        predictions = predict_svr(model, test)
        train_pred = predict_svr(model, train)
        artifact = model.to_dict()
        mode = "one-step-features"
    elif model_name == "arimax":
        exog_names = _exog_columns(train.columns)
        X_train = (
            np.column_stack([train.column(c) for c in exog_names]) if exog_names else None
        )
        X_test = (
            np.column_stack([test.column(c) for c in exog_names]) if exog_names else None
        )
        model = fit_arimax(train.target, X_train, exog_names=exog_names)
        predictions = forecast_arimax(
            model,
            X_test,
            len(test),
            spec.arimax_mode,
            actuals_for_onestep=test.target if spec.arimax_mode is ForecastMode.ONE_STEP else None,
        )
        fitted = in_sample_predictions(model, train.target, X_train)
        train_pred = np.concatenate([[train.target[0]], fitted])
        artifact = model.to_dict()
        mode = spec.arimax_mode.value
    elif model_name == "trend_seasonal":
        calendar = None
        if calendar_entries:
            calendar = HolidayCalendar(
                entries={dt.date.fromordinal(o): n for o, n in calendar_entries.items()}
            )
        model = fit_trend_seasonal(train.target, train.dates, spec.trend_config, calendar)
        predictions, _, _ = forecast_trend_seasonal(model, test.dates)
        train_pred, _, _ = forecast_trend_seasonal(model, train.dates)
        artifact = model.to_dict()
        mode = "multi-step"
    elif model_name == "naive":
        predictions = seasonal_naive_forecast(train.target, len(test))
        insample = seasonal_naive_insample(train.target)
        train_pred = np.concatenate([[train.target[0]], insample])
        artifact = {"kind": "naive", "period": 7}
        mode = "seasonal-naive"
    else:
        raise ValueError(f"unknown model {model_name!r}")

    train_residuals = train.target - train_pred
    return {
        "model": model_name,
        "key": payload["key"],
        "predictions": predictions,
        "train_residual_std": float(train_residuals.std()),
        "artifact": artifact,
        "task_seconds": time.perf_counter() - started,
        "mode": mode,
    }


def _execute_tasks(tasks: list[dict], workers: int) -> list[dict]:
    if workers <= 1 or len(tasks) <= 1:
        return [_run_series_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_series_task, tasks, chunksize=1))


# --- evaluation report ---------------------------------------------------------

@dataclass
class ModelEvaluation:
    model: str
    scenario: str
    forecast_mode: str
    metrics: Metrics | None
    stores: np.ndarray
    items: np.ndarray
    dates: np.ndarray
    actuals: np.ndarray
    predictions: np.ndarray
    histogram: list[tuple[float, float, int]]
    importance: list[tuple[str, float]] | None
    train_residual_std: float
    per_series_train_residual_std: dict[tuple[str, str], float]
    artifacts: dict[tuple[str, str], dict]
    runtime_s: float
    error: str | None = None

    @property
    def residuals(self) -> np.ndarray:
        return self.actuals - self.predictions


@dataclass
class EvaluationReport:
    scenario: ScenarioSpec
    deviation_mode: str
    entries: dict[str, ModelEvaluation]
    config_fingerprint: str
    data_fingerprint: str

    def entry(self, model: str) -> ModelEvaluation:
        return self.entries[model]


def data_fingerprint(table: SalesTable) -> str:
    digest = hashlib.sha256()
    digest.update(table.dates.tobytes())
    digest.update("\x00".join(table.store_ids.tolist()).encode())
    digest.update("\x00".join(table.item_ids.tolist()).encode())
    digest.update(table.quantities.tobytes())
    return digest.hexdigest()


def config_fingerprint(payload: Mapping) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def run_scenario(
    table: SalesTable,
    spec: ScenarioSpec,
    calendar: HolidayCalendar,
    workers: int = 1,
) -> EvaluationReport:
    """Fit every model of the scenario and evaluate on the test window.

    The holiday calendar reaches models only in S2: scenario 1 is the
    history-only condition, so the trend model sees no holiday regressors
    and the design matrix carries no exogenous flags.
    """
    working = aggregate(table, spec.granularity)
    train_fm, test_fm = build_train_test_matrices(
        working, spec.feature_spec, calendar if spec.feature_spec.use_holiday else None, spec.split
    )
    train_slices = dict(train_fm.series_slices())
    test_slices = dict(test_fm.series_slices())
    keys = [k for k in train_slices if k in test_slices]

    use_calendar = spec.id != "S1"
    calendar_entries = (
        {d.toordinal(): n for d, n in calendar.entries.items()} if use_calendar else None
    )

    entries: dict[str, ModelEvaluation] = {}
    for model_name in spec.models:
        tasks = [
            {
                "model": model_name,
                "key": key,
                "train": _sub_matrix(train_fm, train_slices[key]),
                "test": _sub_matrix(test_fm, test_slices[key]),
                "spec": spec,
                "calendar_entries": calendar_entries,
            }
            for key in keys
        ]
        started = time.perf_counter()
        try:
            results = _execute_tasks(tasks, workers)
        except Exception as exc:  # recorded; other models keep running
            logger.exception("model %s failed", model_name)
            entries[model_name] = ModelEvaluation(
                model=model_name,
                scenario=spec.id,
                forecast_mode="",
                metrics=None,
                stores=np.array([], dtype=np.str_),
                items=np.array([], dtype=np.str_),
                dates=np.empty(0, dtype=np.int64),
                actuals=np.empty(0),
                predictions=np.empty(0),
                histogram=[],
                importance=None,
                train_residual_std=float("nan"),
                per_series_train_residual_std={},
                artifacts={},
                runtime_s=time.perf_counter() - started,
                error=f"{type(exc).__name__}: {exc}",
            )
            continue
        runtime = time.perf_counter() - started

        predictions = np.concatenate([r["predictions"] for r in results])
        actuals = np.concatenate([test_fm.target[test_slices[k]] for k in keys])
        stores = np.concatenate([test_fm.stores[test_slices[k]] for k in keys])
        items = np.concatenate([test_fm.items[test_slices[k]] for k in keys])
        dates = np.concatenate([test_fm.dates[test_slices[k]] for k in keys])
        metrics = score(actuals, predictions)

        importance = None
        if model_name == "gbdt":
            totals: dict[str, float] = {}
            for r in results:
                for feat, gain in r["artifact"]["gain_totals"].items():
                    totals[feat] = totals.get(feat, 0.0) + gain
            total = sum(totals.values())
            if total > 0:
                ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
                importance = [(f, g / total) for f, g in ranked]

        per_series_std = {r["key"]: r["train_residual_std"] for r in results}
        pooled_std = float(
            np.sqrt(np.mean([s * s for s in per_series_std.values()]))
        )
        entries[model_name] = ModelEvaluation(
            model=model_name,
            scenario=spec.id,
            forecast_mode=results[0]["mode"] if results else "",
            metrics=metrics,
            stores=stores,
            items=items,
            dates=dates,
            actuals=actuals,
            predictions=predictions,
            histogram=error_histogram(actuals - predictions, HISTOGRAM_BINS),
            importance=importance,
            train_residual_std=pooled_std,
            per_series_train_residual_std=per_series_std,
            artifacts={r["key"]: r["artifact"] for r in results},
            runtime_s=runtime,
        )

    return EvaluationReport(
        scenario=spec,
        deviation_mode=spec.feature_spec.deviation.mode.value
        if spec.feature_spec.use_deviation_flag
        else "",
        entries=entries,
        config_fingerprint=config_fingerprint(spec.fingerprint_payload()),
        data_fingerprint=data_fingerprint(table),
    )


# --- comparison -----------------------------------------------------------------

@dataclass
class ComparisonTable:
    scenarios: list[str]
    models: list[str]
    mae: dict[tuple[str, str], float | None]
    rmse: dict[tuple[str, str], float | None]
    r2: dict[tuple[str, str], float | None]
    improvement_pct: dict[str, float | None]
    best_by_metric: dict[tuple[str, str], str]

    def to_text(self) -> str:
        lines = []
        header = ["model"] + [f"mae[{s}]" for s in self.scenarios]
        if len(self.scenarios) > 1:
            header.append("improvement%")
        lines.append("  ".join(f"{h:>16}" for h in header))
        for m in self.models:
            row = [f"{m:>16}"]
            for s in self.scenarios:
                v = self.mae.get((m, s))
                row.append(f"{v:16.4f}" if v is not None else f"{'-':>16}")
            if len(self.scenarios) > 1:
                imp = self.improvement_pct.get(m)
                row.append(f"{imp:16.1f}" if imp is not None else f"{'-':>16}")
            lines.append("  ".join(row))
        return "\n".join(lines)


def improvement_percent(before: float, after: float) -> float:
    """Percent reduction from before to after (positive = improvement)."""
    if before == 0.0:
        return 0.0
    return 100.0 * (before - after) / before


def compare(reports: Sequence[EvaluationReport]) -> ComparisonTable:
    """Side-by-side metric matrix across scenario reports.

    All reports must come from the same data, split, and granularity;
    comparing numbers from different runs would be meaningless.
    """
    if not reports:
        raise ValueError("nothing to compare")
    datas = {r.data_fingerprint for r in reports}
    splits = {
        (
            r.scenario.split.train_end,
            r.scenario.split.test_start,
            r.scenario.split.test_end,
            r.scenario.granularity,
        )
        for r in reports
    }
    if len(datas) > 1 or len(splits) > 1:
        raise FingerprintMismatchError(
            "reports span different data or splits and cannot be compared"
        )
    scenarios = [r.scenario.id for r in reports]
    models: list[str] = []
    for r in reports:
        for m in r.entries:
            if m not in models:
                models.append(m)
    mae: dict[tuple[str, str], float | None] = {}
    rmse: dict[tuple[str, str], float | None] = {}
    r2: dict[tuple[str, str], float | None] = {}
    for r in reports:
        for m, entry in r.entries.items():
            key = (m, r.scenario.id)
            mae[key] = entry.metrics.mae if entry.metrics else None
            rmse[key] = entry.metrics.rmse if entry.metrics else None
            r2[key] = entry.metrics.r2 if entry.metrics else None

    improvement: dict[str, float | None] = {}
    if len(scenarios) > 1:
        first, last = scenarios[0], scenarios[-1]
        for m in models:
            a, b = mae.get((m, first)), mae.get((m, last))
            improvement[m] = improvement_percent(a, b) if a is not None and b is not None else None

    best: dict[tuple[str, str], str] = {}
    for s in scenarios:
        for metric_name, table_ in (("mae", mae), ("rmse", rmse)):
            candidates = [(v, m) for (m, sc), v in table_.items() if sc == s and v is not None]
            if candidates:
                best[(metric_name, s)] = min(candidates)[1]
        candidates = [(v, m) for (m, sc), v in r2.items() if sc == s and v is not None]
        if candidates:
            best[("r2", s)] = max(candidates)[1]
    return ComparisonTable(
        scenarios=scenarios,
        models=models,
        mae=mae,
        rmse=rmse,
        r2=r2,
        improvement_pct=improvement,
        best_by_metric=best,
    )
