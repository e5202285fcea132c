"""Forecast accuracy metrics and the multi-horizon / multi-model reports.

Point metrics follow the usual definitions: MSE is the mean squared
difference, RMSE its square root, MAE the mean absolute difference, and MAPE
the mean absolute percentage error (reported as a percentage, undefined when
an actual value is zero).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .panel import Panel, concat_rows

__all__ = [
    "MetricReport",
    "HorizonTable",
    "CompareReport",
    "metrics",
    "horizon_eval",
    "compare",
    "DEFAULT_POINT_HORIZONS",
    "DEFAULT_CUMULATIVE_RANGES",
]

DEFAULT_POINT_HORIZONS = (1, 5, 10, 15)
DEFAULT_CUMULATIVE_RANGES = (5, 10, 15, 20)


@dataclass(frozen=True)
class MetricReport:
    """The four error metrics over n prediction/actual pairs.

    ``mape`` is in percent and None when undefined (a zero actual value).
    """

    mse: float
    rmse: float
    mae: float
    mape: float | None
    n: int

    def to_dict(self) -> dict:
        return {"mse": self.mse, "rmse": self.rmse, "mae": self.mae,
                "mape": self.mape, "n": self.n}


def metrics(y: np.ndarray, y_hat: np.ndarray) -> MetricReport:
    """Compute MSE, RMSE, MAE and MAPE of predictions against actuals."""
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("metrics: empty input")
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape} actuals vs {y_hat.shape} predictions")
    err = y_hat - y
    mse = float(np.mean(err**2))
    rmse = math.sqrt(mse)
    mae = float(np.mean(np.abs(err)))
    mape = None
    if not np.any(y == 0):
        mape = float(np.mean(np.abs(err / y))) * 100.0
    return MetricReport(mse=mse, rmse=rmse, mae=mae, mape=mape, n=y.size)


@dataclass(frozen=True)
class HorizonTable:
    """Model x horizon grid of mean squared errors (Table-4 layout).

    ``cells`` maps series name -> model name -> {column label -> MSE}, where
    the column labels are the point horizons ("1", "5", ...) followed by the
    cumulative ranges ("1:5", "1:10", ...).  The pseudo-series ``"(mean)"``
    averages the cells across series.
    """

    point_horizons: tuple[int, ...]
    cumulative_ranges: tuple[int, ...]
    series: tuple[str, ...]
    models: tuple[str, ...]
    cells: Mapping[str, Mapping[str, Mapping[str, float]]]

    @property
    def column_labels(self) -> tuple[str, ...]:
        return tuple(str(h) for h in self.point_horizons) + tuple(
            f"1:{a}" for a in self.cumulative_ranges
        )

    def cell(self, series: str, model: str, label: str) -> float:
        return self.cells[series][model][label]

    def merged(self, other: "HorizonTable") -> "HorizonTable":
        """Combine model rows from two tables over the same series and columns."""
        if (
            self.point_horizons != other.point_horizons
            or self.cumulative_ranges != other.cumulative_ranges
            or self.series != other.series
        ):
            raise ValueError("cannot merge horizon tables with different layouts")
        cells = {
            s: {**self.cells[s], **other.cells[s]} for s in self.series
        }
        return HorizonTable(
            self.point_horizons,
            self.cumulative_ranges,
            self.series,
            self.models + other.models,
            cells,
        )

    def to_csv(self) -> str:
        header = "model," + ",".join(self.column_labels)
        blocks = []
        for s in self.series:
            lines = [f"series,{s}", header]
            for model in self.models:
                row = self.cells[s][model]
                lines.append(
                    model + "," + ",".join(repr(row[c]) for c in self.column_labels)
                )
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"

    def to_json(self) -> str:
        payload = {
            "point_horizons": list(self.point_horizons),
            "cumulative_ranges": list(self.cumulative_ranges),
            "cells": {s: {m: dict(r) for m, r in block.items()}
                      for s, block in self.cells.items()},
        }
        return json.dumps(payload, indent=2)


def horizon_eval(
    forecaster,
    test: Panel,
    point_horizons: Sequence[int] = DEFAULT_POINT_HORIZONS,
    cumulative_ranges: Sequence[int] = DEFAULT_CUMULATIVE_RANGES,
) -> HorizonTable:
    """Rolling-origin multi-step evaluation of one fitted forecaster.

    For every origin in the test range that still admits a full H_max-step
    path, the forecaster produces steps 1..H_max without refitting.  The point
    column h averages the squared error at step h over origins; the cumulative
    column 1:a averages the MSE over steps 1..a.  Cells are per endogenous
    series, with a cross-series mean in the ``"(mean)"`` block.
    """
    point_horizons = tuple(point_horizons)
    cumulative_ranges = tuple(cumulative_ranges)
    h_max = max(point_horizons + cumulative_ranges)
    n_test = len(test)
    if n_test < h_max:
        raise ValueError(
            f"test panel of {n_test} rows is shorter than the largest horizon {h_max}"
        )
    n_origins = n_test - h_max + 1
    actual = test.values
    sq = np.zeros((n_origins, h_max, test.n_series))
    for o in range(n_origins):
        path = forecaster.forecast_path(test.rows(0, o), h_max)
        sq[o] = (path - actual[o : o + h_max]) ** 2

    cells: dict[str, dict[str, dict[str, float]]] = {}
    per_series = sq.mean(axis=0)  # (h_max, K) mean over origins
    for j, name in enumerate(test.columns):
        row: dict[str, float] = {}
        for h in point_horizons:
            row[str(h)] = float(per_series[h - 1, j])
        for a in cumulative_ranges:
            row[f"1:{a}"] = float(per_series[:a, j].mean())
        cells[name] = {forecaster.name: row}
    mean_row: dict[str, float] = {}
    for h in point_horizons:
        mean_row[str(h)] = float(per_series[h - 1].mean())
    for a in cumulative_ranges:
        mean_row[f"1:{a}"] = float(per_series[:a].mean())
    cells["(mean)"] = {forecaster.name: mean_row}
    return HorizonTable(
        point_horizons=point_horizons,
        cumulative_ranges=cumulative_ranges,
        series=test.columns + ("(mean)",),
        models=(forecaster.name,),
        cells=cells,
    )


@dataclass(frozen=True)
class CompareReport:
    """Per-series, per-model metric blocks (Table-3 layout).

    ``blocks`` maps series name -> model name -> MetricReport, or None where a
    model is inapplicable under the protocol (rendered "-").
    """

    protocol: str
    series: tuple[str, ...]
    models: tuple[str, ...]
    blocks: Mapping[str, Mapping[str, MetricReport | None]]

    def to_csv(self) -> str:
        out = []
        for s in self.series:
            lines = [f"series,{s}", "model,MSE,RMSE,MAE,MAPE"]
            for model in self.models:
                report = self.blocks[s][model]
                if report is None:
                    lines.append(f"{model},-,-,-,-")
                else:
                    mape = "-" if report.mape is None else f"{report.mape:.3f}%"
                    lines.append(
                        f"{model},{report.mse:.6g},{report.rmse:.6g},"
                        f"{report.mae:.6g},{mape}"
                    )
            out.append("\n".join(lines))
        return "\n\n".join(out) + "\n"

    def to_json(self) -> str:
        payload = {
            "protocol": self.protocol,
            "blocks": {
                s: {m: (None if r is None else r.to_dict()) for m, r in block.items()}
                for s, block in self.blocks.items()
            },
        }
        return json.dumps(payload, indent=2)


def rolling_one_step(forecaster, test: Panel) -> np.ndarray:
    """One-step-ahead predictions over the test range without refitting."""
    preds = np.zeros_like(test.values)
    for o in range(len(test)):
        preds[o] = forecaster.forecast_path(test.rows(0, o), 1)[0]
    return preds


def compare(
    models: Sequence,
    train: Panel,
    val: Panel | None,
    test: Panel,
    protocol: str = "non-stationary",
) -> CompareReport:
    """Fit each model and score rolling one-step test predictions.

    Models whose ``applicable_protocols`` excludes the protocol are reported
    as inapplicable (None cells, rendered "-").  The cross-series mean block
    ``"(mean)"`` averages each metric over the endogenous series.
    """
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ValueError("model names must be unique")
    blocks: dict[str, dict[str, MetricReport | None]] = {
        name: {} for name in test.columns
    }
    blocks["(mean)"] = {}
    for model in models:
        if protocol not in model.applicable_protocols:
            for s in blocks:
                blocks[s][model.name] = None
            continue
        model.fit(train, val)
        preds = rolling_one_step(model, test)
        per_series = []
        for j, s in enumerate(test.columns):
            report = metrics(test.values[:, j], preds[:, j])
            blocks[s][model.name] = report
            per_series.append(report)
        mapes = [r.mape for r in per_series]
        blocks["(mean)"][model.name] = MetricReport(
            mse=float(np.mean([r.mse for r in per_series])),
            rmse=float(np.mean([r.rmse for r in per_series])),
            mae=float(np.mean([r.mae for r in per_series])),
            mape=None if any(v is None for v in mapes) else float(np.mean(mapes)),
            n=per_series[0].n,
        )
    return CompareReport(
        protocol=protocol,
        series=test.columns + ("(mean)",),
        models=tuple(names),
        blocks=blocks,
    )
