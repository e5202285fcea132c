"""Aligned multivariate time-series container and deterministic preprocessing.

A :class:`Panel` is a time-indexed matrix of named numeric series sharing one
strictly increasing calendar-date axis.  Missing cells are stored as NaN; any
operation whose result would depend on a missing value refuses to run instead
of propagating it silently.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

__all__ = [
    "Panel",
    "DiffSeries",
    "SplitRatios",
    "ScalerParams",
    "StatsRow",
    "load_panel",
    "impute_linear",
    "log_transform",
    "difference",
    "inverse_difference",
    "continuation_anchors",
    "split",
    "descriptive_stats",
    "correlation_matrix",
    "fit_scaler",
    "apply_scaler",
    "concat_rows",
]


@dataclass(frozen=True)
class Panel:
    """T x K matrix of aligned series with a shared date index.

    Parameters
    ----------
    timestamps : tuple of datetime.date
        Strictly increasing observation dates, one per row.
    columns : tuple of str
        Unique, non-empty series names.
    values : ndarray, shape (T, K)
        Float matrix; NaN marks a missing cell.

    Panels are immutable: the value matrix is copied on construction and
    marked read-only, so instances are safe to share across threads.
    """

    timestamps: tuple[date, ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        ts = tuple(self.timestamps)
        cols = tuple(str(c) for c in self.columns)
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError(f"values must be 2-D, got ndim={vals.ndim}")
        if vals.shape != (len(ts), len(cols)):
            raise ValueError(
                f"values shape {vals.shape} does not match "
                f"{len(ts)} timestamps x {len(cols)} columns"
            )
        for a, b in zip(ts, ts[1:]):
            if not b > a:
                raise ValueError(f"non-monotone timestamps: {a} followed by {b}")
        if len(set(cols)) != len(cols):
            raise ValueError("column names must be unique")
        if any(not c for c in cols):
            raise ValueError("column names must be non-empty")
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def n_series(self) -> int:
        return len(self.columns)

    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())

    def require_complete(self, operation: str) -> None:
        """Raise if any cell is missing; used by ops that forbid NaN input."""
        if self.has_missing():
            raise ValueError(f"{operation}: panel contains missing values")

    def column(self, name: str) -> np.ndarray:
        """Return one series as a 1-D float copy."""
        try:
            j = self.columns.index(name)
        except ValueError:
            raise KeyError(f"no column named {name!r}") from None
        return np.array(self.values[:, j])

    def select(self, names: Sequence[str]) -> "Panel":
        """Sub-panel with the given columns, in the given order."""
        idx = []
        for name in names:
            if name not in self.columns:
                raise KeyError(f"no column named {name!r}")
            idx.append(self.columns.index(name))
        return Panel(self.timestamps, tuple(names), self.values[:, idx])

    def rows(self, start: int, stop: int | None = None) -> "Panel":
        """Contiguous row slice as a new panel."""
        sl = slice(start, stop)
        return Panel(self.timestamps[sl], self.columns, self.values[sl])

    def with_values(self, values: np.ndarray) -> "Panel":
        """Same index and columns, new value matrix."""
        return Panel(self.timestamps, self.columns, values)

    def to_csv(self, destination: str | Path | TextIO, date_column: str = "date") -> None:
        """Write the panel in the canonical CSV layout (empty cell = missing)."""
        if isinstance(destination, (str, Path)):
            with open(destination, "w", encoding="utf-8", newline="") as fh:
                self.to_csv(fh, date_column=date_column)
            return
        writer = csv.writer(destination, lineterminator="\n")
        writer.writerow([date_column, *self.columns])
        for ts, row in zip(self.timestamps, self.values):
            cells = ["" if math.isnan(v) else repr(float(v)) for v in row]
            writer.writerow([ts.isoformat(), *cells])


@dataclass(frozen=True)
class DiffSeries:
    """Result of applying first differencing ``order`` times to one series.

    ``anchors`` holds the level consumed by each differencing stage (the first
    value of the series at that stage), so the transform inverts exactly.
    """

    values: np.ndarray
    anchors: tuple[float, ...]
    order: int

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "anchors", tuple(float(a) for a in self.anchors))
        if len(self.anchors) != self.order:
            raise ValueError(
                f"expected {self.order} anchors, got {len(self.anchors)}"
            )


@dataclass(frozen=True)
class SplitRatios:
    """Chronological train/validation/test fractions, summing to one."""

    train: float
    val: float
    test: float

    def __post_init__(self):
        for name, r in (("train", self.train), ("val", self.val), ("test", self.test)):
            if r < 0:
                raise ValueError(f"{name} ratio must be non-negative, got {r}")
        total = self.train + self.val + self.test
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"ratios must sum to 1, got {total!r}")


@dataclass(frozen=True)
class ScalerParams:
    """Per-column min/max observed on the fitting range (the training split)."""

    columns: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.array(self.mins, dtype=float)
        maxs = np.array(self.maxs, dtype=float)
        if np.any(maxs < mins):
            raise ValueError("scaler max must be >= min for every column")
        mins.setflags(write=False)
        maxs.setflags(write=False)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)


@dataclass(frozen=True)
class StatsRow:
    """One descriptive-statistics row: name, n, max, min, mean, std, skew, kurtosis.

    Standard deviation is the sample (n-1) estimate.  Skewness and kurtosis are
    the bias-adjusted sample estimates, kurtosis in the excess convention; both
    are None for constant columns or samples too short to adjust.
    """

    name: str
    n: int
    maximum: float
    minimum: float
    mean: float
    std: float
    skewness: float | None
    kurtosis: float | None


def load_panel(source: str | Path | TextIO, date_column: str | None = None) -> Panel:
    """Parse a CSV stream into a :class:`Panel`.

    Parameters
    ----------
    source : path or text stream
        UTF-8 CSV with a header row.  The date column holds ISO-8601 dates
        (YYYY-MM-DD); every other column holds decimal numbers, with an empty
        cell marking a missing value.
    date_column : str, optional
        Name of the date column.  Defaults to the first header field.

    Raises
    ------
    ValueError
        On empty input, unparsable cells, or non-monotone timestamps.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return load_panel(fh, date_column=date_column)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty input: no header row") from None
    header = [h.strip() for h in header]
    if date_column is None:
        date_idx = 0
    else:
        if date_column not in header:
            raise ValueError(f"date column {date_column!r} not in header {header}")
        date_idx = header.index(date_column)
    value_cols = [h for i, h in enumerate(header) if i != date_idx]

    timestamps: list[date] = []
    rows: list[list[float]] = []
    for lineno, record in enumerate(reader, start=2):
        if not record or all(not cell.strip() for cell in record):
            continue
        if len(record) != len(header):
            raise ValueError(
                f"line {lineno}: expected {len(header)} cells, got {len(record)}"
            )
        raw_date = record[date_idx].strip()
        try:
            ts = date.fromisoformat(raw_date)
        except ValueError:
            raise ValueError(f"line {lineno}: unparsable date {raw_date!r}") from None
        if timestamps and ts <= timestamps[-1]:
            raise ValueError(
                f"line {lineno}: non-monotone timestamps "
                f"({timestamps[-1]} followed by {ts})"
            )
        timestamps.append(ts)
        parsed: list[float] = []
        for i, cell in enumerate(record):
            if i == date_idx:
                continue
            cell = cell.strip()
            if not cell:
                parsed.append(math.nan)
                continue
            try:
                parsed.append(float(cell))
            except ValueError:
                raise ValueError(
                    f"line {lineno}: unparsable numeric cell {cell!r} "
                    f"in column {header[i]!r}"
                ) from None
        rows.append(parsed)
    values = np.array(rows, dtype=float) if rows else np.empty((0, len(value_cols)))
    return Panel(tuple(timestamps), tuple(value_cols), values)


def impute_linear(panel: Panel) -> Panel:
    """Fill missing cells by linear interpolation between observed neighbours.

    Leading and trailing gaps take the nearest observed value.  Each column
    must have at least one observation.  Fully observed panels pass through
    unchanged (the operation is idempotent).
    """
    if not panel.has_missing():
        return panel
    out = np.array(panel.values)
    t = np.arange(len(panel), dtype=float)
    for j, name in enumerate(panel.columns):
        col = out[:, j]
        observed = ~np.isnan(col)
        if not observed.any():
            raise ValueError(f"column {name!r} is entirely missing")
        if observed.all():
            continue
        out[:, j] = np.interp(t, t[observed], col[observed])
    return panel.with_values(out)


def log_transform(panel: Panel, columns: Iterable[str]) -> Panel:
    """Replace the selected columns by their natural logarithm.

    Every selected value must be strictly positive (and observed).
    """
    names = list(columns)
    out = np.array(panel.values)
    for name in names:
        j = panel.columns.index(name) if name in panel.columns else None
        if j is None:
            raise KeyError(f"no column named {name!r}")
        col = out[:, j]
        if np.isnan(col).any():
            raise ValueError(f"log_transform: column {name!r} has missing values")
        if np.any(col <= 0):
            bad = float(col[col <= 0][0])
            raise ValueError(
                f"log_transform: column {name!r} has non-positive value {bad}"
            )
        out[:, j] = np.log(col)
    return panel.with_values(out)


def difference(series: Sequence[float] | np.ndarray, d: int) -> DiffSeries:
    """Apply first differencing ``d`` times, keeping per-stage anchors.

    The anchor of each stage is the first value consumed by that stage, which
    makes :func:`inverse_difference` an exact inverse.
    """
    values = np.asarray(series, dtype=float)
    if values.ndim != 1:
        raise ValueError("difference expects a single series")
    if d < 0:
        raise ValueError(f"order must be non-negative, got {d}")
    if len(values) <= d:
        raise ValueError(f"series of length {len(values)} cannot be differenced {d} times")
    if np.isnan(values).any():
        raise ValueError("difference: series contains missing values")
    anchors: list[float] = []
    current = values
    for _ in range(d):
        anchors.append(float(current[0]))
        current = np.diff(current)
    return DiffSeries(current, tuple(anchors), d)


def inverse_difference(
    diff: DiffSeries | Sequence[float] | np.ndarray,
    anchors: Sequence[float] | None = None,
) -> np.ndarray:
    """Reconstruct levels from differenced values by cumulative summation.

    Two modes:

    *  ``inverse_difference(diff_series)`` undoes :func:`difference` exactly,
       reproducing the original series including the anchor rows.
    *  ``inverse_difference(values, anchors)`` continues a level series past
       its end: ``anchors`` are the last observed values per stage (levels
       first), and the result holds only the levels following them.
    """
    if isinstance(diff, DiffSeries):
        current = diff.values
        for anchor in reversed(diff.anchors):
            current = np.concatenate(([anchor], anchor + np.cumsum(current)))
        return current
    if anchors is None:
        raise ValueError("inverse_difference of raw values requires anchors")
    current = np.asarray(diff, dtype=float)
    for anchor in reversed(tuple(anchors)):
        current = anchor + np.cumsum(current)
    return current


def continuation_anchors(series: Sequence[float] | np.ndarray, d: int) -> tuple[float, ...]:
    """Last observed value at each differencing stage (levels first).

    These are the anchors :func:`inverse_difference` needs to turn forecast
    differences into levels that continue ``series``.
    """
    current = np.asarray(series, dtype=float)
    if len(current) <= d:
        raise ValueError(f"series of length {len(current)} has no order-{d} anchors")
    anchors = []
    for _ in range(d):
        anchors.append(float(current[-1]))
        current = np.diff(current)
    return tuple(anchors)


def split(panel: Panel, ratios: SplitRatios) -> tuple[Panel, Panel, Panel]:
    """Chronological, contiguous, non-overlapping train/val/test split.

    The validation and test sizes are the floors of their fractions of T; the
    remainder goes to the training split (so 747 rows at 6:2:2 give exactly
    449/149/149).
    """
    T = len(panel)
    if T < 3:
        raise ValueError(f"cannot split a panel of {T} rows")
    # tiny nudge keeps exact fractions (e.g. 0.2 * 10) from flooring one low
    n_test = int(math.floor(ratios.test * T + 1e-9))
    n_val = int(math.floor(ratios.val * T + 1e-9))
    n_train = T - n_val - n_test
    for name, ratio, n in (
        ("train", ratios.train, n_train),
        ("val", ratios.val, n_val),
        ("test", ratios.test, n_test),
    ):
        if ratio > 0 and n < 1:
            raise ValueError(
                f"{name} split is empty: ratio {ratio} of {T} rows yields {n}"
            )
    train = panel.rows(0, n_train)
    val = panel.rows(n_train, n_train + n_val)
    test = panel.rows(n_train + n_val, T)
    return train, val, test


def _moments(col: np.ndarray) -> tuple[float, float, float, float]:
    mean = float(col.mean())
    centred = col - mean
    m2 = float(np.mean(centred**2))
    m3 = float(np.mean(centred**3))
    m4 = float(np.mean(centred**4))
    return mean, m2, m3, m4


def descriptive_stats(panel: Panel) -> list[StatsRow]:
    """Per-column descriptive statistics (one row per series).

    Skewness is the bias-adjusted sample skewness G1 and kurtosis the
    bias-adjusted excess kurtosis G2; both are reported as missing when the
    column is constant or the sample is too short for the adjustment.
    """
    if len(panel) == 0 or panel.n_series == 0:
        raise ValueError("descriptive_stats: empty panel")
    panel.require_complete("descriptive_stats")
    rows = []
    n = len(panel)
    for j, name in enumerate(panel.columns):
        col = panel.values[:, j]
        mean, m2, m3, m4 = _moments(col)
        std = math.sqrt(m2 * n / (n - 1)) if n > 1 else 0.0
        skew: float | None = None
        kurt: float | None = None
        if m2 > 0 and n >= 3:
            g1 = m3 / m2**1.5
            skew = g1 * math.sqrt(n * (n - 1)) / (n - 2)
        if m2 > 0 and n >= 4:
            g2 = m4 / m2**2 - 3.0
            kurt = ((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3))
        rows.append(
            StatsRow(
                name=name,
                n=n,
                maximum=float(col.max()),
                minimum=float(col.min()),
                mean=mean,
                std=std,
                skewness=skew,
                kurtosis=kurt,
            )
        )
    return rows


def correlation_matrix(panel: Panel) -> np.ndarray:
    """Pearson correlation between columns: symmetric, unit diagonal."""
    panel.require_complete("correlation_matrix")
    X = panel.values - panel.values.mean(axis=0)
    norms = np.sqrt((X**2).sum(axis=0))
    for name, nrm in zip(panel.columns, norms):
        if nrm == 0:
            raise ValueError(f"correlation_matrix: column {name!r} has zero variance")
    C = (X.T @ X) / np.outer(norms, norms)
    C = (C + C.T) / 2.0
    C = np.clip(C, -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return C


def fit_scaler(panel: Panel) -> ScalerParams:
    """Observe per-column min/max; call on the training split only."""
    panel.require_complete("fit_scaler")
    if len(panel) == 0:
        raise ValueError("fit_scaler: empty panel")
    return ScalerParams(
        columns=panel.columns,
        mins=panel.values.min(axis=0),
        maxs=panel.values.max(axis=0),
    )


def apply_scaler(panel: Panel, params: ScalerParams | None, direction: str = "forward") -> Panel:
    """Min-max scale to [0, 1] (``forward``) or undo it (``inverse``).

    Constant columns map to 0.0 forward and back to their constant inverse.
    """
    if params is None:
        raise ValueError("apply_scaler: scaler has not been fitted")
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    if params.columns != panel.columns:
        raise ValueError(
            f"scaler columns {params.columns} do not match panel columns {panel.columns}"
        )
    span = params.maxs - params.mins
    constant = span == 0
    safe_span = np.where(constant, 1.0, span)
    if direction == "forward":
        scaled = (panel.values - params.mins) / safe_span
        scaled = np.where(constant, 0.0, scaled)
        return panel.with_values(scaled)
    restored = panel.values * safe_span + params.mins
    restored = np.where(constant, params.mins, restored)
    return panel.with_values(restored)


def scale_rows(values: np.ndarray, params: ScalerParams, direction: str = "forward") -> np.ndarray:
    """Scaler applied to a bare (n, K) array in the params' column order."""
    span = params.maxs - params.mins
    constant = span == 0
    safe_span = np.where(constant, 1.0, span)
    if direction == "forward":
        return np.where(constant, 0.0, (values - params.mins) / safe_span)
    return np.where(constant, params.mins, values * safe_span + params.mins)


def concat_rows(first: Panel, second: Panel) -> Panel:
    """Stack two panels that continue each other in time."""
    if first.columns != second.columns:
        raise ValueError("cannot concatenate panels with different columns")
    if len(second) == 0:
        return first
    if len(first) == 0:
        return second
    return Panel(
        first.timestamps + second.timestamps,
        first.columns,
        np.vstack([first.values, second.values]),
    )
