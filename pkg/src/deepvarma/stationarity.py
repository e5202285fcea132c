"""Augmented Dickey-Fuller unit-root testing with a constant-only regression.

The test fits ``dy_t = c + gamma * y_{t-1} + sum_i delta_i * dy_{t-i} + u_t``
by least squares, picks the augmentation lag by AIC, and maps the t-ratio of
``gamma`` through an embedded response surface for the constant-only
Dickey-Fuller distribution.  A small p-value rejects the unit-root null, i.e.
indicates stationarity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import erf, sqrt, log

import numpy as np

from .panel import Panel

__all__ = ["AdfResult", "StationarityReport", "adf_test", "stationarity_report"]

# Response surface for the constant-only Dickey-Fuller t-distribution
# (MacKinnon 1994 regression-surface coefficients for the single-series,
# constant-only case): p = NormalCDF(poly(stat)), with a quadratic branch in
# the lower tail and a cubic branch above the join point.  Accuracy against
# direct simulation of the null is exercised by the test suite.
_TAU_JOIN = -1.61
_TAU_HIGH = 2.74
_TAU_LOW = -18.83
_SMALLP = (2.1659, 1.4412, 0.038269)
_LARGEP = (1.7339, 0.93202, -0.12745, -0.010368)

# Reported p-values are clamped here to avoid extrapolating the surface tails.
P_FLOOR = 1e-4
P_CEIL = 0.9999

_MIN_LENGTH = 15


def _normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + erf(x / sqrt(2.0)))


def dickey_fuller_pvalue(stat: float) -> float:
    """Map a constant-only ADF t-statistic to an approximate p-value."""
    if stat > _TAU_HIGH:
        return P_CEIL
    if stat < _TAU_LOW:
        return P_FLOOR
    if stat <= _TAU_JOIN:
        a, b, c = _SMALLP
        z = a + b * stat + c * stat * stat
    else:
        a, b, c, d = _LARGEP
        z = a + b * stat + c * stat * stat + d * stat**3
    return min(P_CEIL, max(P_FLOOR, _normal_cdf(z)))


@dataclass(frozen=True)
class AdfResult:
    """Outcome of one augmented Dickey-Fuller test.

    ``statistic`` is the t-ratio of the lagged-level coefficient, ``lag`` the
    AIC-selected number of lagged-difference terms, and the remaining fields
    the fitted regression coefficients (constant-only specification).
    """

    statistic: float
    pvalue: float
    lag: int
    regression: str
    intercept: float
    level_coef: float
    diff_coefs: tuple[float, ...]


def _design(y: np.ndarray, dy: np.ndarray, lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Regression sample for a given augmentation lag: rows t = lag.. of dy."""
    n = len(dy) - lag
    cols = [np.ones(n), y[lag : len(y) - 1]]
    for i in range(1, lag + 1):
        cols.append(dy[lag - i : len(dy) - i])
    return np.column_stack(cols), dy[lag:]


def adf_test(series, max_lag: int | None = None) -> AdfResult:
    """Constant-only ADF test with AIC lag selection.

    Parameters
    ----------
    series : 1-D array_like
        Fully observed series of length >= 15 with positive variance.
    max_lag : int, optional
        Largest augmentation lag searched; defaults to
        ``floor(12 * (T / 100) ** 0.25)``, shrunk if the sample is short.

    Notes
    -----
    Candidate lags 0..max_lag are compared by AIC on a common estimation
    sample (all rows trimmed at ``max_lag``), with ties going to the smallest
    lag; the reported regression is then refit on the full sample usable at
    the selected lag.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValueError("adf_test expects a single series")
    T = len(y)
    if T < _MIN_LENGTH:
        raise ValueError(f"series too short for ADF test: {T} < {_MIN_LENGTH}")
    if np.isnan(y).any():
        raise ValueError("adf_test: series contains missing values")
    if np.ptp(y) == 0:
        raise ValueError("adf_test: series has zero variance")

    if max_lag is None:
        max_lag = int(12.0 * (T / 100.0) ** 0.25)
    if max_lag < 0:
        raise ValueError(f"max_lag must be non-negative, got {max_lag}")
    # keep enough residual degrees of freedom at the largest candidate
    max_lag = max(0, min(max_lag, (T - 1) // 2 - 2))

    dy = np.diff(y)
    X_full, target = _design(y, dy, max_lag)
    n = len(target)
    best_aic = np.inf
    best_lag = 0
    for lag in range(max_lag + 1):
        X = X_full[:, : 2 + lag]
        # lagged differences enter in order, so column prefixes reuse the
        # common max_lag-trimmed sample and keep the AICs comparable
        beta, _, _, _ = np.linalg.lstsq(X, target, rcond=None)
        ssr = float(np.sum((target - X @ beta) ** 2))
        if ssr <= 0:
            ssr = np.finfo(float).tiny
        aic = n * log(ssr / n) + 2 * (lag + 2)
        if aic < best_aic:
            best_aic = aic
            best_lag = lag

    X, target = _design(y, dy, best_lag)
    beta, _, _, _ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ beta
    dof = len(target) - X.shape[1]
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = sqrt(cov[1, 1])
    if not np.isfinite(se) or se == 0:
        raise ValueError("adf_test: degenerate regression (zero residual variance)")
    stat = float(beta[1] / se)
    return AdfResult(
        statistic=stat,
        pvalue=dickey_fuller_pvalue(stat),
        lag=best_lag,
        regression="c",
        intercept=float(beta[0]),
        level_coef=float(beta[1]),
        diff_coefs=tuple(float(b) for b in beta[2:]),
    )


@dataclass(frozen=True)
class StationarityReport:
    """Per-column p-values before and after first differencing."""

    rows: tuple[tuple[str, float, float], ...]

    def to_csv(self) -> str:
        lines = ["series,original_p,diff_p"]
        for name, p0, p1 in self.rows:
            lines.append(f"{name},{p0:.4f},{p1:.4f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            name: {"original_p": p0, "diff_p": p1} for name, p0, p1 in self.rows
        }
        return json.dumps(payload, indent=2)


def stationarity_report(panel: Panel, max_lag: int | None = None) -> StationarityReport:
    """Run :func:`adf_test` on every column and on its first difference."""
    panel.require_complete("stationarity_report")
    rows = []
    for name in panel.columns:
        col = panel.column(name)
        original = adf_test(col, max_lag=max_lag)
        differenced = adf_test(np.diff(col), max_lag=max_lag)
        rows.append((name, original.pvalue, differenced.pvalue))
    return StationarityReport(tuple(rows))
