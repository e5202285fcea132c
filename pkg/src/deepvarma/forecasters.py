"""Uniform forecaster adapters for the evaluation harness and the CLI.

Every adapter exposes ``fit(train, val)`` and ``forecast_path(observed, h)``,
where ``observed`` is the chronological prefix of the test panel seen so far;
the adapter conditions on its stored history (train + val) extended by that
prefix, without refitting.  Under the stationary protocol the statistical
layers work on first differences and forecasts are inverse-differenced from
the last observed level.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from . import hybrid as hy
from . import lstm as nn
from . import varma as vm
from .panel import Panel, ScalerParams, apply_scaler, concat_rows, fit_scaler, scale_rows

__all__ = [
    "VarmaForecaster",
    "LstmForecaster",
    "HybridForecaster",
    "make_forecaster",
    "to_bundle",
    "bundle_forecast",
    "MODEL_CHOICES",
    "PROTOCOLS",
]

PROTOCOLS = ("stationary", "non-stationary")
MODEL_CHOICES = ("varma", "varmax", "lstm", "deepvarma-re", "deepvarma-en", "deepvarma")


class _Base:
    name: str = "model"
    applicable_protocols: tuple[str, ...] = PROTOCOLS

    def __init__(self, protocol: str = "non-stationary"):
        if protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")
        self.protocol = protocol
        self._history: Panel | None = None

    @property
    def stationary(self) -> bool:
        return self.protocol == "stationary"

    def _observed(self, prefix: Panel) -> Panel:
        if self._history is None:
            raise ValueError(f"{self.name}: fit() must be called before forecasting")
        return concat_rows(self._history, prefix) if len(prefix) else self._history

    def fit(self, train: Panel, val: Panel | None = None) -> None:
        raise NotImplementedError

    def forecast_path(self, observed: Panel, h: int) -> np.ndarray:
        raise NotImplementedError


class VarmaForecaster(_Base):
    """Plain VARMA, or VARMAX when an aligned exogenous panel is supplied.

    ``exog_full`` must cover every timestamp the forecaster will ever see
    (train, validation and test); rows are aligned positionally.  The model is
    fitted on the training rows and forecasts condition on all observed rows.
    """

    def __init__(
        self,
        exog_full: Panel | None = None,
        p_range: Sequence[int] = (0, 1, 2, 3),
        q_range: Sequence[int] = (0, 1, 2),
        s_range: Sequence[int] | None = None,
        include_intercept: bool | None = None,
        exog_policy: str = "hold-last",
        protocol: str = "non-stationary",
        jobs: int = 1,
        name: str | None = None,
    ):
        super().__init__(protocol)
        self.exog_full = exog_full
        self.p_range = tuple(p_range)
        self.q_range = tuple(q_range)
        self.s_range = None if s_range is None else tuple(s_range)
        self.include_intercept = include_intercept
        self.exog_policy = exog_policy
        self.jobs = jobs
        self.name = name or ("varmax" if exog_full is not None else "varma")
        self.fitted: vm.FittedVarma | None = None

    def _exog_rows(self, n: int) -> Panel | None:
        if self.exog_full is None:
            return None
        if len(self.exog_full) < n:
            raise ValueError("exogenous panel does not cover the requested history")
        return self.exog_full.rows(0, n)

    def fit(self, train: Panel, val: Panel | None = None) -> None:
        self._history = concat_rows(train, val) if val is not None else train
        if self.stationary:
            work = Panel(train.timestamps[1:], train.columns, np.diff(train.values, axis=0))
            exog = self._exog_rows(len(train))
            exog = exog.rows(1) if exog is not None else None
            intercept = False if self.include_intercept is None else self.include_intercept
        else:
            work = train
            exog = self._exog_rows(len(train))
            intercept = True if self.include_intercept is None else self.include_intercept
        _, self.fitted = vm.select_order(
            work,
            p_range=self.p_range,
            q_range=self.q_range,
            s_range=self.s_range,
            exog=exog,
            include_intercept=intercept,
            jobs=self.jobs,
        )

    def forecast_path(self, observed: Panel, h: int) -> np.ndarray:
        hist = self._observed(observed)
        y = hist.values
        exog = self._exog_rows(len(hist))
        x = None if exog is None else exog.values
        params = self.fitted.params
        if self.stationary:
            work = np.diff(y, axis=0)
            x_work = None if x is None else x[1:]
            diffs = vm.forecast_values(params, work, x_work, h, exog_policy=self.exog_policy)
            return y[-1] + np.cumsum(diffs, axis=0)
        return vm.forecast_values(params, y, x, h, exog_policy=self.exog_policy)


class LstmForecaster(_Base):
    """Stand-alone LSTM with recursive multi-step prediction.

    Mirroring the comparison protocol, it participates only in the
    non-stationary runs (levels in, levels out, min-max scaled internally).
    """

    applicable_protocols = ("non-stationary",)

    def __init__(
        self,
        config: nn.LstmConfig | None = None,
        protocol: str = "non-stationary",
        name: str = "lstm",
    ):
        super().__init__(protocol)
        self.config = config
        self.name = name
        self.model: nn.TrainedLstm | None = None

    def fit(self, train: Panel, val: Panel | None = None) -> None:
        self._history = concat_rows(train, val) if val is not None else train
        m = train.n_series
        cfg = self.config or nn.LstmConfig(
            input_dim=m, hidden_dim=8, output_dim=m, window=3,
            learning_rate=0.01, epochs=200, seed=0, selection="best-val",
        )
        if cfg.input_dim != m or cfg.output_dim != m:
            cfg = replace(cfg, input_dim=m, output_dim=m)
        scaler = fit_scaler(train)
        ds = nn.windowize(apply_scaler(train, scaler), cfg.window)
        val_ds = None
        if val is not None and len(val) > cfg.window:
            val_ds = nn.windowize(apply_scaler(val, scaler), cfg.window)
        self.model = nn.train(ds, val_ds, cfg, scaler=scaler)

    def forecast_path(self, observed: Panel, h: int) -> np.ndarray:
        hist = self._observed(observed)
        scaler = self.model.scaler
        window = scale_rows(hist.values[-self.model.config.window :], scaler)
        preds = nn.predict_recursive(self.model, window, h)
        return scale_rows(preds, scaler, "inverse")


class HybridForecaster(_Base):
    """One of the three fusion pipelines behind the uniform interface."""

    def __init__(
        self,
        variant: str,
        exog_full: Panel | None = None,
        config: hy.HybridConfig | None = None,
        protocol: str = "non-stationary",
        name: str | None = None,
    ):
        if variant not in ("re", "en", "full"):
            raise ValueError(f"unknown hybrid variant {variant!r}")
        super().__init__(protocol)
        if variant in ("en", "full") and exog_full is None:
            raise ValueError(f"variant {variant!r} requires an exogenous panel")
        self.variant = variant
        self.exog_full = exog_full
        base = config or hy.HybridConfig()
        self.config = replace(base, difference=self.stationary)
        self.name = name or {"re": "deepvarma-re", "en": "deepvarma-en", "full": "deepvarma"}[variant]
        self.model: hy.HybridModel | None = None

    def _exog_rows(self, n: int) -> Panel | None:
        if self.exog_full is None:
            return None
        if len(self.exog_full) < n:
            raise ValueError("exogenous panel does not cover the requested history")
        return self.exog_full.rows(0, n)

    def fit(self, train: Panel, val: Panel | None = None) -> None:
        self._history = concat_rows(train, val) if val is not None else train
        exog = self._exog_rows(len(train))
        val_exog = None
        if val is not None and self.exog_full is not None:
            val_exog = self.exog_full.rows(len(train), len(train) + len(val))
        if self.variant == "re":
            self.model = hy.fit_deepvarma_re(train, self.config, val_endog=val)
        elif self.variant == "en":
            self.model = hy.fit_deepvarma_en(
                train, exog, self.config, val_endog=val, val_exog=val_exog
            )
        else:
            self.model = hy.fit_deepvarma(
                train, exog, self.config, val_endog=val, val_exog=val_exog
            )

    def forecast_path(self, observed: Panel, h: int) -> np.ndarray:
        hist = self._observed(observed)
        exog = self._exog_rows(len(hist))
        fc = hy.forecast_on_history(
            self.model, h, hist.values, None if exog is None else exog.values
        )
        return fc.y_hat


def to_bundle(forecaster: _Base) -> dict:
    """Serialisable state of a fitted forecaster, sufficient to forecast on."""
    hist = forecaster._history
    if hist is None:
        raise ValueError("forecaster has not been fitted")
    doc: dict = {
        "model": forecaster.name,
        "protocol": forecaster.protocol,
        "endog_columns": list(hist.columns),
    }
    if isinstance(forecaster, VarmaForecaster):
        doc["kind"] = "varma"
        doc["fitted"] = forecaster.fitted.to_dict()
        doc["anchors"] = [float(v) for v in hist.values[-1]] if forecaster.stationary else None
        if forecaster.exog_full is not None:
            doc["exog_columns"] = list(forecaster.exog_full.columns)
            doc["exog_policy"] = forecaster.exog_policy
    elif isinstance(forecaster, LstmForecaster):
        doc["kind"] = "lstm"
        doc["lstm"] = forecaster.model.to_dict()
        scaler = forecaster.model.scaler
        doc["scaler"] = {
            "columns": list(scaler.columns),
            "mins": scaler.mins.tolist(),
            "maxs": scaler.maxs.tolist(),
        }
        W = forecaster.model.config.window
        doc["window_tail"] = hist.values[-W:].tolist()
    elif isinstance(forecaster, HybridForecaster):
        doc["kind"] = "hybrid"
        doc["hybrid"] = forecaster.model.to_dict()
    else:  # pragma: no cover - adapters above are exhaustive
        raise TypeError(f"cannot bundle forecaster of type {type(forecaster)!r}")
    return doc


def bundle_forecast(doc: dict, h: int, future_exog: np.ndarray | None = None) -> np.ndarray:
    """Emit h-step level forecasts from a serialised forecaster bundle."""
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    kind = doc["kind"]
    if kind == "varma":
        fitted = vm.FittedVarma.from_dict(doc["fitted"])
        policy = doc.get("exog_policy", "hold-last")
        fc = vm.forecast(fitted, h, future_exog=future_exog, exog_policy=policy)
        if doc.get("anchors") is not None:
            return np.array(doc["anchors"]) + np.cumsum(fc.values, axis=0)
        return fc.values
    if kind == "lstm":
        model = nn.TrainedLstm.from_dict(doc["lstm"])
        s = doc["scaler"]
        scaler = ScalerParams(tuple(s["columns"]), np.array(s["mins"]), np.array(s["maxs"]))
        window = scale_rows(np.array(doc["window_tail"], dtype=float), scaler)
        return scale_rows(nn.predict_recursive(model, window, h), scaler, "inverse")
    if kind == "hybrid":
        model = hy.HybridModel.from_dict(doc["hybrid"])
        return hy.forecast_hybrid(model, h, future_exog=future_exog).y_hat
    raise ValueError(f"unknown bundle kind {kind!r}")


def make_forecaster(
    model: str,
    exog_full: Panel | None = None,
    protocol: str = "non-stationary",
    lstm_config: nn.LstmConfig | None = None,
    hybrid_config: hy.HybridConfig | None = None,
    jobs: int = 1,
) -> _Base:
    """Build the adapter named by the CLI model selector."""
    if model == "varma":
        cfg = hybrid_config or hy.HybridConfig()
        return VarmaForecaster(
            None, p_range=cfg.p_range, q_range=cfg.q_range, protocol=protocol, jobs=jobs
        )
    if model == "varmax":
        if exog_full is None:
            raise ValueError("varmax requires exogenous columns")
        cfg = hybrid_config or hy.HybridConfig()
        return VarmaForecaster(
            exog_full,
            p_range=cfg.p_range,
            q_range=cfg.q_range,
            s_range=cfg.s_range,
            exog_policy=cfg.exog_policy,
            protocol=protocol,
            jobs=jobs,
        )
    if model == "lstm":
        return LstmForecaster(lstm_config, protocol=protocol)
    if model in ("deepvarma-re", "deepvarma-en", "deepvarma"):
        variant = {"deepvarma-re": "re", "deepvarma-en": "en", "deepvarma": "full"}[model]
        cfg = hybrid_config or hy.HybridConfig()
        if lstm_config is not None and cfg.predictor is None:
            cfg = replace(cfg, predictor=lstm_config)
        cfg = replace(cfg, jobs=jobs)
        return HybridForecaster(variant, exog_full, cfg, protocol=protocol)
    raise ValueError(f"unknown model {model!r}; choose from {MODEL_CHOICES}")
