"""Fusion pipelines combining the LSTM and the VARMA/VARMAX layers.

Three staged variants:

* ``re``   - the LSTM predicts each endogenous step (the trend part mu_t),
             and a VARMA models the residuals e_t = y_t - mu_t.
* ``en``   - an encoder LSTM turns the exogenous panel into hidden-state
             embeddings H_t, which enter a VARMAX of the endogenous panel.
* ``full`` - both: LSTM trend on the endogenous panel, encoder embeddings of
             the exogenous panel, and a VARMAX of the residuals on H_t.

Forecasts always satisfy y_hat = mu + e_hat exactly: the combined forecast is
constructed as the sum of the two stored components.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import lstm as nn
from . import varma as vm
from .panel import (
    Panel,
    ScalerParams,
    apply_scaler,
    continuation_anchors,
    fit_scaler,
    scale_rows,
)

__all__ = [
    "HybridConfig",
    "HybridModel",
    "HybridForecast",
    "fit_deepvarma_re",
    "fit_deepvarma_en",
    "fit_deepvarma",
    "forecast_hybrid",
]

EXOG_POLICIES = ("hold-last", "encoder-rollout", "require")


@dataclass(frozen=True)
class HybridConfig:
    """Settings shared by the three pipelines.

    The LSTM configs may be None, in which case modest defaults are sized to
    the data.  ``difference`` runs the whole pipeline on first differences and
    inverse-differences the forecasts back to levels (the stationary-protocol
    mode); ``intercept`` of None lets each variant decide (on for raw levels
    in the en variant, off for residuals and differenced data).
    """

    predictor: nn.LstmConfig | None = None
    encoder: nn.LstmConfig | None = None
    p_range: tuple[int, ...] = (0, 1, 2, 3)
    q_range: tuple[int, ...] = (0, 1, 2)
    s_range: tuple[int, ...] = (0, 1)
    exog_policy: str = "hold-last"
    difference: bool = False
    intercept: bool | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.exog_policy not in EXOG_POLICIES:
            raise ValueError(
                f"exog_policy must be one of {EXOG_POLICIES}, got {self.exog_policy!r}"
            )


@dataclass(frozen=True)
class HybridForecast:
    """Decomposed prediction: trend part, residual part, and their sum.

    ``y_hat`` is computed as ``mu + e_hat``, so the identity holds bitwise.
    """

    mu: np.ndarray
    e_hat: np.ndarray
    y_hat: np.ndarray


@dataclass(frozen=True)
class HybridModel:
    """A fitted pipeline: components, scalers, and alignment metadata.

    ``embed_dims`` lists the encoder hidden dimensions kept after dropping
    zero-variance embeddings; ``anchors`` holds per-column last observed
    levels when the model works on first differences.
    """

    variant: str
    config: HybridConfig
    columns: tuple[str, ...]
    varma_fit: vm.FittedVarma
    predictor: nn.TrainedLstm | None = None
    encoder: nn.TrainedLstm | None = None
    endog_scaler: ScalerParams | None = None
    exog_scaler: ScalerParams | None = None
    embed_dims: tuple[int, ...] = ()
    anchors: tuple[float, ...] = ()
    endog_tail: np.ndarray | None = None  # raw units, last rows of the fit panel
    exog_tail: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "columns": list(self.columns),
            "difference": self.config.difference,
            "exog_policy": self.config.exog_policy,
            "varma": self.varma_fit.to_dict(),
            "predictor": None if self.predictor is None else self.predictor.to_dict(),
            "encoder": None if self.encoder is None else self.encoder.to_dict(),
            "endog_scaler": _scaler_dict(self.endog_scaler),
            "exog_scaler": _scaler_dict(self.exog_scaler),
            "embed_dims": list(self.embed_dims),
            "anchors": list(self.anchors),
            "endog_tail": None if self.endog_tail is None else self.endog_tail.tolist(),
            "exog_tail": None if self.exog_tail is None else self.exog_tail.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "HybridModel":
        config = HybridConfig(
            difference=doc["difference"], exog_policy=doc["exog_policy"]
        )
        return cls(
            variant=doc["variant"],
            config=config,
            columns=tuple(doc["columns"]),
            varma_fit=vm.FittedVarma.from_dict(doc["varma"]),
            predictor=None
            if doc["predictor"] is None
            else nn.TrainedLstm.from_dict(doc["predictor"]),
            encoder=None
            if doc["encoder"] is None
            else nn.TrainedLstm.from_dict(doc["encoder"]),
            endog_scaler=_scaler_from(doc["endog_scaler"]),
            exog_scaler=_scaler_from(doc["exog_scaler"]),
            embed_dims=tuple(doc["embed_dims"]),
            anchors=tuple(doc["anchors"]),
            endog_tail=None
            if doc["endog_tail"] is None
            else np.array(doc["endog_tail"], dtype=float),
            exog_tail=None
            if doc["exog_tail"] is None
            else np.array(doc["exog_tail"], dtype=float),
        )

    @classmethod
    def from_json(cls, text: str) -> "HybridModel":
        return cls.from_dict(json.loads(text))


def _scaler_dict(s: ScalerParams | None) -> dict | None:
    if s is None:
        return None
    return {"columns": list(s.columns), "mins": s.mins.tolist(), "maxs": s.maxs.tolist()}


def _scaler_from(doc: dict | None) -> ScalerParams | None:
    if doc is None:
        return None
    return ScalerParams(tuple(doc["columns"]), np.array(doc["mins"]), np.array(doc["maxs"]))


def _default_lstm(dim: int, seed: int = 0) -> nn.LstmConfig:
    return nn.LstmConfig(
        input_dim=dim,
        hidden_dim=8,
        output_dim=dim,
        window=3,
        learning_rate=0.01,
        epochs=200,
        seed=seed,
        selection="best-val",
    )


def _default_encoder(dim: int, seed: int = 1) -> nn.LstmConfig:
    # small embedding keeps the VARMAX exogenous parameter count modest
    return nn.LstmConfig(
        input_dim=dim,
        hidden_dim=4,
        output_dim=dim,
        window=3,
        learning_rate=0.01,
        epochs=200,
        seed=seed,
    )


def _maybe_difference(panel: Panel, config: HybridConfig) -> tuple[Panel, tuple[float, ...]]:
    """First-difference every column when the stationary-protocol flag is set."""
    if not config.difference:
        return panel, ()
    values = np.diff(panel.values, axis=0)
    anchors = tuple(float(v) for v in panel.values[-1])
    return Panel(panel.timestamps[1:], panel.columns, values), anchors


def _train_predictor(
    work: Panel, config: HybridConfig, val: Panel | None
) -> tuple[nn.TrainedLstm, ScalerParams, np.ndarray]:
    """Fit the one-step predictor; returns (model, scaler, in-sample mu).

    ``mu`` is in the work panel's units, one row per target index t >= window.
    """
    m = work.n_series
    cfg = config.predictor or _default_lstm(m)
    if cfg.input_dim != m or cfg.output_dim != m:
        cfg = replace(cfg, input_dim=m, output_dim=m)
    scaler = fit_scaler(work)
    scaled = apply_scaler(work, scaler)
    ds = nn.windowize(scaled, cfg.window)
    val_ds = None
    if val is not None and len(val) > cfg.window:
        val_ds = nn.windowize(apply_scaler(val, scaler), cfg.window)
    model = nn.train(ds, val_ds, cfg, scaler=scaler)
    mu_scaled, _ = nn.forward(ds.inputs, model.weights, cfg)
    mu = scale_rows(mu_scaled, scaler, "inverse")
    return model, scaler, mu


def _train_encoder(
    exog: Panel, config: HybridConfig, val_exog: Panel | None
) -> tuple[nn.TrainedLstm, ScalerParams, nn.EmbeddingSequence]:
    """Self-supervised encoder: next-step prediction of the exogenous panel."""
    d = exog.n_series
    cfg = config.encoder or _default_encoder(d)
    if cfg.input_dim != d or cfg.output_dim != d:
        cfg = replace(cfg, input_dim=d, output_dim=d)
    scaler = fit_scaler(exog)
    scaled = apply_scaler(exog, scaler)
    ds = nn.windowize(scaled, cfg.window)
    val_ds = None
    if val_exog is not None and len(val_exog) > cfg.window:
        val_ds = nn.windowize(apply_scaler(val_exog, scaler), cfg.window)
    model = nn.train(ds, val_ds, cfg, scaler=scaler)
    embeddings = nn.encode(model, scaled.values)
    return model, scaler, embeddings


def _embedding_panel(
    base: Panel, embeddings: nn.EmbeddingSequence, keep: Sequence[int]
) -> Panel:
    names = tuple(f"h{j+1}" for j in keep)
    return Panel(
        base.timestamps[embeddings.offset :],
        names,
        embeddings.values[:, list(keep)],
    )


def _select_embed_dims(values: np.ndarray) -> tuple[int, ...]:
    """Indices of embedding dimensions with positive variance on the fit range."""
    spread = np.ptp(values, axis=0)
    return tuple(int(j) for j in np.nonzero(spread > 0)[0])


def fit_deepvarma_re(
    endog: Panel,
    config: HybridConfig | None = None,
    val_endog: Panel | None = None,
) -> HybridModel:
    """LSTM detrending plus a VARMA on the residuals."""
    config = config or HybridConfig()
    endog.require_complete("fit_deepvarma_re")
    work, anchors = _maybe_difference(endog, config)
    val_work = None
    if val_endog is not None and config.difference:
        # keep validation in the same (differenced) units, anchored to the fit tail
        joined = np.vstack([endog.values[-1:], val_endog.values])
        val_work = Panel(val_endog.timestamps, val_endog.columns, np.diff(joined, axis=0))
    elif val_endog is not None:
        val_work = val_endog

    predictor, scaler, mu = _train_predictor(work, config, val_work)
    W = predictor.config.window
    resid = work.values[W:] - mu
    resid_panel = Panel(work.timestamps[W:], work.columns, resid)
    _, varma_fit = vm.select_order(
        resid_panel,
        p_range=config.p_range,
        q_range=config.q_range,
        s_range=(0,),
        include_intercept=False if config.intercept is None else config.intercept,
        jobs=config.jobs,
    )
    return HybridModel(
        variant="re",
        config=config,
        columns=endog.columns,
        varma_fit=varma_fit,
        predictor=predictor,
        endog_scaler=scaler,
        anchors=anchors,
        endog_tail=np.array(endog.values[-(W + 1) :]),
    )


def fit_deepvarma_en(
    endog: Panel,
    exog: Panel,
    config: HybridConfig | None = None,
    val_endog: Panel | None = None,
    val_exog: Panel | None = None,
) -> HybridModel:
    """Encoder embeddings of the exogenous panel feeding a VARMAX of y."""
    config = config or HybridConfig()
    endog.require_complete("fit_deepvarma_en")
    exog.require_complete("fit_deepvarma_en")
    if endog.timestamps != exog.timestamps:
        raise ValueError("endogenous and exogenous panels are not aligned")

    work, anchors = _maybe_difference(endog, config)
    exog_work = exog.rows(1) if config.difference else exog

    encoder, exog_scaler, embeddings = _train_encoder(exog_work, config, val_exog)
    keep = _select_embed_dims(embeddings.values)
    intercept = (not config.difference) if config.intercept is None else config.intercept
    if not keep:
        warnings.warn(
            "all encoder embedding dimensions have zero variance; "
            "falling back to a VARMA without exogenous input",
            stacklevel=2,
        )
        _, varma_fit = vm.select_order(
            work,
            p_range=config.p_range,
            q_range=config.q_range,
            include_intercept=intercept,
            jobs=config.jobs,
        )
        embed_dims: tuple[int, ...] = ()
    else:
        H = _embedding_panel(exog_work, embeddings, keep)
        aligned = work.rows(embeddings.offset)
        _, varma_fit = vm.select_order(
            aligned,
            p_range=config.p_range,
            q_range=config.q_range,
            s_range=config.s_range,
            exog=H,
            include_intercept=intercept,
            jobs=config.jobs,
        )
        embed_dims = keep
    W = encoder.config.window
    return HybridModel(
        variant="en",
        config=config,
        columns=endog.columns,
        varma_fit=varma_fit,
        encoder=encoder,
        exog_scaler=exog_scaler,
        embed_dims=embed_dims,
        anchors=anchors,
        endog_tail=np.array(endog.values[-(W + 1) :]),
        exog_tail=np.array(exog.values[-(W + 1) :]),
    )


def fit_deepvarma(
    endog: Panel,
    exog: Panel,
    config: HybridConfig | None = None,
    val_endog: Panel | None = None,
    val_exog: Panel | None = None,
) -> HybridModel:
    """Full pipeline: LSTM trend, encoder embeddings, VARMAX of the residuals."""
    config = config or HybridConfig()
    endog.require_complete("fit_deepvarma")
    exog.require_complete("fit_deepvarma")
    if endog.timestamps != exog.timestamps:
        raise ValueError("endogenous and exogenous panels are not aligned")

    work, anchors = _maybe_difference(endog, config)
    exog_work = exog.rows(1) if config.difference else exog
    val_work = None
    if val_endog is not None and config.difference:
        joined = np.vstack([endog.values[-1:], val_endog.values])
        val_work = Panel(val_endog.timestamps, val_endog.columns, np.diff(joined, axis=0))
    elif val_endog is not None:
        val_work = val_endog

    predictor, endog_scaler, mu = _train_predictor(work, config, val_work)
    W = predictor.config.window
    resid = work.values[W:] - mu
    resid_panel = Panel(work.timestamps[W:], work.columns, resid)

    encoder, exog_scaler, embeddings = _train_encoder(exog_work, config, val_exog)
    if encoder.config.window != W:
        raise ValueError("predictor and encoder must share the same window")
    keep = _select_embed_dims(embeddings.values)
    intercept = False if config.intercept is None else config.intercept
    if not keep:
        warnings.warn(
            "all encoder embedding dimensions have zero variance; "
            "residual model falls back to a VARMA without exogenous input",
            stacklevel=2,
        )
        _, varma_fit = vm.select_order(
            resid_panel,
            p_range=config.p_range,
            q_range=config.q_range,
            include_intercept=intercept,
            jobs=config.jobs,
        )
        embed_dims: tuple[int, ...] = ()
    else:
        # residuals start at t = W, embeddings at t = W - 1: drop the first
        # embedding row so e_t and H_t share identical time indices
        H = _embedding_panel(exog_work, embeddings, keep).rows(1)
        _, varma_fit = vm.select_order(
            resid_panel,
            p_range=config.p_range,
            q_range=config.q_range,
            s_range=config.s_range,
            exog=H,
            include_intercept=intercept,
            jobs=config.jobs,
        )
        embed_dims = keep
    return HybridModel(
        variant="full",
        config=config,
        columns=endog.columns,
        varma_fit=varma_fit,
        predictor=predictor,
        encoder=encoder,
        endog_scaler=endog_scaler,
        exog_scaler=exog_scaler,
        embed_dims=embed_dims,
        anchors=anchors,
        endog_tail=np.array(endog.values[-(W + 1) :]),
        exog_tail=np.array(exog.values[-(W + 1) :]),
    )


def _future_embeddings(
    model: HybridModel, exog_raw: np.ndarray, h: int, future_exog: np.ndarray | None
) -> np.ndarray:
    """Embedding rows for forecast steps 1..h under the configured policy.

    ``exog_raw`` is the observed exogenous history in level units (at least
    the encoder window's worth of rows).
    """
    policy = model.config.exog_policy
    keep = list(model.embed_dims)
    encoder = model.encoder
    W = encoder.config.window
    if policy == "hold-last":
        last = nn.encode(encoder, scale_rows(exog_raw[-W:], model.exog_scaler)).values
        return np.repeat(last[-1:, keep], h, axis=0)
    if policy == "require":
        if future_exog is None or np.asarray(future_exog).shape[0] < h:
            raise ValueError("exog policy 'require' needs h rows of future exog values")
        tail = exog_raw[len(exog_raw) - (W - 1) :] if W > 1 else exog_raw[:0]
        rows = np.vstack([tail, np.asarray(future_exog, dtype=float)[:h]])
        emb = nn.encode(encoder, scale_rows(rows, model.exog_scaler))
        return emb.values[-h:, keep]
    # encoder-rollout: extend the exogenous panel with the encoder's own
    # next-step predictions, then embed the rolled windows
    window = scale_rows(exog_raw[-W:], model.exog_scaler)
    rolled = nn.predict_recursive(encoder, window, h)
    emb = nn.encode(encoder, np.vstack([window, rolled]))
    return emb.values[-h:, keep]


def _compose(
    model: HybridModel,
    mu_work: np.ndarray,
    e_work: np.ndarray,
    anchors: tuple[float, ...],
) -> HybridForecast:
    """Assemble the decomposed forecast in level units.

    Under differencing the trend component carries the level anchor and the
    residual component accumulates from zero; their sum is then the usual
    cumulative reconstruction of the combined differenced forecast.
    """
    if model.config.difference:
        m = mu_work.shape[1]
        mu = np.column_stack([anchors[j] + np.cumsum(mu_work[:, j]) for j in range(m)])
        e_hat = np.cumsum(e_work, axis=0)
    else:
        mu = mu_work
        e_hat = e_work
    return HybridForecast(mu=mu, e_hat=e_hat, y_hat=mu + e_hat)


def _predictor_trend(
    model: HybridModel, work: np.ndarray, h: int
) -> tuple[np.ndarray, np.ndarray]:
    """Recursive trend forecast and the in-sample residual history over ``work``."""
    predictor = model.predictor
    W = predictor.config.window
    if len(work) <= W:
        raise ValueError(f"history of {len(work)} rows is too short for window {W}")
    scaled_hist = scale_rows(work, model.endog_scaler)
    mu_scaled = nn.predict_recursive(predictor, scaled_hist[-W:], h)
    mu_work = scale_rows(mu_scaled, model.endog_scaler, "inverse")
    windows = nn.sliding_windows(scaled_hist, W)[:-1]
    mu_hist_scaled, _ = nn.forward(windows, predictor.weights, predictor.config)
    e_hist = work[W:] - scale_rows(mu_hist_scaled, model.endog_scaler, "inverse")
    return mu_work, e_hist


def forecast_hybrid(
    model: HybridModel, h: int, future_exog: np.ndarray | None = None
) -> HybridForecast:
    """h-step decomposed forecast in level units, from the fitting sample's end.

    Variants ``re``/``full`` combine the recursive LSTM trend with the
    statistical residual forecast; variant ``en`` reports its VARMAX forecast
    as the residual part with a zero trend, keeping the container uniform.
    When the model was fitted on first differences, the components are
    inverse-differenced (the trend part carries the level anchor).
    """
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    anchors = tuple(float(v) for v in model.endog_tail[-1]) if model.config.difference else ()
    H_future = None
    if model.embed_dims:
        exog_hist = model.exog_tail[1:] if model.config.difference else model.exog_tail
        H_future = _future_embeddings(model, exog_hist, h, future_exog)
    policy = "require" if H_future is not None else "hold-last"
    fc = vm.forecast(model.varma_fit, h, future_exog=H_future, exog_policy=policy)
    if model.variant == "en":
        return _compose(model, np.zeros_like(fc.values), fc.values, anchors)
    work = np.diff(model.endog_tail, axis=0) if model.config.difference else model.endog_tail
    W = model.predictor.config.window
    mu_scaled = nn.predict_recursive(
        model.predictor, scale_rows(work[-W:], model.endog_scaler), h
    )
    mu_work = scale_rows(mu_scaled, model.endog_scaler, "inverse")
    return _compose(model, mu_work, fc.values, anchors)


def forecast_on_history(
    model: HybridModel,
    h: int,
    endog_hist: np.ndarray,
    exog_hist: np.ndarray | None = None,
    future_exog: np.ndarray | None = None,
) -> HybridForecast:
    """Forecast h steps past the end of a supplied history, without refitting.

    ``endog_hist``/``exog_hist`` are aligned level-unit arrays extending (or
    replaying) the fitting sample; the residual recursion and the trailing
    LSTM windows are reconditioned on them.  Used by rolling-origin
    evaluation.
    """
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    endog_hist = np.asarray(endog_hist, dtype=float)
    if model.config.difference:
        anchors = tuple(float(v) for v in endog_hist[-1])
        work = np.diff(endog_hist, axis=0)
        exog_work = None if exog_hist is None else np.asarray(exog_hist, float)[1:]
    else:
        anchors = ()
        work = endog_hist
        exog_work = None if exog_hist is None else np.asarray(exog_hist, float)

    params = model.varma_fit.params
    H_future = None
    if model.embed_dims:
        H_future = _future_embeddings(model, exog_work, h, future_exog)

    if model.variant == "en":
        if model.embed_dims:
            emb = nn.encode(model.encoder, scale_rows(exog_work, model.exog_scaler))
            H_hist = emb.values[:, list(model.embed_dims)]
            y_work = vm.forecast_values(
                params, work[emb.offset :], H_hist, h,
                exog_policy="require", future_exog=H_future,
            )
        else:
            y_work = vm.forecast_values(params, work, None, h)
        return _compose(model, np.zeros_like(y_work), y_work, anchors)

    mu_work, e_hist = _predictor_trend(model, work, h)
    H_hist = None
    if model.variant == "full" and model.embed_dims:
        emb = nn.encode(model.encoder, scale_rows(exog_work, model.exog_scaler))
        # residuals start at t = W, embeddings at t = W - 1: drop one row
        H_hist = emb.values[1:, list(model.embed_dims)]
    e_work = vm.forecast_values(
        params, e_hist, H_hist, h,
        exog_policy="require" if H_future is not None else "hold-last",
        future_exog=H_future,
    )
    return _compose(model, mu_work, e_work, anchors)
