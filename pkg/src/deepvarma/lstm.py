"""A compact LSTM trained by exact backpropagation through time.

One recurrent layer with the four standard gates and a linear output head,
full-batch Adam updates, and windowed one-step-ahead supervision.  Everything
is plain numpy in double precision: training is deterministic for a fixed
seed, and the analytic gradients are checked against finite differences in the
test suite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .panel import Panel, ScalerParams

__all__ = [
    "LstmConfig",
    "LstmState",
    "AdamState",
    "TrainedLstm",
    "WindowDataset",
    "EmbeddingSequence",
    "WEIGHT_KEYS",
    "init_weights",
    "cell_forward",
    "forward",
    "bptt_gradients",
    "adam_update",
    "windowize",
    "train",
    "predict_recursive",
    "encode",
    "grid_search",
    "default_grid",
]

_GATES = ("f", "i", "o", "c")
WEIGHT_KEYS = tuple(
    [f"{kind}_{g}" for g in _GATES for kind in ("w", "u", "b")] + ["w_y", "b_y"]
)


def sliding_windows(values: np.ndarray, window: int) -> np.ndarray:
    """All trailing windows of a (T, d) array as a (T - window + 1, window, d) view."""
    view = np.lib.stride_tricks.sliding_window_view(values, window, axis=0)
    return view.transpose(0, 2, 1)


@dataclass(frozen=True)
class LstmConfig:
    """Architecture and training settings.

    ``window`` is the number of lagged observations fed per prediction;
    ``candidate_activation`` switches the cell-candidate nonlinearity between
    tanh and relu; ``selection`` picks either the final weights or the
    snapshot with the best validation loss.
    """

    input_dim: int
    hidden_dim: int
    output_dim: int
    window: int = 3
    learning_rate: float = 0.001
    epochs: int = 200
    seed: int = 0
    candidate_activation: str = "tanh"
    selection: str = "final"

    def __post_init__(self):
        for name, v in (
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("output_dim", self.output_dim),
            ("window", self.window),
        ):
            if v < 1:
                raise ValueError(f"{name} must be >= 1, got {v}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.candidate_activation not in ("tanh", "relu"):
            raise ValueError(f"unknown candidate activation {self.candidate_activation!r}")
        if self.selection not in ("final", "best-val"):
            raise ValueError(f"unknown selection {self.selection!r}")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "output_dim": self.output_dim,
            "window": self.window,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "seed": self.seed,
            "candidate_activation": self.candidate_activation,
            "selection": self.selection,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LstmConfig":
        return cls(**doc)


@dataclass(frozen=True)
class LstmState:
    """Hidden and cell vectors (batched: leading axis is the batch)."""

    h: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class AdamState:
    """First/second-moment accumulators and the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, weights: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(w) for k, w in weights.items()},
            v={k: np.zeros_like(w) for k, w in weights.items()},
        )


def init_weights(config: LstmConfig, seed: int | None = None) -> dict[str, np.ndarray]:
    """Uniform initialisation on [-r, r] with r = 1/sqrt(hidden_dim).

    The forget-gate bias is then set to 1.0 so early gradients flow through
    the cell path.  Deterministic for a fixed seed (defaults to config.seed).
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    r = 1.0 / math.sqrt(config.hidden_dim)
    H, D, O = config.hidden_dim, config.input_dim, config.output_dim
    weights: dict[str, np.ndarray] = {}
    for g in _GATES:
        weights[f"w_{g}"] = rng.uniform(-r, r, size=(H, D))
        weights[f"u_{g}"] = rng.uniform(-r, r, size=(H, H))
        weights[f"b_{g}"] = rng.uniform(-r, r, size=H)
    weights["w_y"] = rng.uniform(-r, r, size=(O, H))
    weights["b_y"] = rng.uniform(-r, r, size=O)
    weights["b_f"] = np.ones(H)
    return weights


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def cell_forward(
    x: np.ndarray,
    state: LstmState,
    weights: dict[str, np.ndarray],
    candidate_activation: str = "tanh",
) -> tuple[LstmState, dict[str, np.ndarray]]:
    """One cell step: gates from (x, h), cell update, gated output.

    Returns the new state and a record of every gate activation, which is what
    the backward pass replays.  Accepts a single vector or a batch.
    """
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    h_prev = np.atleast_2d(state.h)
    C_prev = np.atleast_2d(state.C)
    if x.shape[1] != weights["w_f"].shape[1]:
        raise ValueError(
            f"input has dimension {x.shape[1]}, weights expect {weights['w_f'].shape[1]}"
        )
    f = _sigmoid(x @ weights["w_f"].T + h_prev @ weights["u_f"].T + weights["b_f"])
    i = _sigmoid(x @ weights["w_i"].T + h_prev @ weights["u_i"].T + weights["b_i"])
    o = _sigmoid(x @ weights["w_o"].T + h_prev @ weights["u_o"].T + weights["b_o"])
    z_c = x @ weights["w_c"].T + h_prev @ weights["u_c"].T + weights["b_c"]
    ctilde = np.tanh(z_c) if candidate_activation == "tanh" else np.maximum(z_c, 0.0)
    C = f * C_prev + i * ctilde
    h = o * np.tanh(C)
    record = {
        "x": x, "h_prev": h_prev, "C_prev": C_prev,
        "f": f, "i": i, "o": o, "ctilde": ctilde, "C": C, "h": h,
    }
    if squeeze:
        return LstmState(h[0], C[0]), record
    return LstmState(h, C), record


def forward(
    window: np.ndarray,
    weights: dict[str, np.ndarray],
    config: LstmConfig,
) -> tuple[np.ndarray, list[dict[str, np.ndarray]]]:
    """Run one input window through the cell and the linear head.

    ``window`` is (window, input_dim) or batched (batch, window, input_dim);
    the returned trajectory caches every step for exact gradient replay.
    """
    squeeze = window.ndim == 2
    batch = window[None] if squeeze else window
    if batch.shape[1] != config.window:
        raise ValueError(f"window length {batch.shape[1]} != config.window {config.window}")
    B = batch.shape[0]
    state = LstmState(
        h=np.zeros((B, config.hidden_dim)), C=np.zeros((B, config.hidden_dim))
    )
    trajectory = []
    for t in range(config.window):
        state, record = cell_forward(
            batch[:, t, :], state, weights, config.candidate_activation
        )
        trajectory.append(record)
    prediction = state.h @ weights["w_y"].T + weights["b_y"]
    if squeeze:
        return prediction[0], trajectory
    return prediction, trajectory


def bptt_gradients(
    inputs: np.ndarray,
    targets: np.ndarray,
    weights: dict[str, np.ndarray],
    config: LstmConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared loss over the batch and its exact gradients.

    The loss averages squared errors over both the batch and the output
    dimensions; gradients traverse the cached trajectory through all four
    gates and the cell path.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if inputs.ndim != 3 or inputs.shape[0] == 0:
        raise ValueError("batch must be a non-empty (batch, window, input_dim) array")
    prediction, trajectory = forward(inputs, weights, config)
    err = prediction - targets
    loss = float(np.mean(err**2))

    grads = {k: np.zeros_like(w) for k, w in weights.items()}
    d_pred = 2.0 * err / err.size
    grads["w_y"] = d_pred.T @ trajectory[-1]["h"]
    grads["b_y"] = d_pred.sum(axis=0)
    dh = d_pred @ weights["w_y"]
    dC = np.zeros_like(dh)
    for rec in reversed(trajectory):
        tC = np.tanh(rec["C"])
        do = dh * tC
        dC = dC + dh * rec["o"] * (1.0 - tC**2)
        df = dC * rec["C_prev"]
        di = dC * rec["ctilde"]
        dct = dC * rec["i"]
        dz = {
            "f": df * rec["f"] * (1.0 - rec["f"]),
            "i": di * rec["i"] * (1.0 - rec["i"]),
            "o": do * rec["o"] * (1.0 - rec["o"]),
            "c": dct * (1.0 - rec["ctilde"] ** 2)
            if config.candidate_activation == "tanh"
            else dct * (rec["ctilde"] > 0),
        }
        dh = np.zeros_like(dh)
        for g in _GATES:
            grads[f"w_{g}"] += dz[g].T @ rec["x"]
            grads[f"u_{g}"] += dz[g].T @ rec["h_prev"]
            grads[f"b_{g}"] += dz[g].sum(axis=0)
            dh += dz[g] @ weights[f"u_{g}"]
        dC = dC * rec["f"]
    return loss, grads


def adam_update(
    weights: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    learning_rate: float,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam step; returns new weights and state."""
    step = state.step + 1
    bc1 = 1.0 - state.beta1**step
    bc2 = 1.0 - state.beta2**step
    new_w, new_m, new_v = {}, {}, {}
    for k, w in weights.items():
        g = grads[k]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} != weight shape {w.shape} for {k!r}")
        m = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        new_w[k] = w - learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new_m[k] = m
        new_v[k] = v
    return new_w, AdamState(new_m, new_v, step, state.beta1, state.beta2, state.eps)


@dataclass(frozen=True)
class WindowDataset:
    """Supervised pairs: trailing windows of the features, next-step targets.

    ``first_target_index`` is the row of the source panel that the first
    target corresponds to (equal to the window length).
    """

    inputs: np.ndarray
    targets: np.ndarray
    feature_columns: tuple[str, ...]
    target_columns: tuple[str, ...]
    first_target_index: int

    def __len__(self) -> int:
        return self.inputs.shape[0]


def windowize(
    panel: Panel, window: int, target_columns: Sequence[str] | None = None
) -> WindowDataset:
    """Build (window -> next value) pairs; count is T - window."""
    panel.require_complete("windowize")
    T = len(panel)
    if T <= window:
        raise ValueError(f"panel of {T} rows is too short for window {window}")
    targets = tuple(target_columns) if target_columns else panel.columns
    target_vals = panel.select(targets).values
    X = sliding_windows(panel.values, window)[:-1]
    Y = target_vals[window:]
    return WindowDataset(X, Y, panel.columns, targets, window)


@dataclass(frozen=True)
class TrainedLstm:
    """Weights plus the configuration and loss history that produced them."""

    weights: dict[str, np.ndarray]
    config: LstmConfig
    scaler: ScalerParams | None
    train_history: tuple[float, ...]
    val_history: tuple[float, ...]
    best_epoch: int | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "weights": {k: w.tolist() for k, w in self.weights.items()},
            "train_history": list(self.train_history),
            "val_history": list(self.val_history),
            "best_epoch": self.best_epoch,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedLstm":
        return cls(
            weights={k: np.array(w, dtype=float) for k, w in doc["weights"].items()},
            config=LstmConfig.from_dict(doc["config"]),
            scaler=None,
            train_history=tuple(doc.get("train_history", ())),
            val_history=tuple(doc.get("val_history", ())),
            best_epoch=doc.get("best_epoch"),
        )

    @classmethod
    def from_json(cls, text: str) -> "TrainedLstm":
        return cls.from_dict(json.loads(text))


def _dataset_loss(
    ds: WindowDataset, weights: dict[str, np.ndarray], config: LstmConfig
) -> float:
    prediction, _ = forward(ds.inputs, weights, config)
    return float(np.mean((prediction - ds.targets) ** 2))


def train(
    train_set: WindowDataset,
    val_set: WindowDataset | None,
    config: LstmConfig,
    scaler: ScalerParams | None = None,
) -> TrainedLstm:
    """Full-batch Adam for config.epochs; deterministic per seed.

    The training history records the loss at the weights each epoch's gradient
    was taken at; the validation history scores the post-update weights.  With
    ``selection="best-val"`` the returned weights are the snapshot from the
    epoch with the lowest validation loss.
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    weights = init_weights(config)
    adam = AdamState.fresh(weights)
    train_history: list[float] = []
    val_history: list[float] = []
    best_val = math.inf
    best_epoch: int | None = None
    best_weights = weights
    for epoch in range(config.epochs):
        loss, grads = bptt_gradients(train_set.inputs, train_set.targets, weights, config)
        weights, adam = adam_update(weights, grads, adam, config.learning_rate)
        train_history.append(loss)
        if val_set is not None:
            val_loss = _dataset_loss(val_set, weights, config)
            val_history.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                best_weights = weights
    if config.selection == "best-val" and val_set is not None:
        weights = best_weights
    return TrainedLstm(
        weights=weights,
        config=config,
        scaler=scaler,
        train_history=tuple(train_history),
        val_history=tuple(val_history),
        best_epoch=best_epoch,
    )


def predict_recursive(model: TrainedLstm, seed_window: np.ndarray, h: int) -> np.ndarray:
    """Feed each prediction back as the next input, h times (scaled space).

    Requires input_dim == output_dim so predictions can extend the window.
    """
    if h < 1:
        raise ValueError(f"horizon must be >= 1, got {h}")
    config = model.config
    if config.input_dim != config.output_dim:
        raise ValueError(
            "recursive prediction needs input_dim == output_dim, "
            f"got {config.input_dim} != {config.output_dim}"
        )
    window = np.array(seed_window, dtype=float)
    if window.shape != (config.window, config.input_dim):
        raise ValueError(
            f"seed window has shape {window.shape}, "
            f"expected ({config.window}, {config.input_dim})"
        )
    out = np.zeros((h, config.output_dim))
    for j in range(h):
        prediction, _ = forward(window, model.weights, config)
        out[j] = prediction
        window = np.vstack([window[1:], prediction])
    return out


@dataclass(frozen=True)
class EmbeddingSequence:
    """Hidden-state rows H_t, one per position whose trailing window fits.

    ``offset`` is the source-panel row index of the first embedding, so
    row r of ``values`` summarises the window ending at panel row offset + r.
    """

    values: np.ndarray
    offset: int


def encode(model: TrainedLstm, values: np.ndarray) -> EmbeddingSequence:
    """Final hidden state of every trailing window of a (T, d) array."""
    values = np.asarray(values, dtype=float)
    W = model.config.window
    T = values.shape[0]
    if T < W:
        raise ValueError(f"{T} rows is too short for window {W}")
    windows = sliding_windows(values, W)
    state = LstmState(
        h=np.zeros((windows.shape[0], model.config.hidden_dim)),
        C=np.zeros((windows.shape[0], model.config.hidden_dim)),
    )
    for t in range(W):
        state, _ = cell_forward(
            windows[:, t, :], state, model.weights, model.config.candidate_activation
        )
    return EmbeddingSequence(values=state.h, offset=W - 1)


def default_grid(
    input_dim: int,
    output_dim: int,
    window: int = 3,
    seed: int = 0,
    selection: str = "best-val",
) -> list[LstmConfig]:
    """Hidden size x learning rate x epochs grid used by the search."""
    grid = []
    for hidden in (4, 8, 16):
        for lr in (0.01, 0.001):
            for epochs in (200, 500):
                grid.append(
                    LstmConfig(
                        input_dim=input_dim,
                        hidden_dim=hidden,
                        output_dim=output_dim,
                        window=window,
                        learning_rate=lr,
                        epochs=epochs,
                        seed=seed,
                        selection=selection,
                    )
                )
    return grid


def grid_search(
    grid: Sequence[LstmConfig],
    train_set: WindowDataset,
    val_set: WindowDataset,
    jobs: int = 1,
) -> tuple[LstmConfig, TrainedLstm, list[tuple[LstmConfig, float]]]:
    """Train every config, score on validation MSE, return the minimum.

    Ties go to the earlier grid entry; the report lists every candidate's
    validation score in grid order.
    """
    if not grid:
        raise ValueError("grid is empty")

    def eval_one(config: LstmConfig) -> tuple[TrainedLstm, float]:
        model = train(train_set, val_set, config)
        return model, _dataset_loss(val_set, model.weights, config)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(eval_one, grid))
    else:
        results = [eval_one(config) for config in grid]
    report = [(config, score) for config, (_, score) in zip(grid, results)]
    best_idx = 0
    for idx in range(1, len(results)):
        if results[idx][1] < results[best_idx][1]:
            best_idx = idx
    return grid[best_idx], results[best_idx][0], report
