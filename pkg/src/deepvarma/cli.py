"""Command-line front door.

Subcommand grammar::

    deepvarma <stats|adf|fit|forecast|eval|horizon|compare|simulate|plot> [flags] [input.csv]

Exit codes: 0 on success, 1 on a runtime failure (message to stderr), 2 on a
usage error.  All randomness flows from one master seed (``--seed`` or the
``TOOL_SEED`` environment variable) through a named sub-seed derivation, so
adding a component never perturbs another component's stream.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import hybrid as hy
from . import lstm as nn
from . import metrics as mx
from . import varma as vm
from .benchmark import ENDOG_COLUMNS, EXOG_COLUMNS, make_benchmark
from .forecasters import (
    MODEL_CHOICES,
    PROTOCOLS,
    bundle_forecast,
    make_forecaster,
    to_bundle,
)
from .panel import (
    Panel,
    SplitRatios,
    concat_rows,
    descriptive_stats,
    impute_linear,
    load_panel,
    split,
)
from .stationarity import stationarity_report
from .svg import render_svg

__all__ = ["run", "main", "derive_seed", "write_report"]


def derive_seed(master: int, tag: str) -> int:
    """Stable sub-seed for a named component of a run."""
    digest = hashlib.blake2b(f"{master}:{tag}".encode(), digest_size=4).digest()
    return int.from_bytes(digest, "big")


def _default_seed() -> int:
    raw = os.environ.get("TOOL_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"TOOL_SEED must be an integer, got {raw!r}") from None


def _comma_list(text: str | None) -> list[str]:
    if not text:
        return []
    return [part.strip() for part in text.split(",") if part.strip()]


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in _comma_list(text))


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")


def write_report(report, fmt: str, path: str | None) -> None:
    """Serialise a metric/horizon/comparison report as JSON or CSV."""
    if fmt == "json":
        if isinstance(report, mx.MetricReport):
            text = json.dumps(report.to_dict(), indent=2) + "\n"
        elif isinstance(report, dict):
            text = json.dumps(report, indent=2) + "\n"
        else:
            text = report.to_json() + "\n"
    elif fmt == "csv":
        if isinstance(report, mx.MetricReport):
            mape = "" if report.mape is None else repr(report.mape)
            text = (
                "mse,rmse,mae,mape,n\n"
                f"{report.mse!r},{report.rmse!r},{report.mae!r},{mape},{report.n}\n"
            )
        else:
            text = report.to_csv()
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    _write_text(path, text)


def _load_input(path: str, impute: bool = True) -> Panel:
    panel = load_panel(path)
    return impute_linear(panel) if impute else panel


def _parse_ratios(text: str) -> SplitRatios:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"--ratios needs three comma-separated fractions, got {text!r}")
    return SplitRatios(*parts)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _lstm_config_from(
    doc: dict, dim: int, seed: int, args, tag: str, selection: str = "best-val"
) -> nn.LstmConfig:
    """LstmConfig from a config-file section, with flag overrides on top."""
    merged = {
        "input_dim": dim,
        "hidden_dim": 8,
        "output_dim": dim,
        "window": 3,
        "learning_rate": 0.01,
        "epochs": 200,
        "seed": derive_seed(seed, tag),
        "selection": selection,
    }
    merged.update(doc or {})
    merged["input_dim"] = dim
    merged["output_dim"] = dim
    if getattr(args, "window", None) is not None:
        merged["window"] = args.window
    if getattr(args, "hidden", None) is not None:
        merged["hidden_dim"] = args.hidden
    if getattr(args, "epochs", None) is not None:
        merged["epochs"] = args.epochs
    if getattr(args, "learning_rate", None) is not None:
        merged["learning_rate"] = args.learning_rate
    return nn.LstmConfig(**merged)


def _hybrid_config_from(doc: dict, m: int, d: int, seed: int, args) -> hy.HybridConfig:
    predictor = _lstm_config_from(doc.get("predictor", {}), m, seed, args, "predictor")
    encoder = None
    if d > 0:
        encoder = _lstm_config_from(
            doc.get("encoder", {}), d, seed, args, "encoder", selection="final"
        )
    return hy.HybridConfig(
        predictor=predictor,
        encoder=encoder,
        p_range=tuple(doc.get("p_range", (0, 1, 2, 3))),
        q_range=tuple(doc.get("q_range", (0, 1, 2))),
        s_range=tuple(doc.get("s_range", (0, 1))),
        exog_policy=doc.get("exog_policy", "hold-last"),
        intercept=doc.get("intercept"),
        jobs=getattr(args, "jobs", 1),
    )


def _prepare_model_data(args):
    """Shared fit/eval plumbing: panel, column selection, configs, splits."""
    panel = _load_input(args.input)
    endog_cols = _comma_list(args.endog) or [
        c for c in panel.columns if c not in set(_comma_list(args.exog))
    ]
    exog_cols = _comma_list(args.exog)
    overlap = set(endog_cols) & set(exog_cols)
    if overlap:
        raise ValueError(f"endog and exog columns overlap: {sorted(overlap)}")
    endog = panel.select(endog_cols)
    exog = panel.select(exog_cols) if exog_cols else None
    config_doc = _load_config(getattr(args, "config", None))
    seed = args.seed
    lstm_cfg = _lstm_config_from(
        config_doc.get("lstm", {}), endog.n_series, seed, args, "lstm"
    )
    hybrid_cfg = _hybrid_config_from(
        config_doc, endog.n_series, exog.n_series if exog else 0, seed, args
    )
    ratios = _parse_ratios(args.ratios)
    train, val, test = split(endog, ratios)
    return endog, exog, train, val, test, lstm_cfg, hybrid_cfg


def _build_and_fit(args, model_name: str | None = None):
    endog, exog, train, val, test, lstm_cfg, hybrid_cfg = _prepare_model_data(args)
    forecaster = make_forecaster(
        model_name or args.model,
        exog_full=exog,
        protocol=args.protocol,
        lstm_config=lstm_cfg,
        hybrid_config=hybrid_cfg,
        jobs=getattr(args, "jobs", 1),
    )
    forecaster.fit(train, val)
    return forecaster, train, val, test


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_stats(args) -> int:
    panel = _load_input(args.input)
    rows = descriptive_stats(panel)
    if args.format == "json":
        payload = {
            r.name: {
                "n": r.n, "max": r.maximum, "min": r.minimum, "mean": r.mean,
                "std": r.std, "skewness": r.skewness, "kurtosis": r.kurtosis,
            }
            for r in rows
        }
        _write_text(args.out, json.dumps(payload, indent=2) + "\n")
    else:
        lines = ["series,n,max,min,mean,std,skewness,kurtosis"]
        for r in rows:
            skew = "" if r.skewness is None else f"{r.skewness:.4f}"
            kurt = "" if r.kurtosis is None else f"{r.kurtosis:.4f}"
            lines.append(
                f"{r.name},{r.n},{r.maximum:.4f},{r.minimum:.4f},"
                f"{r.mean:.4f},{r.std:.4f},{skew},{kurt}"
            )
        _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_adf(args) -> int:
    panel = _load_input(args.input)
    if args.columns:
        panel = panel.select(_comma_list(args.columns))
    report = stationarity_report(panel, max_lag=args.max_lag)
    _write_text(args.out, report.to_json() + "\n" if args.format == "json" else report.to_csv())
    return 0


def _cmd_fit(args) -> int:
    forecaster, train, val, test = _build_and_fit(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = to_bundle(forecaster)
    (out_dir / "model.json").write_text(
        json.dumps(bundle, indent=2) + "\n", encoding="utf-8"
    )
    report: dict = {
        "model": forecaster.name,
        "protocol": forecaster.protocol,
        "train_rows": len(train),
        "val_rows": len(val),
        "test_rows": len(test),
        "seed": args.seed,
    }
    fitted = getattr(forecaster, "fitted", None) or getattr(
        getattr(forecaster, "model", None), "varma_fit", None
    )
    if isinstance(fitted, vm.FittedVarma):
        report["orders"] = {"p": fitted.spec.p, "q": fitted.spec.q, "s": fitted.spec.s}
        report["log_likelihood"] = fitted.log_likelihood
        report["aic"] = fitted.aic
        report["k_params"] = fitted.k_params
    trained = getattr(forecaster, "model", None)
    if isinstance(trained, nn.TrainedLstm):
        report["final_train_loss"] = trained.train_history[-1]
        if trained.val_history:
            report["best_epoch"] = trained.best_epoch
    (out_dir / "fit_report.json").write_text(
        json.dumps(report, indent=2) + "\n", encoding="utf-8"
    )
    return 0


def _cmd_forecast(args) -> int:
    doc = json.loads(Path(args.model_file).read_text(encoding="utf-8"))
    future_exog = None
    if args.future_exog:
        future_exog = _load_input(args.future_exog).values
    values = bundle_forecast(doc, args.horizon, future_exog=future_exog)
    columns = doc["endog_columns"]
    lines = ["step," + ",".join(columns)]
    for step, row in enumerate(values, start=1):
        lines.append(f"{step}," + ",".join(repr(float(v)) for v in row))
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_eval(args) -> int:
    forecaster, train, val, test = _build_and_fit(args)
    preds = mx.rolling_one_step(forecaster, test)
    payload = {}
    for j, name in enumerate(test.columns):
        payload[name] = mx.metrics(test.values[:, j], preds[:, j]).to_dict()
    payload["(mean)"] = mx.metrics(test.values, preds).to_dict()
    if args.format == "json":
        _write_text(args.out, json.dumps(payload, indent=2) + "\n")
    else:
        lines = ["series,mse,rmse,mae,mape,n"]
        for name, d in payload.items():
            mape = "" if d["mape"] is None else repr(d["mape"])
            lines.append(
                f"{name},{d['mse']!r},{d['rmse']!r},{d['mae']!r},{mape},{d['n']}"
            )
        _write_text(args.out, "\n".join(lines) + "\n")
    if args.plot:
        series = {}
        for j, name in enumerate(test.columns):
            series[f"{name} actual"] = (test.timestamps, test.values[:, j])
            series[f"{name} predicted"] = (test.timestamps, preds[:, j])
        Path(args.plot).write_text(
            render_svg(series, title=f"{forecaster.name}: test-set fit"),
            encoding="utf-8",
        )
    return 0


def _cmd_horizon(args) -> int:
    forecaster, train, val, test = _build_and_fit(args)
    table = mx.horizon_eval(
        forecaster,
        test,
        point_horizons=_int_list(args.horizons),
        cumulative_ranges=_int_list(args.cumulative),
    )
    write_report(table, args.format, args.out)
    return 0


def _cmd_compare(args) -> int:
    endog, exog, train, val, test, lstm_cfg, hybrid_cfg = _prepare_model_data(args)
    names = _comma_list(args.models)
    if not names:
        raise ValueError("--models needs at least one model name")
    models = [
        make_forecaster(
            name,
            exog_full=exog,
            protocol=args.protocol,
            lstm_config=lstm_cfg,
            hybrid_config=hybrid_cfg,
            jobs=getattr(args, "jobs", 1),
        )
        for name in names
    ]
    report = mx.compare(models, train, val, test, protocol=args.protocol)
    write_report(report, args.format, args.out)
    return 0


def _cmd_simulate(args) -> int:
    if args.benchmark:
        endog, exog = make_benchmark(args.seed, T=args.length)
        joined = Panel(
            endog.timestamps,
            endog.columns + exog.columns,
            np.hstack([endog.values, exog.values]),
        )
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            joined.to_csv(fh)
        return 0
    if not args.params:
        raise ValueError("simulate needs --benchmark or --spec <file>")
    doc = json.loads(Path(args.params).read_text(encoding="utf-8"))
    spec_doc = doc["spec"]
    spec = vm.VarmaSpec(
        m=spec_doc["m"],
        p=spec_doc["p"],
        q=spec_doc["q"],
        s=spec_doc.get("s", 0),
        exog_dim=spec_doc.get("exog_dim", 0),
        include_intercept=spec_doc.get("include_intercept", False),
        allow_empty=True,
    )
    pd = doc["params"]
    params = vm.VarmaParams(
        ar=tuple(np.array(A) for A in pd.get("ar", [])),
        ma=tuple(np.array(A) for A in pd.get("ma", [])),
        exog=tuple(np.array(A) for A in pd.get("exog", [])),
        intercept=None if pd.get("intercept") is None else np.array(pd["intercept"]),
        sigma_factor=np.array(pd["sigma_factor"]),
    )
    exog_panel = _load_input(args.exog_input) if args.exog_input else None
    panel = vm.simulate(
        spec,
        params,
        args.length,
        seed=derive_seed(args.seed, "simulate"),
        exog=exog_panel,
        column_names=doc.get("columns"),
    )
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        panel.to_csv(fh)
    return 0


def _cmd_plot(args) -> int:
    panel = _load_input(args.input)
    columns = _comma_list(args.columns) or list(panel.columns)
    series = {name: (panel.timestamps, panel.column(name)) for name in columns}
    svg = render_svg(series, title=args.title or "")
    Path(args.out).write_text(svg, encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_model_flags(p: argparse.ArgumentParser, with_model: bool = True) -> None:
    if with_model:
        p.add_argument("--model", choices=MODEL_CHOICES, default="deepvarma")
    p.add_argument("--endog", help="comma-separated endogenous columns")
    p.add_argument("--exog", help="comma-separated exogenous columns")
    p.add_argument("--protocol", choices=PROTOCOLS, default="non-stationary")
    p.add_argument("--config", help="JSON config file (field names mirror the library configs)")
    p.add_argument("--ratios", default="0.6,0.2,0.2", help="train,val,test fractions")
    p.add_argument("--window", type=int, help="LSTM window override")
    p.add_argument("--hidden", type=int, help="LSTM hidden size override")
    p.add_argument("--epochs", type=int, help="LSTM epochs override")
    p.add_argument("--learning-rate", type=float, help="LSTM learning rate override")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for searches")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepvarma",
        description="Multivariate forecasting: VARMA/VARMAX, LSTM, and hybrid pipelines.",
    )
    parser.add_argument(
        "--seed", type=int, default=None,
        help="master seed (default: TOOL_SEED environment variable, else 0)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kwargs):
        # --seed is accepted both before and after the subcommand; SUPPRESS
        # keeps a post-subcommand omission from clobbering the global value
        sp = sub.add_parser(name, **kwargs)
        sp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        return sp

    p = add_parser("stats", help="descriptive statistics per series")
    p.add_argument("input")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_stats)

    p = add_parser("adf", help="unit-root p-values before/after differencing")
    p.add_argument("input")
    p.add_argument("--columns")
    p.add_argument("--max-lag", type=int, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_adf)

    p = add_parser("fit", help="train a model and write its bundle")
    p.add_argument("input")
    _add_model_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=_cmd_fit)

    p = add_parser("forecast", help="h-step forecasts from a model bundle")
    p.add_argument("--model-file", required=True)
    p.add_argument("--horizon", "--h", type=int, dest="horizon", default=10)
    p.add_argument("--future-exog", help="CSV of future exogenous rows (policy 'require')")
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_forecast)

    p = add_parser("eval", help="test-set metrics for one model")
    p.add_argument("input")
    _add_model_flags(p)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.add_argument("--plot", help="write an actual-vs-predicted SVG here")
    p.set_defaults(handler=_cmd_eval)

    p = add_parser("horizon", help="rolling-origin horizon grid for one model")
    p.add_argument("input")
    _add_model_flags(p)
    p.add_argument("--horizons", default="1,5,10,15")
    p.add_argument("--cumulative", default="5,10,15,20")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_horizon)

    p = add_parser("compare", help="multi-model test-set comparison")
    p.add_argument("input")
    p.add_argument("--models", required=True, help="comma-separated model names")
    _add_model_flags(p, with_model=False)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_compare)

    p = add_parser("simulate", help="generate a synthetic panel CSV")
    p.add_argument("--benchmark", action="store_true", help="emit the bundled benchmark")
    p.add_argument("--spec", dest="params", help="JSON file with a model spec and coefficients")
    p.add_argument("--exog-input", help="CSV of exogenous data for the simulation")
    p.add_argument("--T", "--length", type=int, dest="length", default=750)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_simulate)

    p = add_parser("plot", help="SVG line chart of selected columns")
    p.add_argument("input")
    p.add_argument("--columns")
    p.add_argument("--title")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_plot)

    return parser


def run(argv=None) -> int:
    """Parse and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.seed is None:
        try:
            args.seed = _default_seed()
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    try:
        return args.handler(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
