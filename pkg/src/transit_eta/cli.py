"""Command-line entry points tying the pipeline together.

Subcommands: ingest, analyze, train, evaluate, compare-svr, predict, serve,
synth. Each reads an optional config file plus flag overrides, writes its
reports under --out-dir, and exits non-zero on any error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from .config import load_config
from .errors import TransitEtaError
from .features import FeaturePipeline, split
from .ingest import (
    AT_STOP_TOKEN,
    DEFAULT_COLUMNS,
    DEFAULT_OUTBOUND_TOKEN,
    DEFAULT_TIMESTAMP_FORMAT,
    clean,
    parse_csv,
    passes_filters,
    serialize_csv,
)
from .metrics import delay_stats, per_line_report
from .model_store import ModelBundle, load, save
from .neuralnet import NeuralNetRegressor, complexity_report, predict, predict_batch
from .scalability import DEFAULT_SVR_TIME_BUDGET_S, scalability_experiment
from .server import RequestProblem, predict_trip, serve
from .svr import SvrConfig
from .synth import SynthConfig, generate

MODEL_ENV_VAR = "TRANSIT_ETA_MODEL"

logger = logging.getLogger(__name__)


class CliError(TransitEtaError):
    pass


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML-like config file")
    parser.add_argument("--out-dir", default=".", help="directory for reports and artifacts")
    parser.add_argument("-v", "--verbose", action="count", default=0)


def _setup_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _load_cfg(args) -> dict:
    if getattr(args, "config", None):
        return load_config(args.config)
    return {}


def _ingest_settings(args, cfg: dict) -> dict:
    ingest_cfg = cfg.get("ingest", {})
    columns = dict(DEFAULT_COLUMNS)
    columns.update(cfg.get("columns", {}))
    return {
        "columns": columns,
        "timestamp_format": getattr(args, "timestamp_format", None)
        or ingest_cfg.get("timestamp_format", DEFAULT_TIMESTAMP_FORMAT),
        "outbound_token": getattr(args, "outbound_token", None)
        or ingest_cfg.get("outbound_token", DEFAULT_OUTBOUND_TOKEN),
        "at_stop_token": ingest_cfg.get("at_stop_token", AT_STOP_TOKEN),
    }


def _open_input(path: str):
    if path == "-":
        return sys.stdin
    return open(path, "r", encoding="utf-8", newline="")


def _read_and_clean(args, cfg):
    settings = _ingest_settings(args, cfg)
    stream = _open_input(args.input)
    try:
        raw, errors = parse_csv(
            stream, columns=settings["columns"],
            timestamp_format=settings["timestamp_format"],
        )
    finally:
        if stream is not sys.stdin:
            stream.close()
    if errors:
        logger.warning("%d rows failed to parse", len(errors))
    cleaned, stats = clean(
        raw, outbound_token=settings["outbound_token"],
        at_stop_token=settings["at_stop_token"],
    )
    return raw, cleaned, stats, errors, settings


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _model_path(args) -> str:
    path = getattr(args, "model", None) or os.environ.get(MODEL_ENV_VAR)
    if not path:
        raise CliError(
            f"no model bundle given: pass --model or set {MODEL_ENV_VAR}"
        )
    return path


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        num_lines=args.lines,
        stops_per_line=args.stops_per_line,
        records_per_line=args.records_per_line,
        base_speed=args.base_speed,
        rush_hour_slowdown=args.rush_slowdown,
        weekend_speedup=args.weekend_speedup,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    records = generate(cfg)
    if args.out == "-":
        serialize_csv(records, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            serialize_csv(records, fh)
    logger.info("wrote %d synthetic records", len(records))
    return 0


def cmd_ingest(args) -> int:
    cfg = _load_cfg(args)
    raw, _, stats, errors, settings = _read_and_clean(args, cfg)
    out_dir = _out_dir(args)
    surviving = [
        r for r in raw
        if passes_filters(r, settings["outbound_token"], settings["at_stop_token"])
    ]
    out_path = Path(args.out) if args.out else out_dir / "cleaned.csv"
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        serialize_csv(surviving, fh, columns=settings["columns"],
                      timestamp_format=settings["timestamp_format"])
    report = {
        "cleaning": stats.to_dict(),
        "parse_errors": [{"row": e.row, "message": e.message} for e in errors[:100]],
        "parse_error_count": len(errors),
    }
    _write_json(out_dir / "cleaning_stats.json", report)
    print(json.dumps(report["cleaning"]), file=sys.stderr)
    return 0


def cmd_analyze(args) -> int:
    cfg = _load_cfg(args)
    _, cleaned, stats, errors, _ = _read_and_clean(args, cfg)
    delays = delay_stats(cleaned)
    report = {
        "cleaning": stats.to_dict(),
        "parse_error_count": len(errors),
        "delay": delays.to_dict(),
    }
    out_dir = _out_dir(args)
    _write_json(out_dir / "analysis.json", report)
    print(json.dumps(report, indent=2))
    return 0


def _data_fingerprint(train, val) -> str:
    digest = hashlib.blake2b(digest_size=16)
    for ds in (train, val):
        digest.update(repr(ds.X.shape).encode())
        digest.update(ds.y.tobytes())
    return digest.hexdigest()


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    _, cleaned, stats, _, _ = _read_and_clean(args, cfg)
    if len(cleaned) < 2:
        raise CliError(f"not enough cleaned records to train: {len(cleaned)}")
    train_recs, val_recs = split(cleaned, args.ratio, args.seed)
    pipeline = FeaturePipeline().fit(train_recs)
    train_ds = pipeline.make_dataset(train_recs)
    val_ds = pipeline.make_dataset(val_recs)

    estimator = NeuralNetRegressor(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        optimizer=args.optimizer,
        seed=args.seed,
        patience=args.patience,
    )
    estimator.fit(train_ds.X, train_ds.y, validation_data=(val_ds.X, val_ds.y))
    log = estimator.log_

    out_dir = _out_dir(args)
    model_path = Path(args.model_out) if args.model_out else out_dir / "model.teta"
    metadata = {
        "train_config": {
            "learning_rate": args.learning_rate,
            "batch_size": args.batch_size,
            "epochs": args.epochs,
            "optimizer": args.optimizer,
            "seed": args.seed,
            "split_ratio": args.ratio,
        },
        "best_epoch": log.best_epoch,
        "best_val_rmse": log.best_val_rmse,
        "final_train_rmse": log.epochs[-1].train_rmse if log.epochs else None,
        "data_fingerprint": _data_fingerprint(train_ds, val_ds),
        "train_samples": len(train_ds),
        "validation_samples": len(val_ds),
    }
    bundle = ModelBundle(network=estimator.network_, pipeline=pipeline, metadata=metadata)
    save(bundle, model_path)
    pipeline.save_json(model_path.with_suffix(".preprocessor.json"))
    log.write_ldjson(out_dir / "training_log.ndjson")
    _write_json(
        out_dir / "train_report.json",
        {
            "model_path": str(model_path),
            "cleaning": stats.to_dict(),
            "metadata": metadata,
            "complexity": complexity_report(estimator.network_),
        },
    )
    logger.info("best val RMSE %.3f s at epoch %d", log.best_val_rmse, log.best_epoch)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    bundle = load(_model_path(args))
    _, cleaned, _, _, _ = _read_and_clean(args, cfg)
    if not cleaned:
        raise CliError("no cleaned records to evaluate")
    dataset = bundle.pipeline.make_dataset(cleaned)
    delays = delay_stats(cleaned)
    report = per_line_report(
        lambda X: predict(bundle.network, X), dataset, bundle.pipeline.line_vocab_,
        delay=delays,
    )
    _, latency = predict_batch(bundle.network, dataset.X)
    payload = report.to_dict()
    if latency is not None:
        payload["latency_ms_per_sample"] = latency.mean_ms_per_sample
    out_dir = _out_dir(args)
    _write_json(out_dir / "eval_report.json", payload)
    if args.csv:
        with open(out_dir / "per_line_rmse.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("line,rmse,n\n")
            for name, line_rmse, n in report.to_csv_rows():
                fh.write(f"{name},{line_rmse:.6f},{n}\n")
    if args.plot_data:
        (out_dir / "per_line_rmse.dat").write_text(report.to_plot_data(), encoding="utf-8")
    print(json.dumps({"overall_rmse": report.overall_rmse,
                      "sample_count": report.sample_count}))
    return 0


def cmd_compare_svr(args) -> int:
    cfg = _load_cfg(args)
    _, cleaned, _, _, _ = _read_and_clean(args, cfg)
    line_counts = [int(tok) for tok in args.line_counts.split(",") if tok.strip()]
    if not line_counts:
        raise CliError("--line-counts must name at least one count")
    table = scalability_experiment(
        cleaned,
        line_counts,
        fcnn_params={
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "learning_rate": args.learning_rate,
            "seed": args.seed,
        },
        svr_cfg=SvrConfig(C=args.svr_c, epsilon=args.svr_epsilon,
                          gamma=args.svr_gamma, tol=args.svr_tol),
        ratio=args.ratio,
        seed=args.seed,
        svr_time_budget_s=args.svr_time_budget,
    )
    out_dir = _out_dir(args)
    with open(out_dir / "comparison.csv", "w", encoding="utf-8", newline="") as fh:
        table.write_csv(fh)
    _write_json(out_dir / "comparison.json", table.to_json())
    print(json.dumps(table.to_json(), indent=2))
    return 0


def cmd_predict(args) -> int:
    bundle = load(_model_path(args))
    try:
        from datetime import datetime

        timestamp = datetime.fromisoformat(args.timestamp)
    except ValueError:
        raise CliError(f"unparseable timestamp: {args.timestamp!r}") from None
    try:
        response = predict_trip(bundle, args.line, args.stop, args.distance, timestamp)
    except RequestProblem as problem:
        raise CliError(json.dumps(problem.payload)) from None
    print(json.dumps(response))
    return 0


def cmd_serve(args) -> int:
    bundle = load(_model_path(args))
    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        raise CliError(f"--bind must look like HOST:PORT, got {args.bind!r}")
    serve(bundle, host=host, port=int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transit-eta",
        description="Bus arrival-time prediction pipeline and service",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic bus-record CSV")
    _add_common(p)
    p.add_argument("--lines", type=int, default=10)
    p.add_argument("--stops-per-line", type=int, default=20)
    p.add_argument("--records-per-line", type=int, default=1000)
    p.add_argument("--base-speed", type=float, default=8.0)
    p.add_argument("--rush-slowdown", type=float, default=1.5)
    p.add_argument("--weekend-speedup", type=float, default=1.2)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output CSV path, '-' for stdout")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse and clean a bus-record CSV")
    _add_common(p)
    p.add_argument("input", nargs="?", default="-")
    p.add_argument("--out", help="cleaned CSV path (default OUT_DIR/cleaned.csv)")
    p.add_argument("--timestamp-format")
    p.add_argument("--outbound-token")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="cleaning and schedule-delay analytics")
    _add_common(p)
    p.add_argument("input", nargs="?", default="-")
    p.add_argument("--timestamp-format")
    p.add_argument("--outbound-token")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="train the network and save a model bundle")
    _add_common(p)
    p.add_argument("input", nargs="?", default="-")
    p.add_argument("--timestamp-format")
    p.add_argument("--outbound-token")
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--learning-rate", type=float, default=1e-2)
    p.add_argument("--optimizer", choices=("sgd", "sgd_momentum", "adam"), default="adam")
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--model-out", help="bundle path (default OUT_DIR/model.teta)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="per-line accuracy report for a saved model")
    _add_common(p)
    p.add_argument("input", nargs="?", default="-")
    p.add_argument("--timestamp-format")
    p.add_argument("--outbound-token")
    p.add_argument("--model", help=f"bundle path (default ${MODEL_ENV_VAR})")
    p.add_argument("--csv", action="store_true", help="also write per-line CSV")
    p.add_argument("--plot-data", action="store_true",
                   help="also write gnuplot-ready columns")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare-svr", help="network-vs-SVR scaling experiment")
    _add_common(p)
    p.add_argument("input", nargs="?", default="-")
    p.add_argument("--timestamp-format")
    p.add_argument("--outbound-token")
    p.add_argument("--line-counts", default="5,10,20")
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=1e-2)
    p.add_argument("--svr-c", type=float, default=100.0)
    p.add_argument("--svr-epsilon", type=float, default=5.0)
    p.add_argument("--svr-gamma", type=float, default=None)
    p.add_argument("--svr-tol", type=float, default=1e-3)
    p.add_argument("--svr-time-budget", type=float, default=DEFAULT_SVR_TIME_BUDGET_S)
    p.set_defaults(func=cmd_compare_svr)

    p = sub.add_parser("predict", help="one-off prediction from a saved model")
    _add_common(p)
    p.add_argument("--model", help=f"bundle path (default ${MODEL_ENV_VAR})")
    p.add_argument("--line", required=True)
    p.add_argument("--stop", required=True)
    p.add_argument("--distance", type=float, required=True)
    p.add_argument("--timestamp", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("serve", help="run the HTTP prediction service")
    _add_common(p)
    p.add_argument("--model", help=f"bundle path (default ${MODEL_ENV_VAR})")
    p.add_argument("--bind", default="127.0.0.1:8340")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except TransitEtaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
