"""Command-line entry point: ``asotrace <subcommand>``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error (missing
or malformed input), 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path

from . import __version__
from .classifiers import ALGORITHMS, Model, app_dataset, device_dataset, train
from .classifiers.evaluation import SAMPLINGS, cross_validate, format_reports
from .config import APP_LABEL_FIELDS, ConfigError, PipelineConfig, load_config
from .features import read_app_instances, read_device_instances
from .pipeline import (
    EXIT_OK,
    EXIT_STAGE,
    EXIT_USAGE,
    METADATA_FILE,
    REPORT_FEATURES,
    StageError,
    derive_seed,
    extract,
    fingerprint,
    ingest,
    report,
    run_pipeline,
    score_suspiciousness,
    simulate,
    stage_errors,
    upload_records,
    write_evaluation,
    write_instance_files,
)

logger = logging.getLogger("asotrace")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _pair(text: str) -> tuple[Path, Path]:
    parts = [p for p in text.split(",") if p]
    if len(parts) != 2:
        raise UsageError("--out takes two comma-separated paths: app instances, device instances")
    return Path(parts[0]), Path(parts[1])


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> dict:
    cfg = _config(args)
    with stage_errors("simulate"):
        return simulate(cfg.fleet_config(), cfg.faults.schedule(), args.out)


def cmd_serve(args) -> dict:
    from .server import start, stop

    try:
        server, thread = start(args.store, args.host, args.port)
    except OSError as exc:
        raise StageError("serve", f"cannot bind {args.host}:{args.port}: {exc}", EXIT_STAGE) from None
    print(f"serving {server.url} -> {args.store}", flush=True)
    done = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: done.set())
    try:
        while not done.wait(0.5):
            pass
    finally:
        stop(server, thread)
    return {"records": len(server.store), "chunks": server.store.chunk_count}


def cmd_ingest(args) -> dict:
    cfg = _config(args)
    if (args.store is None) == (args.url is None):
        raise UsageError("ingest needs exactly one of --store or --url")
    with stage_errors("ingest"):
        if args.url:
            from .server import HttpTransport
            return upload_records(args.inp, HttpTransport(args.url))
        return ingest(args.inp, args.store, cfg.faults.transport(), cfg.seed)


def cmd_fingerprint(args) -> dict:
    out = Path(args.out)
    with stage_errors("fingerprint"):
        return fingerprint(args.inp, out.parent, out)


def cmd_extract(args) -> dict:
    cfg = _config(args)
    app_out, device_out = _pair(args.out)
    devices = Path(args.devices)
    records = Path(args.records) if args.records else devices.parent
    metadata = Path(args.metadata) if args.metadata else Path(args.reviews).parent / METADATA_FILE
    with stage_errors("extract"):
        return extract(devices, records, args.reviews, metadata, app_out, device_out, args.ground_truth,
                       args.app_model, cfg.labels, cfg.seed)


def _scored_devices(args):
    devices = read_device_instances(args.inp)
    if args.app_model:
        if not args.apps:
            raise UsageError("--app-model needs --apps (app instances of the same devices)")
        devices = score_suspiciousness(read_app_instances(args.apps), devices, Model.load(args.app_model))
    return devices


def cmd_train(args) -> dict:
    cfg = _config(args)
    c = cfg.classifiers
    algo = args.algo or c.model_algo
    missing = args.missing_indicators or c.missing_indicators
    with stage_errors("train"):
        if args.kind == "app":
            data = app_dataset(read_app_instances(args.inp), args.labels)
            model = train(algo, data, c.params_for(algo), derive_seed(cfg.seed, 1), missing)
        else:
            devices = _scored_devices(args)
            if args.scored_out:
                write_instance_files(args.scored_out, devices, "device")
            data = device_dataset(devices)
            model = train(algo, data, c.params_for(algo), derive_seed(cfg.seed, 2), missing)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        model.save(args.out)
        summary = {"kind": args.kind, "algo": algo, "instances": len(data)}
        if algo == "random_forest":
            summary["top_features"] = [name for name, _ in model.feature_importances()[:5]]
        return summary


def cmd_evaluate(args) -> dict:
    cfg = _config(args)
    c = cfg.classifiers
    algos = args.algo or c.algorithms
    samplings = args.sampling or (c.app_sampling if args.kind == "app" else c.device_sampling)
    folds = args.folds or c.folds
    repeats = args.repeats or c.repeats
    reports = []
    with stage_errors("evaluate"):
        if args.kind == "app":
            data, name = app_dataset(read_app_instances(args.inp), args.labels), f"apps/{args.labels}"
        else:
            data, name = device_dataset(_scored_devices(args)), "devices"
        for algo in algos:
            for sampling in samplings:
                reports.append(cross_validate(algo, data, folds, repeats, sampling, cfg.seed, c.params_for(algo),
                                              c.missing_indicators, name))
        write_evaluation(args.out, reports)
    sys.stdout.write(format_reports(reports))
    return {"reports": len(reports)}


def cmd_report(args) -> dict:
    features = [f for f in args.features.split(",") if f] if args.features else list(REPORT_FEATURES)
    with stage_errors("report"):
        summary = report(args.inp, args.out, args.group, features, args.table)
    if args.table:
        sys.stdout.write(Path(args.table).read_text(encoding="utf-8"))
    return summary


def cmd_pipeline(args) -> dict:
    cfg = _config(args)
    result = run_pipeline(cfg)
    for rep in result["evaluation"].values():
        sys.stdout.write(format_reports(rep))
    return {"manifest": str(cfg.paths.resolve("manifest"))}


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="asotrace", description="Simulate, ingest and classify ASO worker device telemetry.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress of every stage")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, fn, help_text: str, config: bool = True) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(fn=fn)
        if config:
            sp.add_argument("--config", help="TOML config file (defaults when omitted)")
            sp.add_argument("--seed", type=int, help="override the config seed")
        return sp

    sp = add("simulate", cmd_simulate, "Generate a labelled fleet and write its record files.")
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("serve", cmd_serve, "Run the HTTP ingestion endpoint until SIGINT/SIGTERM.", config=False)
    sp.add_argument("--store", required=True, help="store directory (chunk log and canonical files)")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8080)

    sp = add("ingest", cmd_ingest, "Upload simulated record files through the chunk protocol.")
    sp.add_argument("--in", dest="inp", required=True, help="directory with {slow,fast}.install.jsonl")
    sp.add_argument("--store", help="local store directory (in-process transport, config fault rates)")
    sp.add_argument("--url", help="upload URL of a running 'serve'")

    sp = add("fingerprint", cmd_fingerprint, "Resolve installs to devices.", config=False)
    sp.add_argument("--in", dest="inp", required=True, help="store directory")
    sp.add_argument("--out", required=True, help="devices.jsonl; device record files go next to it")

    sp = add("extract", cmd_extract, "Extract app and device feature instances.")
    sp.add_argument("--devices", required=True, help="devices.jsonl from fingerprint")
    sp.add_argument("--records", help="directory of {slow,fast}.device.jsonl (default: next to --devices)")
    sp.add_argument("--reviews", required=True, help="reviews.jsonl")
    sp.add_argument("--metadata", help="metadata.jsonl (default: next to --reviews)")
    sp.add_argument("--ground-truth", help="ground_truth.jsonl; adds labels and rule labels")
    sp.add_argument("--app-model", help="app model used to fill device suspiciousness")
    sp.add_argument("--out", required=True, help="APP.jsonl,DEVICE.jsonl (CSV copies are written alongside)")

    sp = add("train", cmd_train, "Train an app or device model.")
    sp.add_argument("--kind", choices=("app", "device"), required=True)
    sp.add_argument("--in", dest="inp", required=True, help="instances JSONL")
    sp.add_argument("--labels", choices=APP_LABEL_FIELDS, default="rule_label", help="app label source")
    sp.add_argument("--algo", choices=sorted(ALGORITHMS))
    sp.add_argument("--app-model", help="device kind: score suspiciousness with this app model first")
    sp.add_argument("--apps", help="device kind: app instances used with --app-model")
    sp.add_argument("--scored-out", help="device kind: also write the scored device instances")
    sp.add_argument("--missing-indicators", action="store_true", help="add missing-value indicator columns")
    sp.add_argument("--out", required=True, help="model file (.zip)")

    sp = add("evaluate", cmd_evaluate, "Repeated stratified k-fold cross-validation.")
    sp.add_argument("--kind", choices=("app", "device"), required=True)
    sp.add_argument("--in", dest="inp", required=True, help="instances JSONL")
    sp.add_argument("--labels", choices=APP_LABEL_FIELDS, default="label", help="app label source")
    sp.add_argument("--algo", choices=sorted(ALGORITHMS), action="append")
    sp.add_argument("--sampling", choices=SAMPLINGS, action="append")
    sp.add_argument("--folds", type=int)
    sp.add_argument("--repeats", type=int)
    sp.add_argument("--app-model", help="device kind: score suspiciousness with this app model first")
    sp.add_argument("--apps", help="device kind: app instances used with --app-model")
    sp.add_argument("--out", required=True, help="output prefix for .json/.csv/.txt")

    sp = add("report", cmd_report, "Compare device features between groups.", config=False)
    sp.add_argument("--in", dest="inp", required=True, help="device instances JSONL")
    sp.add_argument("--group", default="label", help="grouping column (label or profile)")
    sp.add_argument("--features", help="comma-separated columns (default: all device features)")
    sp.add_argument("--out", required=True, help="report CSV")
    sp.add_argument("--table", help="also write the human-readable table here")

    add("pipeline", cmd_pipeline, "Run every stage and write manifest.json.")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        summary = args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
