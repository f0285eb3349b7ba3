"""Pipeline stages, their on-disk artifacts and the run manifest.

Each stage reads only persisted files and writes into its own directory, so
any stage can be re-run from the outputs of the previous one:

    simulate     -> sim/      {slow,fast}.install.jsonl, reviews, metadata, ground truth
    ingest       -> store/    chunks.log and the canonical {slow,fast}.install.jsonl
    fingerprint  -> devices/  devices.jsonl, {slow,fast}.device.jsonl
    extract      -> features/ app and device instances (JSONL + CSV)
    train        -> models/   app and device models; features/ scored device instances
    evaluate     -> reports/  cross-validation reports
    report       -> reports/  group comparison of device features
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from itertools import groupby
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import __version__
from .classifiers import Model, app_dataset, cross_validate, device_dataset, train
from .classifiers.dataset import unlabeled_matrix
from .classifiers.evaluation import ModelReport, format_reports, write_reports_csv
from .config import LabelConfig, PipelineConfig
from .features import (
    DEVICE_FEATURES,
    REGULAR,
    WORKER,
    AppUsageInstance,
    DeviceUsageInstance,
    DeviceView,
    InsufficientDataError,
    ReviewIndex,
    apply_label_rule,
    extract_device_app_features,
    extract_device_features,
    read_app_instances,
    read_device_instances,
    write_csv,
    write_instances,
)
from .fingerprint import coalesce, group_candidates, iter_device_streams, write_devices
from .protocol import (
    DeviceClient,
    FaultRates,
    FaultyTransport,
    InProcessTransport,
    IngestServer,
    ProtocolError,
    Transport,
)
from .records import (
    AppMetadata,
    MalformedRecordError,
    ReviewRecord,
    check_ids,
    iter_records,
    record_file_name,
    serialize_record,
    write_records,
)
from .simulator import FaultSchedule, FleetConfig, generate_fleet, inject_faults, render_device
from .stats import compare_report, format_table, write_report_csv
from .store import CHUNK_LOG, SnapshotStore

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STAGE = 0, 1, 2, 3

STAGES = ("simulate", "ingest", "fingerprint", "extract", "train", "evaluate", "report")
STAGE_VERSIONS = dict.fromkeys(STAGES, 1)
MANIFEST_FORMAT = "asotrace-manifest"
MANIFEST_VERSION = 1
DIGEST_ALGORITHM = "sha256"

REVIEWS_FILE = "reviews.jsonl"
METADATA_FILE = "metadata.jsonl"
GROUND_TRUTH_FILE = "ground_truth.jsonl"
DEVICES_FILE = "devices.jsonl"
APP_INSTANCES = "app_instances"
DEVICE_INSTANCES = "device_instances"
SCORED_DEVICE_INSTANCES = "scored_device_instances"
APP_MODEL = "app_model.zip"
DEVICE_MODEL = "device_model.zip"
APP_EVALUATION = "app_evaluation"
DEVICE_EVALUATION = "device_evaluation"
STATS_REPORT = "stats"
INSTALLED_APPS = "installed_apps"  # derived: preinstalled + user-installed inventory
REPORT_FEATURES = (*DEVICE_FEATURES, INSTALLED_APPS)
UPLOAD_ROUNDS = 100


class StageError(Exception):
    def __init__(self, stage: str, message: str, code: int = EXIT_STAGE):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.code = code


@contextmanager
def stage_errors(stage: str) -> Iterator[None]:
    """Re-raise failures as StageError: bad or missing input is a data error (2), the rest a stage failure (3)."""
    try:
        yield
    except StageError:
        raise
    except FileNotFoundError as exc:
        raise StageError(stage, f"missing input: {exc.filename or exc}", EXIT_DATA) from exc
    except (ValueError, KeyError, ProtocolError) as exc:
        raise StageError(stage, str(exc), EXIT_DATA) from exc
    except Exception as exc:
        raise StageError(stage, f"{type(exc).__name__}: {exc}", EXIT_STAGE) from exc


def derive_seed(seed: int, *salt: int) -> int:
    return int(np.random.default_rng([seed, *salt]).integers(0, 2**63))


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(2, "No such file or directory", str(path))
    return path


def _read_kind(path: Path, cls) -> list:
    out = []
    for rec in iter_records(_require(path)):
        if not isinstance(rec, cls):
            raise ValueError(f"{path}: unexpected {rec.kind} record")
        out.append(rec)
    return out


def read_reviews(path: str | Path) -> list[ReviewRecord]:
    return _read_kind(Path(path), ReviewRecord)


def read_metadata(path: str | Path) -> dict[str, AppMetadata]:
    return {m.app_id: m for m in _read_kind(Path(path), AppMetadata)}


# ---------------------------------------------------------------------------
# simulate


def simulate(config: FleetConfig, schedule: FaultSchedule, out_dir: str | Path) -> dict:
    """Plan the fleet, apply device-level faults and write every record file.

    Devices are rendered one at a time, so memory holds a single device.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fleet = generate_fleet(config)
    plans = inject_faults(fleet.plans, schedule, config.seed)
    paths = {k: out / record_file_name(k, "install") for k in ("slow", "fast")}
    counts = {"slow": 0, "fast": 0}
    handles = {k: open(p, "w", encoding="utf-8", newline="\n") for k, p in paths.items()}
    try:
        for plan in plans:
            for recs in render_device(plan, fleet.catalog, config).values():
                for rec in recs:
                    handles[rec.kind].write(serialize_record(rec) + "\n")
                    counts[rec.kind] += 1
    finally:
        for fh in handles.values():
            fh.close()
    reviews = sorted((r for p in plans for r in p.reviews), key=lambda r: (r.review_time, r.account_name, r.app_id))
    write_records(out / REVIEWS_FILE, reviews)
    write_records(out / METADATA_FILE, fleet.metadata())
    with open(out / GROUND_TRUTH_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for plan in plans:
            fh.write(json.dumps(plan.ground_truth(), sort_keys=True, separators=(",", ":")) + "\n")
    return {"devices": len(plans), "installs": sum(len(p.installs) for p in plans),
            "slow_records": counts["slow"], "fast_records": counts["fast"], "reviews": len(reviews)}


# ---------------------------------------------------------------------------
# ingest


def _drain(client: DeviceClient, transport: Transport, rounds: int) -> None:
    for _ in range(rounds):
        if not client.pending:
            return
        client.sync(transport)
    if client.pending:
        raise ProtocolError(f"install {client.install_id}: {len(client.pending)} chunks undelivered "
                            f"after {rounds} rounds")


def _record_lines(path: Path, kind: str) -> Iterator[tuple[str, str, bytes]]:
    """``(install_id, participant_id, line)`` for each record line of ``path``.

    Only the envelope is checked here; the server parses and validates every
    record it receives and rejects damaged chunks.
    """
    with open(path, "rb") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except ValueError:
                raise MalformedRecordError("line", f"{path}:{lineno}: not valid JSON") from None
            if not isinstance(obj, dict) or obj.get("kind") != kind:
                raise ValueError(f"{path}:{lineno}: expected a {kind} record")
            try:
                check_ids(obj.get("install_id"), obj.get("participant_id"))
            except MalformedRecordError as exc:
                raise MalformedRecordError(exc.field, f"{path}:{lineno}: {exc}") from None
            yield obj["install_id"], obj["participant_id"], line + b"\n"


def upload_records(sim_dir: str | Path, transport: Transport, rounds: int = UPLOAD_ROUNDS) -> dict:
    """Replay the simulated record files through per-install collector clients.

    Each install's buffer of one kind is flushed when its records in that file
    end; every install is drained before the next starts. Lines are buffered
    as read, so record files are expected in canonical form.
    """
    clients: dict[str, DeviceClient] = {}
    n_records = 0
    for kind in ("slow", "fast"):
        path = _require(Path(sim_dir) / record_file_name(kind, "install"))
        for install_id, lines in groupby(_record_lines(path, kind), key=lambda t: t[0]):
            client = None
            for _, participant_id, line in lines:
                if client is None:
                    client = clients.get(install_id)
                    if client is None:
                        client = clients[install_id] = DeviceClient(install_id, participant_id)
                chunk = client.buffers[kind].append_bytes(line)
                if chunk is not None:
                    client.pending.append(chunk)
                n_records += 1
                if len(client.pending) >= 4:
                    client.sync(transport)
            chunk = client.buffers[kind].rotate()
            if chunk is not None:
                client.pending.append(chunk)
            _drain(client, transport, rounds)
    return {"installs": len(clients), "records": n_records}


def ingest(sim_dir: str | Path, store_dir: str | Path, rates: FaultRates | None = None, seed: int = 0,
           fresh: bool = False) -> dict:
    """Upload simulated streams into a store directory through the chunk protocol.

    ``rates`` wraps the in-process transport in a seeded fault injector. An
    existing store is extended (duplicate chunks are ignored) unless
    ``fresh`` truncates its chunk log first.
    """
    store_dir = Path(store_dir)
    store_dir.mkdir(parents=True, exist_ok=True)
    if fresh and (store_dir / CHUNK_LOG).exists():
        (store_dir / CHUNK_LOG).unlink()
    with SnapshotStore(store_dir) as store:
        transport: Transport = InProcessTransport(IngestServer(store))
        faulty = None
        if rates is not None and any(v > 0 for v in vars(rates).values()):
            transport = faulty = FaultyTransport(transport, rates, derive_seed(seed, 0x1A6E))
        summary = upload_records(sim_dir, transport)
        store.write_canonical(store_dir)
        summary.update(stored_records=len(store), chunks=store.chunk_count,
                       injected_faults=len(faulty.log) if faulty else 0)
    return summary


def open_store(store_dir: str | Path) -> SnapshotStore:
    """A read-only view of a store directory: its chunk log if present, else canonical files."""
    store_dir = Path(store_dir)
    if (store_dir / CHUNK_LOG).exists():
        store = SnapshotStore(store_dir)
        store.close()
        return store
    return SnapshotStore.load_canonical(_require(store_dir))


# ---------------------------------------------------------------------------
# fingerprint


def fingerprint(store_dir: str | Path, out_dir: str | Path, devices_path: str | Path | None = None) -> dict:
    store = open_store(store_dir)
    devices = coalesce(group_candidates(store))
    write_devices(devices, store, out_dir, devices_path)
    return {"installs": len(store.install_ids()), "devices": len(devices),
            "ambiguous": sum(d.ambiguous for d in devices),
            "merged": sum(len(d.member_installs) > 1 for d in devices)}


# ---------------------------------------------------------------------------
# extract


@dataclass
class GroundTruth:
    devices: dict[str, dict]
    owner: dict[str, str] = field(default_factory=dict)  # install_id -> true device id

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        devices = {}
        with open(_require(Path(path)), encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entry = json.loads(line)
                    devices[entry["device_id"]] = entry
        owner = {i["install_id"]: d for d, e in devices.items() for i in e["installs"]}
        return cls(devices, owner)

    def lookup(self, member_installs: Sequence[str]) -> dict | None:
        """The true device behind a resolved device, or None when members disagree."""
        owners = {self.owner.get(i) for i in member_installs}
        if len(owners) != 1 or None in owners:
            return None
        return self.devices[owners.pop()]


def choose_label_sources(devices: Sequence[DeviceUsageInstance], labels: LabelConfig, seed: int) -> set[str]:
    """Seeded sample of worker and regular devices whose apps receive rule labels."""
    rng = np.random.default_rng([seed, 0x1ABE1])
    out: set[str] = set()
    for cls, share in ((WORKER, labels.worker_source_share), (REGULAR, labels.regular_source_share)):
        ids = sorted(d.device_id for d in devices if d.label == cls)
        n = int(round(share * len(ids)))
        out.update(rng.choice(ids, n, replace=False).tolist() if n else [])
    return out


def app_flagger(model: Model):
    """Adapter from an app model to the device extractor's classifier hook."""
    def flag(instances: Sequence[AppUsageInstance]) -> list[int]:
        return model.predict(unlabeled_matrix(list(instances), model.feature_names)).tolist()
    return flag


def extract(devices_path: str | Path, records_dir: str | Path, reviews_path: str | Path,
            metadata_path: str | Path, app_out: str | Path, device_out: str | Path,
            ground_truth_path: str | Path | None = None, app_model_path: str | Path | None = None,
            labels: LabelConfig | None = None, seed: int = 0) -> dict:
    """App and device instances for every resolved device with two days of data.

    With ground truth, instances carry true labels and the training-label rule
    marks apps of a seeded sample of devices. With an app model, device
    suspiciousness is filled in; otherwise it stays missing. Writes JSONL and
    CSV next to each other.
    """
    labels = labels or LabelConfig()
    index = ReviewIndex(read_reviews(reviews_path))
    metadata = read_metadata(metadata_path)
    truth = GroundTruth.load(ground_truth_path) if ground_truth_path else None
    flagger = app_flagger(Model.load(_require(Path(app_model_path)))) if app_model_path else None
    apps_all: list[AppUsageInstance] = []
    devices: list[DeviceUsageInstance] = []
    skipped = 0
    for entry, recs in iter_device_streams(devices_path, records_dir):
        try:
            view = DeviceView(entry["device_id"], recs, tuple(entry["member_installs"]))
            scan, apps = extract_device_app_features(view, index, metadata)
        except InsufficientDataError as exc:
            logger.info("skipping %s", exc)
            skipped += 1
            continue
        known = truth.lookup(entry["member_installs"]) if truth else None
        if known is not None:
            for a in apps:
                a.label = known["app_intents"].get(a.app_id)
        dev = extract_device_features(scan, apps, index, metadata, flagger)
        if known is not None:
            dev.label, dev.profile = known["label"], known["class"]
        apps_all.extend(apps)
        devices.append(dev)
    rule_labels = {}
    if truth is not None:
        sources = choose_label_sources(devices, labels, seed)
        rule_labels = apply_label_rule(apps_all, {d.device_id: d.label for d in devices if d.label},
                                       metadata, sources, labels.min_worker_devices, labels.min_play_reviews)
    write_instance_files(app_out, apps_all, "app")
    write_instance_files(device_out, devices, "device")
    return {"devices": len(devices), "skipped_devices": skipped, "app_instances": len(apps_all),
            "rule_labelled_apps": len(rule_labels),
            "rule_labelled_instances": sum(a.rule_label is not None for a in apps_all)}


def write_instance_files(path: str | Path, instances: Sequence, kind: str) -> list[Path]:
    """``<stem>.jsonl`` plus ``<stem>.csv``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_instances(path, instances)
    csv_path = path.with_suffix(".csv")
    write_csv(csv_path, instances, kind)
    return [path, csv_path]


def score_suspiciousness(apps: Sequence[AppUsageInstance], devices: Sequence[DeviceUsageInstance],
                         model: Model) -> list[DeviceUsageInstance]:
    """Copies of ``devices`` whose suspiciousness is the share of user apps the model flags."""
    user = [a for a in apps if not a.preinstalled]
    flags = model.predict(unlabeled_matrix(user, model.feature_names)) if user else np.empty(0)
    per_device: dict[str, list[int]] = defaultdict(list)
    for a, f in zip(user, flags.tolist()):
        per_device[a.device_id].append(int(f))
    out = []
    for d in devices:
        f = per_device.get(d.device_id)
        out.append(replace(d, features={**d.features, "d2_suspiciousness": sum(f) / len(f) if f else 0.0}))
    return out


# ---------------------------------------------------------------------------
# train / evaluate / report


def train_models(app_path: str | Path, device_path: str | Path, models_dir: str | Path,
                 scored_out: str | Path, algo: str = "random_forest", params: dict | None = None,
                 seed: int = 0, missing_indicators: bool = False, app_labels: str = "rule_label") -> dict:
    """App model on rule labels, suspiciousness scoring, then the device model."""
    models_dir = Path(models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    apps = read_app_instances(_require(Path(app_path)))
    app_model = train(algo, app_dataset(apps, app_labels), params, derive_seed(seed, 1), missing_indicators)
    app_model.save(models_dir / APP_MODEL)
    scored = score_suspiciousness(apps, read_device_instances(_require(Path(device_path))), app_model)
    write_instance_files(scored_out, scored, "device")
    dev_data = device_dataset(scored)
    dev_model = train(algo, dev_data, params, derive_seed(seed, 2), missing_indicators)
    dev_model.save(models_dir / DEVICE_MODEL)
    return {"algo": algo, "app_training_instances": len(app_dataset(apps, app_labels)),
            "device_training_instances": len(dev_data)}


def write_evaluation(prefix: str | Path, reports: Sequence[ModelReport]) -> list[Path]:
    """``<prefix>.json`` (full reports), ``.csv`` (summary table) and ``.txt``."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = [prefix.with_suffix(s) for s in (".json", ".csv", ".txt")]
    with open(paths[0], "w", encoding="utf-8", newline="\n") as fh:
        json.dump([r.to_obj() for r in reports], fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_reports_csv(paths[1], reports)
    paths[2].write_text(format_reports(reports), encoding="utf-8")
    return paths


def evaluate_apps(app_path: str | Path, cfg: PipelineConfig) -> list[ModelReport]:
    c = cfg.classifiers
    apps = read_app_instances(_require(Path(app_path)))
    reports = []
    for label_field in c.app_labels:
        data = app_dataset(apps, label_field)
        for algo in c.algorithms:
            for sampling in c.app_sampling:
                logger.info("evaluate: apps/%s %s %s", label_field, algo, sampling)
                reports.append(cross_validate(algo, data, c.folds, c.repeats, sampling, cfg.seed,
                                              c.params_for(algo), c.missing_indicators, f"apps/{label_field}"))
    return reports


def evaluate_devices(device_path: str | Path, cfg: PipelineConfig) -> list[ModelReport]:
    c = cfg.classifiers
    data = device_dataset(read_device_instances(_require(Path(device_path))))
    reports = []
    for algo in c.algorithms:
        for sampling in c.device_sampling:
            logger.info("evaluate: devices %s %s", algo, sampling)
            reports.append(cross_validate(algo, data, c.folds, c.repeats, sampling, cfg.seed,
                                          c.params_for(algo), c.missing_indicators, "devices"))
    return reports


def report_rows(devices: Sequence[DeviceUsageInstance]) -> list[dict]:
    """Device feature rows plus the derived total installed apps."""
    rows = []
    for d in devices:
        f = d.features
        total = None
        if f["d1_preinstalled"] is not None and f["d1_user_installed"] is not None:
            total = f["d1_preinstalled"] + f["d1_user_installed"]
        rows.append({**f, INSTALLED_APPS: total, "label": d.label, "profile": d.profile})
    return rows


def report(device_path: str | Path, out_csv: str | Path, group: str = "label",
           features: Sequence[str] = REPORT_FEATURES, table_out: str | Path | None = None) -> dict:
    rows = report_rows(read_device_instances(_require(Path(device_path))))
    comps = compare_report(rows, group, features)
    Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(out_csv, comps)
    if table_out is not None:
        Path(table_out).write_text(format_table(comps), encoding="utf-8")
    return {"features": len(comps), "rows": len(rows)}


# ---------------------------------------------------------------------------
# pipeline and manifest


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class StageRecord:
    name: str
    seed: int
    inputs: list[Path]
    outputs: list[Path]
    summary: dict

    def to_obj(self, base: Path) -> dict:
        def rel(p: Path) -> str:
            try:
                return p.resolve().relative_to(base.resolve()).as_posix()
            except ValueError:
                return p.as_posix()
        return {"name": self.name, "version": STAGE_VERSIONS[self.name], "seed": self.seed,
                "inputs": {rel(p): file_digest(p) for p in self.inputs},
                "outputs": {rel(p): file_digest(p) for p in self.outputs},
                "summary": self.summary}


def build_manifest(cfg: PipelineConfig, stages: Sequence[StageRecord]) -> dict:
    """Stage versions, seeds and content digests; paths are relative to the work directory."""
    base = cfg.paths.resolve("work_dir")
    return {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION, "digest_algorithm": DIGEST_ALGORITHM,
            "package_version": __version__, "seed": cfg.seed,
            "config_digest": hashlib.sha256(cfg.digest_text().encode()).hexdigest(),
            "stages": [s.to_obj(base) for s in stages]}


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def csv_of(path: Path) -> Path:
    return path.with_suffix(".csv")


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage in order and write the manifest; raises StageError on the first failure."""
    P = cfg.paths.resolve
    sim, store, dev, feat, models, reps = (P(k) for k in ("simulate", "store", "devices", "features",
                                                           "models", "reports"))
    sim_files = [sim / record_file_name(k, "install") for k in ("slow", "fast")]
    store_files = [store / CHUNK_LOG] + [store / record_file_name(k, "install") for k in ("slow", "fast")]
    dev_files = [dev / DEVICES_FILE] + [dev / record_file_name(k, "device") for k in ("slow", "fast")]
    app_jsonl, dev_jsonl, scored_jsonl = (feat / f"{n}.jsonl" for n in (APP_INSTANCES, DEVICE_INSTANCES,
                                                                         SCORED_DEVICE_INSTANCES))
    side = [sim / REVIEWS_FILE, sim / METADATA_FILE, sim / GROUND_TRUTH_FILE]
    c = cfg.classifiers
    records: list[StageRecord] = []

    def run(name: str, inputs: list[Path], outputs, fn) -> None:
        logger.info("%s: running", name)
        with stage_errors(name):
            summary = fn()
            outs = outputs() if callable(outputs) else outputs
            records.append(StageRecord(name, cfg.seed, inputs, outs, summary))
        logger.info("%s: %s", name, json.dumps(summary, sort_keys=True))

    run("simulate", [], sim_files + side,
        lambda: simulate(cfg.fleet_config(), cfg.faults.schedule(), sim))
    run("ingest", sim_files, store_files,
        lambda: ingest(sim, store, cfg.faults.transport(), cfg.seed, fresh=True))
    run("fingerprint", store_files, dev_files, lambda: fingerprint(store, dev))
    run("extract", dev_files + side, [app_jsonl, csv_of(app_jsonl), dev_jsonl, csv_of(dev_jsonl)],
        lambda: extract(dev / DEVICES_FILE, dev, sim / REVIEWS_FILE, sim / METADATA_FILE, app_jsonl, dev_jsonl,
                        sim / GROUND_TRUTH_FILE, None, cfg.labels, cfg.seed))
    run("train", [app_jsonl, dev_jsonl], [models / APP_MODEL, scored_jsonl, csv_of(scored_jsonl),
                                          models / DEVICE_MODEL],
        lambda: train_models(app_jsonl, dev_jsonl, models, scored_jsonl, c.model_algo,
                             c.params_for(c.model_algo), cfg.seed, c.missing_indicators))
    evaluation: dict = {}

    def do_evaluate() -> dict:
        evaluation["apps"] = evaluate_apps(app_jsonl, cfg)
        evaluation["devices"] = evaluate_devices(scored_jsonl, cfg)
        write_evaluation(reps / APP_EVALUATION, evaluation["apps"])
        write_evaluation(reps / DEVICE_EVALUATION, evaluation["devices"])
        return {"reports": [{"dataset": r.dataset, "algo": r.algo, "sampling": r.sampling, **r.summary()}
                            for r in evaluation["apps"] + evaluation["devices"]]}

    eval_files = [reps / f"{n}{s}" for n in (APP_EVALUATION, DEVICE_EVALUATION) for s in (".json", ".csv", ".txt")]
    run("evaluate", [app_jsonl, scored_jsonl], eval_files, do_evaluate)
    run("report", [scored_jsonl], [reps / f"{STATS_REPORT}.csv", reps / f"{STATS_REPORT}.txt"],
        lambda: report(scored_jsonl, reps / f"{STATS_REPORT}.csv", "label", REPORT_FEATURES,
                       reps / f"{STATS_REPORT}.txt"))
    manifest = build_manifest(cfg, records)
    write_manifest(P("manifest"), manifest)
    return {"manifest": manifest, "evaluation": evaluation}
