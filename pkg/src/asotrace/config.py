"""Pipeline configuration: TOML layout, defaults and path overrides.

Layout (every table and key is optional)::

    seed = 42

    [paths]            # relative paths resolve against work_dir
    work_dir = "asotrace-run"
    simulate = "sim"
    ...

    [fleet]            # FleetConfig fields except seed
    workers = 200
    [fleet.profiles.worker_dedicated]
    promo_review_prob = 0.8

    [faults]           # device-level and transport fault rates
    [labels]           # training-label rule
    [classifiers]      # algorithms, CV layout, per-algorithm params
    [classifiers.params.random_forest]
    n_estimators = 100

Only paths can be overridden from the environment: ``ASOTRACE_PATH_<KEY>``
(for example ``ASOTRACE_PATH_WORK_DIR``) replaces ``paths.<key>``.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .classifiers.evaluation import SAMPLINGS
from .classifiers.model import ALGORITHMS
from .protocol import FaultRates
from .simulator.faults import FaultSchedule
from .simulator.fleet import FleetConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_PREFIX = "ASOTRACE_PATH_"
APP_LABEL_FIELDS = ("label", "rule_label")


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    work_dir: str = "asotrace-run"
    simulate: str = "sim"
    store: str = "store"
    devices: str = "devices"
    features: str = "features"
    models: str = "models"
    reports: str = "reports"
    manifest: str = "manifest.json"

    def resolve(self, key: str) -> Path:
        base = Path(self.work_dir)
        if key == "work_dir":
            return base
        p = Path(getattr(self, key))
        return p if p.is_absolute() else base / p

    def stage_keys(self) -> list[str]:
        return [f.name for f in fields(self) if f.name != "work_dir"]


@dataclass
class FaultsConfig:
    reinstall_rate: float = 0.0
    shared_device_rate: float = 0.0
    android_id_suppression: float = 0.0
    drop_request: float = 0.0
    corrupt_request: float = 0.0
    drop_response: float = 0.0
    corrupt_response: float = 0.0
    replay: float = 0.0

    def transport(self) -> FaultRates:
        return FaultRates(self.drop_request, self.corrupt_request, self.drop_response,
                          self.corrupt_response, self.replay)

    def schedule(self) -> FaultSchedule:
        return FaultSchedule(self.reinstall_rate, self.shared_device_rate, self.android_id_suppression,
                             self.transport())


@dataclass
class LabelConfig:
    worker_source_share: float = 0.2
    regular_source_share: float = 0.42
    min_worker_devices: int = 5
    min_play_reviews: int = 15_000


@dataclass
class ClassifierConfig:
    algorithms: list[str] = field(default_factory=lambda: ["random_forest", "logistic_regression"])
    folds: int = 10
    repeats: int = 5
    app_labels: list[str] = field(default_factory=lambda: ["label", "rule_label"])
    app_sampling: list[str] = field(default_factory=lambda: ["none"])
    device_sampling: list[str] = field(default_factory=lambda: ["none", "oversample", "undersample"])
    model_algo: str = "random_forest"
    missing_indicators: bool = False
    params: dict[str, dict[str, Any]] = field(default_factory=dict)

    def params_for(self, algo: str) -> dict[str, Any]:
        return dict(self.params.get(algo, {}))


@dataclass
class PipelineConfig:
    seed: int = 42
    paths: PathsConfig = field(default_factory=PathsConfig)
    fleet: dict[str, Any] = field(default_factory=dict)
    faults: FaultsConfig = field(default_factory=FaultsConfig)
    labels: LabelConfig = field(default_factory=LabelConfig)
    classifiers: ClassifierConfig = field(default_factory=ClassifierConfig)

    def fleet_config(self) -> FleetConfig:
        kw = dict(self.fleet)
        profiles = kw.pop("profiles", {})
        try:
            return FleetConfig(seed=self.seed, profile_overrides=profiles, **kw)
        except TypeError as exc:
            raise ConfigError(f"fleet: {exc}") from None

    def to_obj(self, with_paths: bool = True) -> dict:
        obj = asdict(self)
        if not with_paths:
            del obj["paths"]
        return obj

    def digest_text(self) -> str:
        """Canonical JSON of everything but paths; paths may differ between equivalent runs."""
        return json.dumps(self.to_obj(with_paths=False), sort_keys=True, separators=(",", ":"))


def _section(cls, data: Mapping[str, Any], name: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"[{name}] unknown keys {unknown}")
    return cls(**data)


def _check_choice(name: str, values, allowed) -> None:
    for v in values:
        if v not in allowed:
            raise ConfigError(f"{name}: {v!r} not one of {sorted(allowed)}")


def validate(cfg: PipelineConfig) -> PipelineConfig:
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    c = cfg.classifiers
    _check_choice("classifiers.algorithms", c.algorithms, ALGORITHMS)
    _check_choice("classifiers.model_algo", [c.model_algo], ALGORITHMS)
    _check_choice("classifiers.app_labels", c.app_labels, APP_LABEL_FIELDS)
    _check_choice("classifiers.app_sampling", c.app_sampling, SAMPLINGS)
    _check_choice("classifiers.device_sampling", c.device_sampling, SAMPLINGS)
    _check_choice("classifiers.params", list(c.params), ALGORITHMS)
    if c.folds < 2 or c.repeats < 1:
        raise ConfigError("classifiers: folds must be >= 2 and repeats >= 1")
    for name in ("worker_source_share", "regular_source_share"):
        if not 0.0 <= getattr(cfg.labels, name) <= 1.0:
            raise ConfigError(f"labels.{name} must be in [0, 1]")
    try:
        cfg.fleet_config()
        cfg.faults.schedule()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for name, v in asdict(cfg.faults).items():
        if not 0.0 <= v < 1.0:
            raise ConfigError(f"faults.{name} must be in [0, 1)")
    resolved = {k: cfg.paths.resolve(k).resolve() for k in cfg.paths.stage_keys()}
    seen: dict[Path, str] = {}
    for k, p in resolved.items():
        if p in seen:
            raise ConfigError(f"paths.{k} and paths.{seen[p]} are the same path {p}")
        seen[p] = k
    return cfg


def from_obj(data: Mapping[str, Any], env: Mapping[str, str] | None = None) -> PipelineConfig:
    data = dict(data)
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    paths = dict(data.get("paths", {}))
    env = os.environ if env is None else env
    for f in fields(PathsConfig):
        override = env.get(ENV_PREFIX + f.name.upper())
        if override:
            paths[f.name] = override
    cfg = PipelineConfig(
        seed=data.get("seed", 42),
        paths=_section(PathsConfig, paths, "paths"),
        fleet=dict(data.get("fleet", {})),
        faults=_section(FaultsConfig, data.get("faults", {}), "faults"),
        labels=_section(LabelConfig, data.get("labels", {}), "labels"),
        classifiers=_section(ClassifierConfig, data.get("classifiers", {}), "classifiers"),
    )
    return validate(cfg)


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> PipelineConfig:
    """Read a TOML config (defaults when ``path`` is None) and apply path overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return from_obj(data, env)
