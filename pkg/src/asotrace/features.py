"""App-usage and device-usage feature extraction.

A device's monitoring window is ``[t_f, t_l]``, the first and last snapshot
timestamps over all of its installs. Per (device, app) pair the extractor
computes review counts around the window, install-to-review and inter-review
statistics, foreground usage, inner retention, permissions, AV flags and
install churn. Per device it computes inventory sizes, app suspiciousness,
stopped apps, churn rates, account counts and review totals.

Column orders are fixed by ``APP_FEATURES`` and ``DEVICE_FEATURES`` and
documented in ``docs/data_dictionary.md``.
"""

from __future__ import annotations

import csv
import json
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .records import (
    DANGEROUS,
    GMAIL_ACCOUNT_TYPE,
    INSTALLED,
    AppMetadata,
    InstallDelta,
    ReviewRecord,
    SlowSnapshot,
)

DAY = 86400
MIN_WINDOW = 2 * DAY

STAT_NAMES = ("min", "mean", "median", "max")
APP_FEATURES = (
    "f1_reviews_before",
    "f1_reviews_during",
    "f1_reviews_after",
    *(f"f2_install_to_review_{s}" for s in STAT_NAMES),
    *(f"f3_inter_review_{s}" for s in STAT_NAMES),
    "f4_opened_multiple_days",
    "f5_foreground_snaps_per_day",
    "f6_device_snaps_per_day",
    "f7_inner_retention",
    "f7_installed_before",
    "f7_installed_after",
    "f8_normal_perms",
    "f8_dangerous_perms",
    "f9_granted",
    "f9_denied",
    "f10_vt_flags",
    "f11_installs",
    "f11_uninstalls",
)
DEVICE_FEATURES = (
    "d1_preinstalled",
    "d1_user_installed",
    "d2_suspiciousness",
    "d3_stopped",
    "d4_daily_installs",
    "d4_daily_uninstalls",
    "d5_gmail",
    "d5_non_gmail",
    "d5_account_types",
    "d6_installed_and_reviewed",
    "d7_total_reviewed",
)

PROMOTION = "promotion"
PERSONAL = "personal"
WORKER = "worker"
REGULAR = "regular"


class InsufficientDataError(ValueError):
    """The device has less than two days of both fast and slow snapshots."""


@dataclass
class DeviceView:
    """One resolved device: its snapshots merged over member installs."""

    device_id: str
    records: list  # SlowSnapshot | FastSnapshot, sorted by timestamp
    member_installs: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.records:
            raise InsufficientDataError(f"{self.device_id}: no snapshots")
        self.t_first = min(r.timestamp for r in self.records)
        self.t_last = max(r.timestamp for r in self.records)
        accounts: dict[str, str] = {}
        for r in self.records:
            if isinstance(r, SlowSnapshot):
                for name, typ in r.registered_accounts:
                    accounts.setdefault(name, typ)
        self.accounts = accounts

    def check_window(self) -> None:
        for kind in ("slow", "fast"):
            ts = [r.timestamp for r in self.records if r.kind == kind]
            if not ts or max(ts) - min(ts) < MIN_WINDOW:
                raise InsufficientDataError(
                    f"{self.device_id}: fewer than two days of {kind} snapshots")


@dataclass
class AppUsageInstance:
    device_id: str
    app_id: str
    features: dict[str, float | None]
    preinstalled: bool = False
    label: str | None = None  # promotion | personal (ground-truth intent)
    rule_label: str | None = None  # promotion | personal from the training-label rule

    def vector(self) -> list[float | None]:
        return [self.features[k] for k in APP_FEATURES]

    def to_obj(self) -> dict:
        return {"device_id": self.device_id, "app_id": self.app_id, "preinstalled": self.preinstalled,
                "label": self.label, "rule_label": self.rule_label,
                "features": {k: self.features[k] for k in APP_FEATURES}}

    @classmethod
    def from_obj(cls, obj: dict) -> "AppUsageInstance":
        feats = obj["features"]
        missing = [k for k in APP_FEATURES if k not in feats]
        if missing:
            raise ValueError(f"app instance lacks features {missing}")
        return cls(obj["device_id"], obj["app_id"], {k: feats[k] for k in APP_FEATURES},
                   bool(obj.get("preinstalled", False)), obj.get("label"), obj.get("rule_label"))


@dataclass
class DeviceUsageInstance:
    device_id: str
    features: dict[str, float | None]
    label: str | None = None  # worker | regular
    profile: str | None = None  # generating class, when known

    def vector(self) -> list[float | None]:
        return [self.features[k] for k in DEVICE_FEATURES]

    def to_obj(self) -> dict:
        return {"device_id": self.device_id, "label": self.label, "profile": self.profile,
                "features": {k: self.features[k] for k in DEVICE_FEATURES}}

    @classmethod
    def from_obj(cls, obj: dict) -> "DeviceUsageInstance":
        feats = obj["features"]
        missing = [k for k in DEVICE_FEATURES if k not in feats]
        if missing:
            raise ValueError(f"device instance lacks features {missing}")
        return cls(obj["device_id"], {k: feats[k] for k in DEVICE_FEATURES}, obj.get("label"),
                   obj.get("profile"))


# ---------------------------------------------------------------------------
# reviews


class ReviewIndex:
    """Reviews grouped by account name, each list sorted by time."""

    def __init__(self, reviews: Iterable[ReviewRecord], crawl_time: int | None = None):
        self.by_account: dict[str, list[ReviewRecord]] = defaultdict(list)
        latest = None
        for r in reviews:
            self.by_account[r.account_name].append(r)
            latest = r.review_time if latest is None else max(latest, r.review_time)
        for lst in self.by_account.values():
            lst.sort(key=lambda r: (r.review_time, r.app_id))
        # "after" reviews are bounded by the last crawl
        self.crawl_time = crawl_time if crawl_time is not None else latest

    def for_accounts(self, accounts: Iterable[str]) -> dict[str, list[ReviewRecord]]:
        """app_id -> reviews by any of ``accounts``."""
        out: dict[str, list[ReviewRecord]] = defaultdict(list)
        for a in accounts:
            for r in self.by_account.get(a, ()):
                if self.crawl_time is None or r.review_time <= self.crawl_time:
                    out[r.app_id].append(r)
        for lst in out.values():
            lst.sort(key=lambda r: (r.review_time, r.account_name))
        return out


def install_to_review_times(last_install_time: int | None, reviews: Sequence[ReviewRecord]) -> list[int]:
    """Seconds from the app's last install to each later review; earlier reviews are dropped."""
    if last_install_time is None:
        return []
    return [r.review_time - last_install_time for r in reviews if r.review_time >= last_install_time]


def _stats(values: Sequence[float]) -> dict[str, float | None]:
    if not values:
        return dict.fromkeys(STAT_NAMES)
    return {
        "min": float(min(values)),
        "mean": float(statistics.fmean(values)),
        "median": float(statistics.median(values)),
        "max": float(max(values)),
    }


# ---------------------------------------------------------------------------
# app usage


@dataclass
class _AppTrack:
    install_times: set[int] = field(default_factory=set)
    latest: InstallDelta | None = None
    present_since: int | None = None
    present_install: int | None = None
    intervals: list[tuple[int, int, bool]] = field(default_factory=list)  # (start, end, still installed at end)
    uninstall_times: list[int] = field(default_factory=list)
    fg_times: list[int] = field(default_factory=list)

    def open(self, t: int, install_time: int) -> None:
        self.present_since = t
        self.present_install = install_time

    def close(self, t: int, open_end: bool = False) -> None:
        if self.present_since is not None:
            self.intervals.append((self.present_since, max(t, self.present_since), open_end))
        self.present_since = None
        self.present_install = None


@dataclass
class DeviceScan:
    """Everything the app and device features need, from one pass over the snapshots."""

    view: DeviceView
    t_f: int
    t_l: int
    apps: dict[str, _AppTrack]
    initial: dict[str, int]  # apps present at t_f -> install time
    final: set[str]
    snapshot_count: int
    last_stopped: tuple[str, ...]

    @property
    def days(self) -> float:
        return (self.t_l - self.t_f) / DAY


def scan_device(view: DeviceView, window: tuple[int, int] | None = None) -> DeviceScan:
    t_f, t_l = window if window is not None else (view.t_first, view.t_last)
    if t_l < t_f:
        raise ValueError("empty monitoring window")
    apps: dict[str, _AppTrack] = defaultdict(_AppTrack)
    seen_installs: set[str] = set()
    prev_ts = None
    initial: dict[str, int] | None = None
    count = 0
    last_stopped: tuple[str, ...] = ()
    for rec in view.records:
        ts = rec.timestamp
        if t_f <= ts <= t_l:
            count += 1
        if isinstance(rec, SlowSnapshot):
            if ts <= t_l:
                last_stopped = rec.stopped_apps
            continue
        if rec.install_id not in seen_installs:
            # first fast snapshot of a collector install reports the full inventory
            seen_installs.add(rec.install_id)
            inventory = {d.app_id: d.install_time for d in rec.install_events if d.kind == INSTALLED}
            for app_id, track in apps.items():
                if track.present_since is not None and app_id not in inventory:
                    track.close(prev_ts if prev_ts is not None else ts)
        for d in rec.install_events:
            track = apps[d.app_id]
            if d.kind == INSTALLED:
                track.install_times.add(d.install_time)
                track.latest = d
                if track.present_since is None:
                    track.open(d.install_time, d.install_time)
                elif track.present_install != d.install_time:
                    track.close(d.install_time)
                    track.open(d.install_time, d.install_time)
            else:
                track.uninstall_times.append(ts)
                track.close(ts)
        if initial is None and ts >= t_f:
            initial = {a: tr.present_install for a, tr in apps.items() if tr.present_since is not None}
        if rec.foreground_app is not None and t_f <= ts <= t_l:
            apps[rec.foreground_app].fg_times.append(ts)
        prev_ts = ts
    final = set()
    for app_id, track in apps.items():
        if track.present_since is not None:
            final.add(app_id)
            track.close(view.t_last, open_end=True)
    # only apps that were ever reported installed are instances
    apps = {a: t for a, t in apps.items() if t.install_times}
    if initial is None:
        initial = {}
    initial = {a: t for a, t in initial.items() if a in apps and t is not None and t < t_f}
    return DeviceScan(view, t_f, t_l, apps, initial, final, count, last_stopped)


def _retention(track: _AppTrack, t_f: int, t_l: int) -> int:
    total = 0
    for a, b, _ in track.intervals:
        lo, hi = max(a, t_f), min(b, t_l)
        if hi > lo:
            total += hi - lo
    return total


def _present_at(track: _AppTrack, t: int) -> bool:
    return any(a <= t and (t < b or (t == b and open_end)) for a, b, open_end in track.intervals)


def extract_app_features(scan: DeviceScan, app_id: str, app_reviews: Sequence[ReviewRecord],
                         metadata: Mapping[str, AppMetadata], crawl_time: int | None = None) -> AppUsageInstance:
    track = scan.apps[app_id]
    t_f, t_l = scan.t_f, scan.t_l
    days = scan.days
    accounts_by_phase = {"before": set(), "during": set(), "after": set()}
    for r in app_reviews:
        if r.review_time < t_f:
            accounts_by_phase["before"].add(r.account_name)
        elif r.review_time <= t_l:
            accounts_by_phase["during"].add(r.account_name)
        elif crawl_time is None or r.review_time <= crawl_time:
            accounts_by_phase["after"].add(r.account_name)
    last_install = max(track.install_times)
    i2r = _stats(install_to_review_times(last_install, app_reviews))
    times = sorted(r.review_time for r in app_reviews)
    gaps = [b - a for a, b in zip(times, times[1:])]
    inter = _stats(gaps)
    fg_days = {t // DAY for t in track.fg_times}
    perms = track.latest.permissions if track.latest is not None else ()
    meta = metadata.get(app_id)
    feats: dict[str, float | None] = {
        "f1_reviews_before": len(accounts_by_phase["before"]),
        "f1_reviews_during": len(accounts_by_phase["during"]),
        "f1_reviews_after": len(accounts_by_phase["after"]),
        **{f"f2_install_to_review_{k}": v for k, v in i2r.items()},
        **{f"f3_inter_review_{k}": v for k, v in inter.items()},
        "f4_opened_multiple_days": int(len(fg_days) > 1),
        "f5_foreground_snaps_per_day": len(track.fg_times) / days,
        "f6_device_snaps_per_day": scan.snapshot_count / days,
        "f7_inner_retention": _retention(track, t_f, t_l),
        "f7_installed_before": int(app_id in scan.initial),
        "f7_installed_after": int(_present_at(track, t_l)),
        "f8_normal_perms": sum(1 for p in perms if p.level != DANGEROUS),
        "f8_dangerous_perms": sum(1 for p in perms if p.level == DANGEROUS),
        "f9_granted": sum(1 for p in perms if p.granted),
        "f9_denied": sum(1 for p in perms if not p.granted),
        "f10_vt_flags": meta.vt_flag_count if meta is not None else 0,
        "f11_installs": sum(1 for t in track.install_times if t_f <= t <= t_l),
        "f11_uninstalls": sum(1 for t in track.uninstall_times if t_f <= t <= t_l),
    }
    return AppUsageInstance(scan.view.device_id, app_id, feats, bool(meta.preinstalled) if meta else False)


def extract_device_app_features(view: DeviceView, reviews: ReviewIndex, metadata: Mapping[str, AppMetadata],
                                window: tuple[int, int] | None = None,
                                check: bool = True) -> tuple[DeviceScan, list[AppUsageInstance]]:
    if check:
        view.check_window()
    scan = scan_device(view, window)
    by_app = reviews.for_accounts(view.accounts)
    out = [extract_app_features(scan, a, by_app.get(a, ()), metadata, reviews.crawl_time)
           for a in sorted(scan.apps)]
    return scan, out


# ---------------------------------------------------------------------------
# device usage

AppClassifier = Callable[[Sequence[AppUsageInstance]], Sequence[int]]


def extract_device_features(scan: DeviceScan, app_instances: Sequence[AppUsageInstance],
                            reviews: ReviewIndex, metadata: Mapping[str, AppMetadata],
                            app_classifier: AppClassifier | None = None) -> DeviceUsageInstance:
    view = scan.view
    pre = sum(1 for a in scan.initial if (m := metadata.get(a)) is not None and m.preinstalled)
    user = len(scan.initial) - pre
    user_apps = [i for i in app_instances if not i.preinstalled]
    if app_classifier is None:
        d2 = None
    elif not user_apps:
        d2 = 0.0
    else:
        flags = app_classifier(user_apps)
        d2 = sum(int(f) for f in flags) / len(user_apps)
    by_app = reviews.for_accounts(view.accounts)
    types = set(view.accounts.values())
    gmail = sum(1 for t in view.accounts.values() if t == GMAIL_ACCOUNT_TYPE)
    days = scan.days
    feats = {
        "d1_preinstalled": pre,
        "d1_user_installed": user,
        "d2_suspiciousness": d2,
        "d3_stopped": len(scan.last_stopped),
        "d4_daily_installs": sum(i.features["f11_installs"] for i in app_instances) / days,
        "d4_daily_uninstalls": sum(i.features["f11_uninstalls"] for i in app_instances) / days,
        "d5_gmail": gmail,
        "d5_non_gmail": len(view.accounts) - gmail,
        "d5_account_types": len(types),
        "d6_installed_and_reviewed": sum(1 for a in scan.apps if by_app.get(a)),
        "d7_total_reviewed": sum(len(v) for v in by_app.values()),
    }
    return DeviceUsageInstance(view.device_id, feats)


# ---------------------------------------------------------------------------
# labels


def apply_label_rule(instances: Sequence[AppUsageInstance], device_labels: Mapping[str, str],
                     metadata: Mapping[str, AppMetadata], source_devices: set[str],
                     min_worker_devices: int = 5, min_play_reviews: int = 15_000) -> dict[str, str]:
    """Training labels for apps seen on the label-source devices.

    An app is *promotion* if advertised for promotion, installed on at least
    ``min_worker_devices`` worker devices and on no regular device; it is
    *personal* if on no worker device, on at least one regular device and has
    at least ``min_play_reviews`` store reviews. Device counts run over the
    whole fleet. Sets ``rule_label`` on matching instances of source devices
    and returns the app labels.
    """
    workers: dict[str, set[str]] = defaultdict(set)
    regulars: dict[str, set[str]] = defaultdict(set)
    for inst in instances:
        lab = device_labels.get(inst.device_id)
        if lab == WORKER:
            workers[inst.app_id].add(inst.device_id)
        elif lab == REGULAR:
            regulars[inst.app_id].add(inst.device_id)
    candidates = {i.app_id for i in instances if i.device_id in source_devices}
    labels = {}
    for app_id in sorted(candidates):
        meta = metadata.get(app_id)
        if meta is None or meta.preinstalled:
            continue
        n_w, n_r = len(workers[app_id]), len(regulars[app_id])
        if meta.advertised and n_w >= min_worker_devices and n_r == 0:
            labels[app_id] = PROMOTION
        elif n_w == 0 and n_r >= 1 and meta.play_review_count >= min_play_reviews:
            labels[app_id] = PERSONAL
    for inst in instances:
        if inst.device_id in source_devices:
            inst.rule_label = labels.get(inst.app_id)
    return labels


# ---------------------------------------------------------------------------
# persistence


def write_instances(path: str | Path, instances: Iterable) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_obj(), separators=(",", ":")) + "\n")
            n += 1
    return n


def read_app_instances(path: str | Path) -> list[AppUsageInstance]:
    with open(path, encoding="utf-8") as fh:
        return [AppUsageInstance.from_obj(json.loads(line)) for line in fh if line.strip()]


def read_device_instances(path: str | Path) -> list[DeviceUsageInstance]:
    with open(path, encoding="utf-8") as fh:
        return [DeviceUsageInstance.from_obj(json.loads(line)) for line in fh if line.strip()]


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str | Path, instances: Sequence, kind: str) -> None:
    """CSV export: key columns, label columns, then features in documented order."""
    if kind == "app":
        head, cols = ["device_id", "app_id", "preinstalled", "label", "rule_label"], APP_FEATURES
    elif kind == "device":
        head, cols = ["device_id", "label", "profile"], DEVICE_FEATURES
    else:
        raise ValueError(f"unknown instance kind {kind!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(head + list(cols))
        for inst in instances:
            obj = inst.to_obj()
            w.writerow([_csv_value(obj[h]) for h in head] + [_csv_value(inst.features[c]) for c in cols])
