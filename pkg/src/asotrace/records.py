"""Domain records and their canonical JSON-lines encoding.

Every record serializes to exactly one line of compact JSON with a fixed key
order, so ``parse_record(serialize_record(r)) == r`` holds for any valid record
and the encoded bytes are stable across runs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Union

INSTALLED = "installed"
UNINSTALLED = "uninstalled"
NORMAL = "normal"
DANGEROUS = "dangerous"
GMAIL_ACCOUNT_TYPE = "com.google"

_INSTALL_ID_RE = re.compile(r"^\d{10}$")
_PARTICIPANT_ID_RE = re.compile(r"^\d{6}$")


class MalformedRecordError(ValueError):
    """A record line is syntactically or semantically invalid."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class UnknownRecordKindError(ValueError):
    pass


def check_ids(install_id: str, participant_id: str) -> None:
    if not isinstance(install_id, str) or not _INSTALL_ID_RE.match(install_id):
        raise MalformedRecordError("install_id", f"expected 10 digits, got {install_id!r}")
    if not isinstance(participant_id, str) or not _PARTICIPANT_ID_RE.match(participant_id):
        raise MalformedRecordError("participant_id", f"expected 6 digits, got {participant_id!r}")


def _check_int(name: str, value, minimum: int | None = None, maximum: int | None = None) -> None:
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedRecordError(name, f"expected integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise MalformedRecordError(name, f"{value} below {minimum}")
    if maximum is not None and value > maximum:
        raise MalformedRecordError(name, f"{value} above {maximum}")


def _check_bool(name: str, value) -> None:
    if not isinstance(value, bool):
        raise MalformedRecordError(name, f"expected boolean, got {value!r}")


def _check_str(name: str, value, optional: bool = False) -> None:
    if value is None and optional:
        return
    if not isinstance(value, str) or not value:
        raise MalformedRecordError(name, f"expected non-empty string, got {value!r}")


@dataclass(frozen=True, slots=True)
class Permission:
    name: str
    level: str
    granted: bool

    def __post_init__(self):
        _check_str("permissions.name", self.name)
        if self.level not in (NORMAL, DANGEROUS):
            raise MalformedRecordError("permissions.level", f"unknown level {self.level!r}")
        _check_bool("permissions.granted", self.granted)


@dataclass(frozen=True, slots=True)
class InstallDelta:
    app_id: str
    kind: str
    install_time: int | None = None
    last_update_time: int | None = None
    permissions: tuple[Permission, ...] = ()
    apk_hash: str | None = None

    def __post_init__(self):
        _check_str("app_id", self.app_id)
        if self.kind not in (INSTALLED, UNINSTALLED):
            raise MalformedRecordError("kind", f"unknown delta kind {self.kind!r}")
        if self.kind == INSTALLED:
            _check_int("install_time", self.install_time, minimum=0)
        elif self.install_time is not None:
            raise MalformedRecordError("install_time", "must be absent for uninstalls")
        if self.last_update_time is not None:
            _check_int("last_update_time", self.last_update_time, minimum=0)
        names = [p.name for p in self.permissions]
        if len(set(names)) != len(names):
            raise MalformedRecordError("permissions", "duplicate permission name")
        _check_str("apk_hash", self.apk_hash, optional=True)


@dataclass(frozen=True, slots=True)
class SlowSnapshot:
    install_id: str
    participant_id: str
    android_id: str | None
    timestamp: int
    registered_accounts: tuple[tuple[str, str], ...]
    save_mode: bool
    stopped_apps: tuple[str, ...]
    kind = "slow"

    def __post_init__(self):
        check_ids(self.install_id, self.participant_id)
        _check_str("android_id", self.android_id, optional=True)
        _check_int("timestamp", self.timestamp, minimum=1)
        if len(set(self.registered_accounts)) != len(self.registered_accounts):
            raise MalformedRecordError("registered_accounts", "duplicate (name, type) pair")
        _check_bool("save_mode", self.save_mode)


@dataclass(frozen=True, slots=True)
class FastSnapshot:
    install_id: str
    participant_id: str
    timestamp: int
    foreground_app: str | None
    screen_on: bool
    battery_level: int
    install_events: tuple[InstallDelta, ...] = ()
    kind = "fast"

    def __post_init__(self):
        check_ids(self.install_id, self.participant_id)
        _check_int("timestamp", self.timestamp, minimum=1)
        _check_str("foreground_app", self.foreground_app, optional=True)
        _check_bool("screen_on", self.screen_on)
        _check_int("battery_level", self.battery_level, minimum=0, maximum=100)


@dataclass(frozen=True, slots=True)
class ReviewRecord:
    app_id: str
    account_name: str
    rating: int
    review_time: int
    kind = "review"

    def __post_init__(self):
        _check_str("app_id", self.app_id)
        _check_str("account_name", self.account_name)
        _check_int("rating", self.rating, minimum=1, maximum=5)
        _check_int("review_time", self.review_time, minimum=0)


@dataclass(frozen=True, slots=True)
class AppMetadata:
    """Static per-app attributes.

    ``advertised`` and ``play_review_count`` feed the training-label rule
    (an app promoted on worker boards, or a popular Play app).
    """

    app_id: str
    vt_flag_count: int = 0
    preinstalled: bool = False
    advertised: bool = False
    play_review_count: int = 0
    kind = "app"

    def __post_init__(self):
        _check_str("app_id", self.app_id)
        _check_int("vt_flag_count", self.vt_flag_count, minimum=0)
        _check_bool("preinstalled", self.preinstalled)
        _check_bool("advertised", self.advertised)
        _check_int("play_review_count", self.play_review_count, minimum=0)


SnapshotRecord = Union[SlowSnapshot, FastSnapshot]
Record = Union[SlowSnapshot, FastSnapshot, ReviewRecord, AppMetadata]


def _delta_to_obj(d: InstallDelta) -> dict:
    return {
        "app_id": d.app_id,
        "kind": d.kind,
        "install_time": d.install_time,
        "last_update_time": d.last_update_time,
        "permissions": [[p.name, p.level, p.granted] for p in d.permissions],
        "apk_hash": d.apk_hash,
    }


def record_to_obj(record: Record) -> dict:
    if isinstance(record, FastSnapshot):
        return {
            "kind": "fast",
            "install_id": record.install_id,
            "participant_id": record.participant_id,
            "timestamp": record.timestamp,
            "foreground_app": record.foreground_app,
            "screen_on": record.screen_on,
            "battery_level": record.battery_level,
            "install_events": [_delta_to_obj(d) for d in record.install_events],
        }
    if isinstance(record, SlowSnapshot):
        return {
            "kind": "slow",
            "install_id": record.install_id,
            "participant_id": record.participant_id,
            "android_id": record.android_id,
            "timestamp": record.timestamp,
            "registered_accounts": [list(a) for a in record.registered_accounts],
            "save_mode": record.save_mode,
            "stopped_apps": list(record.stopped_apps),
        }
    if isinstance(record, ReviewRecord):
        return {
            "kind": "review",
            "app_id": record.app_id,
            "account_name": record.account_name,
            "rating": record.rating,
            "review_time": record.review_time,
        }
    if isinstance(record, AppMetadata):
        return {
            "kind": "app",
            "app_id": record.app_id,
            "vt_flag_count": record.vt_flag_count,
            "preinstalled": record.preinstalled,
            "advertised": record.advertised,
            "play_review_count": record.play_review_count,
        }
    raise UnknownRecordKindError(f"cannot serialize {type(record).__name__}")


def serialize_record(record: Record) -> str:
    """One line of compact JSON, without the trailing newline."""
    return json.dumps(record_to_obj(record), separators=(",", ":"), ensure_ascii=False)


def _get(obj: dict, name: str):
    try:
        return obj[name]
    except KeyError:
        raise MalformedRecordError(name, "missing field") from None


def _list(obj: dict, name: str) -> list:
    value = _get(obj, name)
    if not isinstance(value, list):
        raise MalformedRecordError(name, "expected a list")
    return value


def _delta_from_obj(obj) -> InstallDelta:
    if not isinstance(obj, dict):
        raise MalformedRecordError("install_events", "expected an object")
    perms = []
    for item in _list(obj, "permissions"):
        if not isinstance(item, list) or len(item) != 3:
            raise MalformedRecordError("permissions", f"expected [name, level, granted], got {item!r}")
        perms.append(Permission(item[0], item[1], item[2]))
    return InstallDelta(
        app_id=_get(obj, "app_id"),
        kind=_get(obj, "kind"),
        install_time=obj.get("install_time"),
        last_update_time=obj.get("last_update_time"),
        permissions=tuple(perms),
        apk_hash=obj.get("apk_hash"),
    )


def record_from_obj(obj: dict) -> Record:
    if not isinstance(obj, dict):
        raise MalformedRecordError("record", "expected a JSON object")
    kind = obj.get("kind")
    if kind == "fast":
        return FastSnapshot(
            install_id=_get(obj, "install_id"),
            participant_id=_get(obj, "participant_id"),
            timestamp=_get(obj, "timestamp"),
            foreground_app=obj.get("foreground_app"),
            screen_on=_get(obj, "screen_on"),
            battery_level=_get(obj, "battery_level"),
            install_events=tuple(_delta_from_obj(d) for d in _list(obj, "install_events")),
        )
    if kind == "slow":
        accounts = []
        for item in _list(obj, "registered_accounts"):
            if not isinstance(item, list) or len(item) != 2 or not all(isinstance(s, str) for s in item):
                raise MalformedRecordError("registered_accounts", f"expected [name, type], got {item!r}")
            accounts.append((item[0], item[1]))
        stopped = _list(obj, "stopped_apps")
        if not all(isinstance(s, str) for s in stopped):
            raise MalformedRecordError("stopped_apps", "expected app identifiers")
        return SlowSnapshot(
            install_id=_get(obj, "install_id"),
            participant_id=_get(obj, "participant_id"),
            android_id=obj.get("android_id"),
            timestamp=_get(obj, "timestamp"),
            registered_accounts=tuple(accounts),
            save_mode=_get(obj, "save_mode"),
            stopped_apps=tuple(stopped),
        )
    if kind == "review":
        return ReviewRecord(
            app_id=_get(obj, "app_id"),
            account_name=_get(obj, "account_name"),
            rating=_get(obj, "rating"),
            review_time=_get(obj, "review_time"),
        )
    if kind == "app":
        return AppMetadata(
            app_id=_get(obj, "app_id"),
            vt_flag_count=_get(obj, "vt_flag_count"),
            preinstalled=_get(obj, "preinstalled"),
            advertised=obj.get("advertised", False),
            play_review_count=obj.get("play_review_count", 0),
        )
    raise UnknownRecordKindError(f"unknown record kind {kind!r}")


def parse_record(line: str | bytes) -> Record:
    """Parse one canonical record line."""
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedRecordError("line", f"not valid JSON ({exc})") from None
    return record_from_obj(obj)


def iter_records(path: str | Path) -> Iterator[Record]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield parse_record(line)
            except MalformedRecordError as exc:
                raise MalformedRecordError(exc.field, f"{path}:{lineno}: {exc}") from None


def write_records(path: str | Path, records: Iterable[Record]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(serialize_record(rec))
            fh.write("\n")
            n += 1
    return n


def record_file_name(kind: str, partition: str) -> str:
    """``{kind}.{device|install}.jsonl``"""
    if partition not in ("device", "install"):
        raise ValueError(f"partition must be 'device' or 'install', got {partition!r}")
    return f"{kind}.{partition}.jsonl"
