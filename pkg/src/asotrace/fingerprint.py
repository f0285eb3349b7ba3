"""Resolve collector installs to physical devices.

Every install ID is a candidate device. Pairs of candidates are compared with
three rules, in order:

1. closed install intervals overlap: different devices (one device cannot run
   two collector installs at once);
2. both Android IDs known: equal means same device, unequal means different;
3. otherwise: same device iff the Jaccard similarity of their
   ``(app, install_time)`` sets exceeds 0.5625 or that of their account-name
   sets exceeds 0.53.

Devices are connected components of the "same" relation. A component that
contains a pair the rules hold apart (overlap or unequal Android IDs) cannot
be a single device; it is emitted unmerged, one device per install, and
flagged ambiguous.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .records import INSTALLED, FastSnapshot, SlowSnapshot, iter_records, record_file_name
from .store import SnapshotStore

APP_JACCARD_THRESHOLD = 0.5625
ACCOUNT_JACCARD_THRESHOLD = 0.53

SAME_ANDROID_ID = "android_id"
SAME_APPS = "app_jaccard"
SAME_ACCOUNTS = "account_jaccard"
DIFF_OVERLAP = "interval_overlap"
DIFF_ANDROID_ID = "android_id_mismatch"
DIFF_NO_EVIDENCE = "no_evidence"


@dataclass(frozen=True)
class CandidateDevice:
    install_id: str
    participant_id: str
    android_id: str | None
    t_first: int
    t_last: int
    app_installs: frozenset[tuple[str, int]]
    accounts: frozenset[str]
    snapshot_count: int = 0

    def __post_init__(self):
        if self.t_first > self.t_last:
            raise ValueError("t_first must not exceed t_last")


@dataclass(frozen=True)
class Merge:
    installs: tuple[str, str]
    rule: str
    similarity: float | None = None


@dataclass
class ResolvedDevice:
    device_id: str
    member_installs: tuple[str, ...]
    participant_ids: tuple[str, ...]
    android_ids: tuple[str, ...]
    t_first: int
    t_last: int
    app_installs: frozenset[tuple[str, int]]
    accounts: frozenset[str]
    snapshot_count: int
    merges: list[Merge] = field(default_factory=list)
    ambiguous: bool = False
    conflicts: list[Merge] = field(default_factory=list)

    def to_obj(self) -> dict:
        return {
            "device_id": self.device_id,
            "member_installs": list(self.member_installs),
            "participant_ids": list(self.participant_ids),
            "android_ids": list(self.android_ids),
            "t_first": self.t_first,
            "t_last": self.t_last,
            "snapshot_count": self.snapshot_count,
            "ambiguous": self.ambiguous,
            "merges": [{"installs": list(m.installs), "rule": m.rule, "similarity": m.similarity}
                       for m in self.merges],
            "conflicts": [{"installs": list(m.installs), "rule": m.rule} for m in self.conflicts],
        }


def jaccard(a: set | frozenset, b: set | frozenset) -> float:
    """|a & b| / |a | b|, and 0 for two empty sets."""
    if not a and not b:
        return 0.0
    inter = len(a & b)
    return inter / (len(a) + len(b) - inter)


def _candidate(install_id: str, records: list) -> CandidateDevice:
    android_ids: Counter[str] = Counter()
    apps: set[tuple[str, int]] = set()
    accounts: set[str] = set()
    for rec in records:
        if isinstance(rec, SlowSnapshot):
            if rec.android_id is not None:
                android_ids[rec.android_id] += 1
            accounts.update(name for name, _ in rec.registered_accounts)
        elif isinstance(rec, FastSnapshot):
            for d in rec.install_events:
                if d.kind == INSTALLED:
                    apps.add((d.app_id, d.install_time))
    android_id = min(android_ids, key=lambda a: (-android_ids[a], a)) if android_ids else None
    return CandidateDevice(
        install_id=install_id,
        participant_id=records[0].participant_id,
        android_id=android_id,
        t_first=min(r.timestamp for r in records),
        t_last=max(r.timestamp for r in records),
        app_installs=frozenset(apps),
        accounts=frozenset(accounts),
        snapshot_count=len(records),
    )


def group_candidates(store: SnapshotStore) -> list[CandidateDevice]:
    """One candidate per install ID, ordered by install ID."""
    install_ids = store.install_ids()
    if not install_ids:
        raise ValueError("store is empty")
    return [_candidate(i, store.stream(i)) for i in install_ids]


def overlaps(x: CandidateDevice, y: CandidateDevice) -> bool:
    # closed intervals: touching endpoints count as overlap
    return x.t_first <= y.t_last and y.t_first <= x.t_last


def compare(x: CandidateDevice, y: CandidateDevice) -> tuple[bool, str, float | None]:
    """(same_device, rule, similarity) for one candidate pair."""
    if overlaps(x, y):
        return False, DIFF_OVERLAP, None
    if x.android_id is not None and y.android_id is not None:
        if x.android_id == y.android_id:
            return True, SAME_ANDROID_ID, None
        return False, DIFF_ANDROID_ID, None
    ja = jaccard(x.app_installs, y.app_installs)
    if ja > APP_JACCARD_THRESHOLD:
        return True, SAME_APPS, ja
    jc = jaccard(x.accounts, y.accounts)
    if jc > ACCOUNT_JACCARD_THRESHOLD:
        return True, SAME_ACCOUNTS, jc
    return False, DIFF_NO_EVIDENCE, max(ja, jc)


def _device_id(members: Iterable[str]) -> str:
    return "d" + hashlib.sha256(",".join(sorted(members)).encode()).hexdigest()[:12]


def _resolved(members: list[CandidateDevice], merges: list[Merge], ambiguous: bool = False,
              conflicts: list[Merge] | None = None) -> ResolvedDevice:
    members = sorted(members, key=lambda c: (c.t_first, c.install_id))
    return ResolvedDevice(
        device_id=_device_id(c.install_id for c in members),
        member_installs=tuple(c.install_id for c in members),
        participant_ids=tuple(sorted({c.participant_id for c in members})),
        android_ids=tuple(sorted({c.android_id for c in members if c.android_id is not None})),
        t_first=min(c.t_first for c in members),
        t_last=max(c.t_last for c in members),
        app_installs=frozenset().union(*(c.app_installs for c in members)),
        accounts=frozenset().union(*(c.accounts for c in members)),
        snapshot_count=sum(c.snapshot_count for c in members),
        merges=merges,
        ambiguous=ambiguous,
        conflicts=conflicts or [],
    )


def coalesce(candidates: list[CandidateDevice]) -> list[ResolvedDevice]:
    """Coalesce candidates into devices; output is independent of input order."""
    cands = sorted(candidates, key=lambda c: c.install_id)
    if len({c.install_id for c in cands}) != len(cands):
        raise ValueError("duplicate install_id among candidates")
    n = len(cands)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    same_edges: list[tuple[int, int, Merge]] = []
    hard: list[tuple[int, int, Merge]] = []
    for i in range(n):
        for j in range(i + 1, n):
            same, rule, sim = compare(cands[i], cands[j])
            edge = Merge((cands[i].install_id, cands[j].install_id), rule, sim)
            if same:
                same_edges.append((i, j, edge))
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
            elif rule in (DIFF_OVERLAP, DIFF_ANDROID_ID):
                hard.append((i, j, edge))

    components: dict[int, list[int]] = {}
    for i in range(n):
        components.setdefault(find(i), []).append(i)
    comp_merges: dict[int, list[Merge]] = {}
    for i, _, edge in same_edges:
        comp_merges.setdefault(find(i), []).append(edge)
    comp_conflicts: dict[int, list[Merge]] = {}
    for i, j, edge in hard:
        if find(i) == find(j):
            comp_conflicts.setdefault(find(i), []).append(edge)

    devices = []
    for root, members in components.items():
        conflicts = comp_conflicts.get(root)
        if conflicts:
            for i in members:
                devices.append(_resolved([cands[i]], [], ambiguous=True, conflicts=conflicts))
        else:
            devices.append(_resolved([cands[i] for i in members], comp_merges.get(root, [])))
    devices.sort(key=lambda d: (d.t_first, d.device_id))
    return devices


def install_to_device(devices: Iterable[ResolvedDevice]) -> dict[str, str]:
    return {i: d.device_id for d in devices for i in d.member_installs}


def write_devices(devices: list[ResolvedDevice], store: SnapshotStore, out_dir: str | Path,
                  devices_path: str | Path | None = None) -> dict[str, Path]:
    """Write ``devices.jsonl`` plus ``slow.device.jsonl`` / ``fast.device.jsonl``.

    Device files hold every stored snapshot exactly once, grouped by device in
    ``devices.jsonl`` order and sorted by timestamp within a device.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    devices_path = Path(devices_path) if devices_path else out_dir / "devices.jsonl"
    with open(devices_path, "w", encoding="utf-8", newline="\n") as fh:
        for d in devices:
            fh.write(json.dumps(d.to_obj(), separators=(",", ":")) + "\n")
    paths = {k: out_dir / record_file_name(k, "device") for k in ("slow", "fast")}
    handles = {k: open(p, "w", encoding="utf-8", newline="\n") for k, p in paths.items()}
    try:
        for d in devices:
            merged = []
            for install_id in d.member_installs:
                merged.extend(store.lines(install_id))
            merged.sort(key=lambda e: e[0])  # stable: keeps per-install order on ties
            for _, kind, line in merged:
                handles[kind].write(line + "\n")
    finally:
        for fh in handles.values():
            fh.close()
    return {"devices": devices_path, **paths}


def read_devices(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


class _Lookahead:
    def __init__(self, it: Iterator):
        self._it = it
        self.head = next(it, None)

    def take_while(self, pred) -> list:
        out = []
        while self.head is not None and pred(self.head):
            out.append(self.head)
            self.head = next(self._it, None)
        return out


def iter_device_streams(devices_path: str | Path, records_dir: str | Path) -> Iterator[tuple[dict, list]]:
    """Yield ``(device entry, snapshots sorted by timestamp)`` one device at a time.

    Reads the device files sequentially, so memory holds one device. Raises
    ValueError if a record belongs to no device or breaks the device grouping.
    """
    devices = read_devices(devices_path)
    paths = [Path(records_dir) / record_file_name(kind, "device") for kind in ("slow", "fast")]
    for path in paths:
        if not path.exists():
            raise FileNotFoundError(path)
    readers = [_Lookahead(iter_records(p)) for p in paths]
    for d in devices:
        members = set(d["member_installs"])
        recs = []
        for r in readers:
            recs.extend(r.take_while(lambda rec: rec.install_id in members))
        recs.sort(key=lambda r: (r.timestamp, r.kind))
        yield d, recs
    for path, r in zip(paths, readers):
        if r.head is not None:
            raise ValueError(f"{path}: install {r.head.install_id} belongs to no device or is out of device order")


def load_device_streams(devices_path: str | Path, records_dir: str | Path) -> tuple[list[dict], dict[str, list]]:
    """Device entries and, per device_id, its snapshots sorted by timestamp."""
    devices, streams = [], {}
    for d, recs in iter_device_streams(devices_path, records_dir):
        devices.append(d)
        streams[d["device_id"]] = recs
    return devices, streams
