"""Append-only snapshot store with chunk-level deduplication.

The store keeps, per install ID, every record received in a chunk. A chunk is
identified by ``(install_id, chunk_id)``; storing a chunk twice is a no-op, so
at-least-once delivery collapses to exactly-once storage.

When backed by a directory the store appends one line per accepted chunk to
``chunks.log``. A torn trailing line (crash mid-write) is skipped on reload, so
a partially written chunk is never visible.

Records are held as their canonical lines and parsed on demand, which keeps a
fleet-sized store within a few hundred bytes per record.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Iterator

from .records import (
    FastSnapshot,
    SlowSnapshot,
    SnapshotRecord,
    iter_records,
    parse_record,
    record_file_name,
    serialize_record,
)

logger = logging.getLogger(__name__)

CHUNK_LOG = "chunks.log"


class SnapshotStore:
    def __init__(self, directory: str | Path | None = None, fsync: bool = False):
        # install_id -> list of (timestamp, chunk_id, seq, kind, line)
        self._streams: dict[str, list[tuple[int, int, int, str, str]]] = defaultdict(list)
        self._chunks: set[tuple[str, int]] = set()
        self._lock = threading.Lock()
        self._fsync = fsync
        self._log = None
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._replay_log()
            self._log = open(self.directory / CHUNK_LOG, "ab")

    def _replay_log(self) -> None:
        path = self.directory / CHUNK_LOG
        if not path.exists():
            return
        with open(path, "rb") as fh:
            data = fh.read()
        pos = 0
        while pos < len(data):
            nl = data.find(b"\n", pos)
            if nl == -1:
                break
            try:
                entry = json.loads(data[pos:nl])
                lines = entry["records"]
                records = [parse_record(line) for line in lines]
            except (ValueError, KeyError, TypeError):
                break
            self._add_locked(entry["install_id"], entry["chunk_id"], records, lines)
            pos = nl + 1
        if pos < len(data):
            logger.warning("dropping torn chunk log tail in %s (%d bytes)", path, len(data) - pos)
            with open(path, "r+b") as fh:
                fh.truncate(pos)

    def _add_locked(self, install_id: str, chunk_id: int, records: list[SnapshotRecord],
                    lines: list[str]) -> int:
        key = (install_id, chunk_id)
        if key in self._chunks:
            return 0
        self._chunks.add(key)
        stream = self._streams[install_id]
        for seq, (rec, line) in enumerate(zip(records, lines)):
            stream.append((rec.timestamp, chunk_id, seq, rec.kind, line))
        return len(records)

    def add_chunk(self, install_id: str, chunk_id: int, records: list[SnapshotRecord]) -> int:
        """Store a decoded chunk atomically; returns the number of new records."""
        for rec in records:
            if rec.install_id != install_id:
                raise ValueError(f"record from install {rec.install_id} in chunk of {install_id}")
        with self._lock:
            if (install_id, chunk_id) in self._chunks:
                return 0
            lines = [serialize_record(r) for r in records]
            if self._log is not None:
                entry = {"install_id": install_id, "chunk_id": chunk_id, "records": lines}
                self._log.write(json.dumps(entry, separators=(",", ":")).encode() + b"\n")
                self._log.flush()
                if self._fsync:
                    os.fsync(self._log.fileno())
            return self._add_locked(install_id, chunk_id, records, lines)

    def has_chunk(self, install_id: str, chunk_id: int) -> bool:
        with self._lock:
            return (install_id, chunk_id) in self._chunks

    def close(self) -> None:
        with self._lock:
            if self._log is not None:
                self._log.close()
                self._log = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __len__(self) -> int:
        with self._lock:
            return sum(len(s) for s in self._streams.values())

    @property
    def chunk_count(self) -> int:
        return len(self._chunks)

    def install_ids(self) -> list[str]:
        with self._lock:
            return sorted(k for k, v in self._streams.items() if v)

    def lines(self, install_id: str) -> list[tuple[int, str, str]]:
        """``(timestamp, kind, line)`` of one install, ordered by timestamp then arrival position."""
        with self._lock:
            entries = sorted(self._streams.get(install_id, ()), key=lambda e: e[:3])
        return [(e[0], e[3], e[4]) for e in entries]

    def stream(self, install_id: str) -> list[SnapshotRecord]:
        """Records of one install, ordered by timestamp then arrival position."""
        return [parse_record(line) for _, _, line in self.lines(install_id)]

    def __iter__(self) -> Iterator[SnapshotRecord]:
        for install_id in self.install_ids():
            yield from self.stream(install_id)

    def write_canonical(self, directory: str | Path) -> dict[str, Path]:
        """Write ``slow.install.jsonl`` and ``fast.install.jsonl`` in canonical order."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {k: directory / record_file_name(k, "install") for k in ("slow", "fast")}
        handles = {k: open(p, "w", encoding="utf-8", newline="\n") for k, p in paths.items()}
        try:
            for install_id in self.install_ids():
                for _, kind, line in self.lines(install_id):
                    fh = handles[kind]
                    fh.write(line)
                    fh.write("\n")
        finally:
            for fh in handles.values():
                fh.close()
        return paths

    @classmethod
    def from_records(cls, records: Iterable[SnapshotRecord]) -> "SnapshotStore":
        """Build an in-memory store directly (no protocol), one pseudo-chunk per install."""
        store = cls()
        grouped: dict[str, list[SnapshotRecord]] = defaultdict(list)
        for rec in records:
            grouped[rec.install_id].append(rec)
        for install_id, recs in grouped.items():
            store.add_chunk(install_id, 0, recs)
        return store

    @classmethod
    def load_canonical(cls, directory: str | Path) -> "SnapshotStore":
        """In-memory store from ``{slow,fast}.install.jsonl``; at least one must exist."""
        directory = Path(directory)
        paths = [directory / record_file_name(kind, "install") for kind in ("slow", "fast")]
        if not any(p.exists() for p in paths):
            raise FileNotFoundError(f"{directory}: no install record files")
        store = cls()
        # one pseudo-chunk per (install, file), filled record by record
        for chunk_id, path in enumerate(paths):
            if not path.exists():
                continue
            for rec in iter_records(path):
                if not isinstance(rec, (SlowSnapshot, FastSnapshot)):
                    raise ValueError(f"{path}: unexpected {rec.kind} record")
                store._chunks.add((rec.install_id, chunk_id))
                stream = store._streams[rec.install_id]
                stream.append((rec.timestamp, chunk_id, len(stream), rec.kind, serialize_record(rec)))
        return store
