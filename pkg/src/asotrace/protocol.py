"""Client-side snapshot buffering and hash-acknowledged chunk delivery.

Records are appended as JSON lines to one accumulation buffer per snapshot
kind. Once a buffer's uncompressed size reaches its threshold (8 KiB slow,
100 KiB fast) the whole buffer becomes a DEFLATE-compressed chunk. Chunks are
uploaded; the server answers with the SHA-256 of the bytes it received and the
client drops a chunk only when that digest equals its own.

Wire layout is documented in ``docs/wire.md``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import random
import struct
import threading
import zlib
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol

from .records import (
    MalformedRecordError,
    SnapshotRecord,
    UnknownRecordKindError,
    parse_record,
    serialize_record,
)
from .store import SnapshotStore

logger = logging.getLogger(__name__)

SLOW_THRESHOLD = 8 * 1024
FAST_THRESHOLD = 100 * 1024
THRESHOLDS = {"slow": SLOW_THRESHOLD, "fast": FAST_THRESHOLD}

WIRE_MAGIC = b"ASOC"
WIRE_VERSION = 1
_PREFIX = struct.Struct(">4sBII")  # magic, version, header length, header crc32
COMPRESSION_LEVEL = 6


class ProtocolError(Exception):
    pass


class KindMismatchError(ProtocolError):
    pass


class WireFormatError(ProtocolError):
    pass


class TransportError(ProtocolError):
    """The request or its response was lost."""


class RejectedError(ProtocolError):
    """The server refused the request outright (HTTP 4xx)."""


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class Chunk:
    install_id: str
    participant_id: str
    kind: str
    chunk_id: int
    compressed_payload: bytes
    payload_digest: str

    @classmethod
    def build(cls, install_id: str, participant_id: str, kind: str, chunk_id: int,
              raw_payload: bytes) -> "Chunk":
        compressed = zlib.compress(raw_payload, COMPRESSION_LEVEL)
        return cls(install_id, participant_id, kind, chunk_id, compressed, digest(compressed))

    def is_valid(self) -> bool:
        return digest(self.compressed_payload) == self.payload_digest

    def decode_records(self) -> list[SnapshotRecord]:
        """Decompress and parse; raises ProtocolError on any damage."""
        try:
            raw = zlib.decompress(self.compressed_payload)
        except zlib.error as exc:
            raise ProtocolError(f"undecompressible payload: {exc}") from None
        if raw and not raw.endswith(b"\n"):
            raise ProtocolError("payload ends mid-record")
        records = []
        for line in raw.split(b"\n")[:-1]:
            try:
                rec = parse_record(line)
            except (MalformedRecordError, UnknownRecordKindError) as exc:
                raise ProtocolError(f"bad record in chunk: {exc}") from None
            if rec.kind != self.kind or rec.install_id != self.install_id:
                raise ProtocolError("record does not belong to this chunk")
            records.append(rec)
        return records


def encode_chunk(chunk: Chunk) -> bytes:
    header = json.dumps(
        {
            "chunk_id": chunk.chunk_id,
            "digest": chunk.payload_digest,
            "install_id": chunk.install_id,
            "kind": chunk.kind,
            "participant_id": chunk.participant_id,
        },
        separators=(",", ":"),
        sort_keys=True,
    ).encode("utf-8")
    prefix = _PREFIX.pack(WIRE_MAGIC, WIRE_VERSION, len(header), zlib.crc32(header))
    return prefix + header + chunk.compressed_payload


def decode_chunk(message: bytes) -> Chunk:
    if len(message) < _PREFIX.size:
        raise WireFormatError("message shorter than prefix")
    magic, version, header_len, header_crc = _PREFIX.unpack_from(message)
    if magic != WIRE_MAGIC:
        raise WireFormatError("bad magic")
    if version != WIRE_VERSION:
        raise WireFormatError(f"unsupported wire version {version}")
    end = _PREFIX.size + header_len
    if end > len(message):
        raise WireFormatError("truncated header")
    if zlib.crc32(message[_PREFIX.size:end]) != header_crc:
        raise WireFormatError("header checksum mismatch")
    try:
        header = json.loads(message[_PREFIX.size:end])
        chunk = Chunk(
            install_id=str(header["install_id"]),
            participant_id=str(header["participant_id"]),
            kind=header["kind"],
            chunk_id=int(header["chunk_id"]),
            compressed_payload=bytes(message[end:]),
            payload_digest=str(header["digest"]),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise WireFormatError(f"bad header: {exc}") from None
    if chunk.kind not in THRESHOLDS:
        raise WireFormatError(f"unknown chunk kind {chunk.kind!r}")
    return chunk


@dataclass(frozen=True)
class Ack:
    digest: str
    status: str = "stored"  # stored | duplicate | rejected
    new_records: int = 0

    def encode(self) -> bytes:
        return json.dumps({"digest": self.digest, "status": self.status},
                          separators=(",", ":"), sort_keys=True).encode()

    @classmethod
    def decode(cls, data: bytes) -> "Ack":
        try:
            obj = json.loads(data)
            return cls(digest=str(obj["digest"]), status=str(obj.get("status", "stored")))
        except (ValueError, KeyError, TypeError, UnicodeDecodeError):
            raise WireFormatError("unreadable ack") from None


def ingest(chunk: Chunk, store: SnapshotStore) -> Ack:
    """Server side: validate, decompress and store one chunk.

    The ack always carries the digest of the payload bytes actually received.
    Damaged chunks are rejected and nothing is stored.
    """
    received = digest(chunk.compressed_payload)
    if received != chunk.payload_digest:
        logger.debug("chunk %s/%d: digest mismatch, rejected", chunk.install_id, chunk.chunk_id)
        return Ack(received, "rejected")
    if store.has_chunk(chunk.install_id, chunk.chunk_id):
        return Ack(received, "duplicate")
    try:
        records = chunk.decode_records()
    except ProtocolError as exc:
        logger.warning("chunk %s/%d rejected: %s", chunk.install_id, chunk.chunk_id, exc)
        return Ack(received, "rejected")
    added = store.add_chunk(chunk.install_id, chunk.chunk_id, records)
    return Ack(received, "stored" if added or not records else "duplicate", added)


class IngestServer:
    """Transport-independent request handler around a store."""

    def __init__(self, store: SnapshotStore):
        self.store = store

    def handle(self, message: bytes) -> tuple[int, bytes]:
        try:
            chunk = decode_chunk(message)
        except WireFormatError as exc:
            return 400, json.dumps({"error": str(exc)}).encode()
        return 200, ingest(chunk, self.store).encode()


class Transport(Protocol):
    def send(self, message: bytes) -> bytes: ...


class InProcessTransport:
    def __init__(self, server: IngestServer):
        self.server = server

    def send(self, message: bytes) -> bytes:
        status, body = self.server.handle(message)
        if status != 200:
            raise RejectedError(body.decode(errors="replace"))
        return body


@dataclass
class FaultRates:
    drop_request: float = 0.0
    corrupt_request: float = 0.0
    drop_response: float = 0.0
    corrupt_response: float = 0.0
    replay: float = 0.0

    @classmethod
    def uniform(cls, rate: float) -> "FaultRates":
        return cls(rate, rate, rate, rate, rate)


def _flip_byte(data: bytes, rng: random.Random, start: int = 0) -> bytes:
    if len(data) <= start:
        return data + b"\x00"
    buf = bytearray(data)
    pos = rng.randrange(start, len(buf))
    buf[pos] ^= 1 << rng.randrange(8)
    return bytes(buf)


class FaultyTransport:
    """Wraps a transport and injects drops, corruptions and replays.

    Decisions come from a seeded RNG, so a given schedule is reproducible.
    ``log`` records every injected fault.
    """

    def __init__(self, inner: Transport, rates: FaultRates, seed: int = 0):
        self.inner = inner
        self.rates = rates
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self.log: list[str] = []

    def _roll(self, p: float) -> bool:
        with self._lock:
            return p > 0 and self._rng.random() < p

    def send(self, message: bytes) -> bytes:
        r = self.rates
        if self._roll(r.drop_request):
            self.log.append("drop_request")
            raise TransportError("request dropped")
        if self._roll(r.corrupt_request):
            self.log.append("corrupt_request")
            with self._lock:
                message = _flip_byte(message, self._rng, start=_PREFIX.size)
        response = self.inner.send(message)
        if self._roll(r.replay):
            self.log.append("replay")
            self.inner.send(message)
        if self._roll(r.drop_response):
            self.log.append("drop_response")
            raise TransportError("response dropped")
        if self._roll(r.corrupt_response):
            self.log.append("corrupt_response")
            with self._lock:
                response = _flip_byte(response, self._rng)
        return response


@dataclass(frozen=True)
class UploadResult:
    delivered: bool
    reason: str = ""


def upload(chunk: Chunk, transport: Transport) -> UploadResult:
    """Send one chunk; ``delivered`` is True only on a matching digest ack."""
    try:
        response = transport.send(encode_chunk(chunk))
    except TransportError as exc:
        return UploadResult(False, f"transport: {exc}")
    except RejectedError as exc:
        logger.debug("server rejected chunk %s/%d: %s", chunk.install_id, chunk.chunk_id, exc)
        return UploadResult(False, "rejected")
    try:
        ack = Ack.decode(response)
    except WireFormatError:
        return UploadResult(False, "unreadable ack")
    if ack.digest != chunk.payload_digest:
        return UploadResult(False, "digest mismatch")
    if ack.status == "rejected":
        logger.warning("server rejected intact chunk %s/%d", chunk.install_id, chunk.chunk_id)
        return UploadResult(False, "rejected")
    return UploadResult(True)


class AccumulationBuffer:
    """Uncompressed record buffer for one (install, snapshot kind)."""

    def __init__(self, kind: str, install_id: str, participant_id: str,
                 chunk_ids: Callable[[], int] | None = None, threshold: int | None = None):
        if kind not in THRESHOLDS:
            raise ValueError(f"unknown snapshot kind {kind!r}")
        self.kind = kind
        self.install_id = install_id
        self.participant_id = participant_id
        self.threshold = THRESHOLDS[kind] if threshold is None else threshold
        self.data = bytearray()
        self._next_id = chunk_ids or itertools.count().__next__

    def __len__(self) -> int:
        return len(self.data)

    def append_bytes(self, line: bytes) -> Chunk | None:
        self.data += line
        if len(self.data) >= self.threshold:
            return self.rotate()
        return None

    def append(self, record: SnapshotRecord) -> Chunk | None:
        """Buffer one record; returns a chunk when the threshold is reached."""
        if record.kind != self.kind:
            raise KindMismatchError(f"{record.kind} record appended to {self.kind} buffer")
        if record.install_id != self.install_id:
            raise KindMismatchError(f"record of install {record.install_id} in buffer of {self.install_id}")
        return self.append_bytes(serialize_record(record).encode("utf-8") + b"\n")

    def rotate(self) -> Chunk | None:
        if not self.data:
            return None
        chunk = Chunk.build(self.install_id, self.participant_id, self.kind,
                            self._next_id(), bytes(self.data))
        self.data = bytearray()
        return chunk


class DeviceClient:
    """Collector-side state of one install: two buffers plus retained chunks."""

    def __init__(self, install_id: str, participant_id: str):
        self.install_id = install_id
        self.participant_id = participant_id
        counter = itertools.count()
        self.buffers = {
            kind: AccumulationBuffer(kind, install_id, participant_id, counter.__next__)
            for kind in THRESHOLDS
        }
        self.pending: list[Chunk] = []

    def record(self, record: SnapshotRecord) -> None:
        chunk = self.buffers[record.kind].append(record)
        if chunk is not None:
            self.pending.append(chunk)

    def flush(self) -> None:
        """Rotate partially filled buffers (end of the collection period)."""
        for kind in ("slow", "fast"):
            chunk = self.buffers[kind].rotate()
            if chunk is not None:
                self.pending.append(chunk)

    def sync(self, transport: Transport) -> int:
        """Try every retained chunk once; returns the number delivered."""
        kept, delivered = [], 0
        for chunk in self.pending:
            if upload(chunk, transport).delivered:
                delivered += 1
            else:
                kept.append(chunk)
        self.pending = kept
        return delivered


def deliver_streams(records: Iterable[SnapshotRecord], transport: Transport,
                    max_rounds: int = 100) -> dict[str, DeviceClient]:
    """Push record streams through per-install clients until all chunks land.

    Raises ProtocolError if chunks remain undelivered after ``max_rounds``
    retry rounds (the periodic upload alarm).
    """
    clients: dict[str, DeviceClient] = {}
    for rec in records:
        client = clients.get(rec.install_id)
        if client is None:
            client = clients[rec.install_id] = DeviceClient(rec.install_id, rec.participant_id)
        client.record(rec)
        if len(client.pending) >= 4:
            client.sync(transport)
    for client in clients.values():
        client.flush()
    for _ in range(max_rounds):
        remaining = 0
        for client in clients.values():
            client.sync(transport)
            remaining += len(client.pending)
        if remaining == 0:
            return clients
    raise ProtocolError(f"{remaining} chunks still undelivered after {max_rounds} rounds")
