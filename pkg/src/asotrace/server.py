"""HTTP ingestion endpoint and the matching client transport.

Clients POST one encoded chunk to ``/upload``; the body of a 200 response is
the encoded ack. Malformed chunks get a 400 and the server keeps running.
"""

from __future__ import annotations

import logging
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .protocol import IngestServer, RejectedError, TransportError
from .store import SnapshotStore

logger = logging.getLogger(__name__)

UPLOAD_PATH = "/upload"
MAX_BODY = 16 * 1024 * 1024


class _Handler(BaseHTTPRequestHandler):
    server: "IngestHTTPServer"

    def do_POST(self):
        if self.path != UPLOAD_PATH:
            self._reply(404, b'{"error": "unknown path"}')
            return
        try:
            length = int(self.headers.get("Content-Length", ""))
        except ValueError:
            self._reply(411, b'{"error": "missing content length"}')
            return
        if not 0 <= length <= MAX_BODY:
            self._reply(413, b'{"error": "body too large"}')
            return
        body = self.rfile.read(length)
        if len(body) != length:
            self._reply(400, b'{"error": "truncated body"}')
            return
        status, reply = self.server.ingest.handle(body)
        self._reply(status, reply)

    def _reply(self, status: int, body: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        logger.debug("%s " + fmt, self.address_string(), *args)


class IngestHTTPServer(ThreadingHTTPServer):
    """Threaded server; ``server_close`` waits for in-flight requests."""

    daemon_threads = False
    block_on_close = True

    def __init__(self, address: tuple[str, int], store: SnapshotStore):
        super().__init__(address, _Handler)
        self.store = store
        self.ingest = IngestServer(store)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}{UPLOAD_PATH}"


def start(store_dir: str | Path, host: str = "127.0.0.1", port: int = 0) -> tuple[IngestHTTPServer, threading.Thread]:
    """Start serving in a background thread; raises OSError on bind failure."""
    store = SnapshotStore(store_dir)
    try:
        server = IngestHTTPServer((host, port), store)
    except OSError:
        store.close()
        raise
    thread = threading.Thread(target=server.serve_forever, name="asotrace-ingest", daemon=True)
    thread.start()
    return server, thread


def stop(server: IngestHTTPServer, thread: threading.Thread, write_canonical: bool = True) -> None:
    """Stop accepting, finish in-flight requests, then close the store."""
    server.shutdown()
    thread.join()
    server.server_close()
    server.store.close()
    if write_canonical and server.store.directory is not None:
        server.store.write_canonical(server.store.directory)


class HttpTransport:
    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def send(self, message: bytes) -> bytes:
        req = urllib.request.Request(self.url, data=message, method="POST",
                                     headers={"Content-Type": "application/octet-stream"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read()
        except urllib.error.HTTPError as exc:
            body = exc.read()
            if exc.code == 400:
                raise RejectedError(body.decode(errors="replace")) from None
            raise TransportError(f"HTTP {exc.code}") from None
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(str(exc)) from None
