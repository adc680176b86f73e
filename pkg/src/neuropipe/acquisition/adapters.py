"""Source adapters: every source is opened through ``open_stream`` and read as SampleChunks.

Three sources are built in: ``synthetic`` (a generator callable or
precomputed array), ``csv_replay`` (a recorded stream CSV) and ``socket``
(an NBS1 producer over TCP).  ``StreamOutlet`` is the matching producer.
"""
from __future__ import annotations

import logging
import socket
import threading
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .protocol import MAGIC, ChunkMessage, EventMessage, FrameDecoder, MetadataMessage, encode_frame
from .session import read_stream_csv
from .types import AcquisitionError, SampleChunk, StreamEvent, split_chunks

log = logging.getLogger(__name__)

DEFAULT_CHUNK = 32


class ConnectionRefused(AcquisitionError):
    pass


class MetadataMismatch(AcquisitionError):
    pass


def _parse_address(address: str | None) -> tuple[str, int]:
    if not address or ":" not in address:
        raise AcquisitionError(f"socket address must be host:port, got {address!r}")
    host, port = address.rsplit(":", 1)
    return host, int(port)


def _check_meta(desc, n_channels: int, srate: float | None) -> None:
    if n_channels != len(desc.channels):
        raise MetadataMismatch(f"stream {desc.name!r}: declared {len(desc.channels)} channels, "
                               f"source announces {n_channels}")
    if srate is not None and abs(srate - desc.srate) > 1e-9 * desc.srate:
        raise MetadataMismatch(f"stream {desc.name!r}: declared {desc.srate} Hz, source announces {srate} Hz")


class StreamHandle:
    """Iterable of SampleChunks for one declared stream."""

    def __init__(self, desc, chunks: Iterator[SampleChunk], close: Callable[[], None] | None = None):
        self.desc = desc
        self._chunks = chunks
        self._close = close
        self.events: list[StreamEvent] = []

    def __iter__(self) -> Iterator[SampleChunk]:
        for c in self._chunks:
            if c.n_samples:
                _check_meta(self.desc, c.n_channels, None)
            yield c

    def read_all(self) -> list[SampleChunk]:
        return list(self)

    def close(self) -> None:
        if self._close:
            self._close()
            self._close = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _open_synthetic(desc, generator) -> StreamHandle:
    if generator is None:
        raise AcquisitionError(f"synthetic stream {desc.name!r} needs a generator or data")
    if callable(generator):
        data = generator(desc)
    else:
        data = generator
    if isinstance(data, SampleChunk):
        t, values = data.t, data.values
    else:
        values = np.asarray(data, dtype=float)
        if values.ndim != 2:
            raise AcquisitionError(f"synthetic stream {desc.name!r}: expected a (samples, channels) array")
        t = np.arange(values.shape[0]) / desc.srate
    _check_meta(desc, values.shape[1], None)
    chunks = split_chunks(desc.name, t, values, desc.chunk_size or DEFAULT_CHUNK)
    return StreamHandle(desc, iter(chunks))


def _open_csv(desc, path) -> StreamHandle:
    if path is None:
        raise AcquisitionError(f"csv_replay stream {desc.name!r} needs a file path")
    try:
        chunk, labels = read_stream_csv(path, desc.name)
    except FileNotFoundError:
        raise AcquisitionError(f"csv_replay stream {desc.name!r}: {path} not found") from None
    _check_meta(desc, len(labels), None)
    if list(labels) != list(desc.channels):
        raise MetadataMismatch(f"stream {desc.name!r}: file channels {labels} differ from declared {list(desc.channels)}")
    return StreamHandle(desc, iter(split_chunks(desc.name, chunk.t, chunk.values, desc.chunk_size or DEFAULT_CHUNK)))


def _open_socket(desc, address, timeout: float) -> StreamHandle:
    host, port = _parse_address(address or desc.address)
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise ConnectionRefused(f"stream {desc.name!r}: cannot connect to {host}:{port}: {exc}") from None
    dec = FrameDecoder()
    handle = StreamHandle(desc, iter(()), sock.close)

    def frames():
        while True:
            try:
                data = sock.recv(65536)
            except socket.timeout:
                raise AcquisitionError(f"stream {desc.name!r}: read timed out") from None
            if not data:
                if dec.pending:
                    raise AcquisitionError(f"stream {desc.name!r}: connection closed mid-frame")
                return
            yield from dec.feed(data)

    it = frames()
    try:
        first = next(it, None)
    except Exception:
        sock.close()
        raise
    if not isinstance(first, MetadataMessage):
        sock.close()
        raise AcquisitionError(f"stream {desc.name!r}: producer did not announce metadata first")
    try:
        _check_meta(desc, len(first.channels), first.srate)
    except MetadataMismatch:
        sock.close()
        raise

    def chunks():
        try:
            for msg in it:
                if isinstance(msg, ChunkMessage):
                    yield SampleChunk(desc.name, msg.t, msg.values)
                elif isinstance(msg, EventMessage):
                    handle.events.append(StreamEvent(msg.t, msg.tag, msg.payload))
        finally:
            sock.close()

    handle._chunks = chunks()
    return handle


def open_stream(desc, *, generator=None, path=None, address: str | None = None, timeout: float = 5.0) -> StreamHandle:
    """Open the source named by ``desc.source``."""
    if desc.source == "synthetic":
        return _open_synthetic(desc, generator)
    if desc.source == "csv_replay":
        return _open_csv(desc, path)
    if desc.source == "socket":
        return _open_socket(desc, address, timeout)
    raise AcquisitionError(f"unknown source {desc.source!r}")


@dataclass
class _Client:
    conn: socket.socket


class StreamOutlet:
    """Minimal NBS1 producer: serves one stream to every connecting client.

    Clients receive the preamble and metadata on connect, then every chunk
    and event pushed after that moment.
    """

    def __init__(self, name: str, kind: str, channels, srate: float, units: str = "",
                 host: str = "127.0.0.1", port: int = 0):
        self.meta = MetadataMessage(name, kind, tuple(channels), float(srate), units)
        self._srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._srv.bind((host, port))
        self._srv.listen()
        self._clients: list[_Client] = []
        self._lock = threading.Lock()
        self._connected = threading.Condition(self._lock)
        self._closed = False
        self._thread = threading.Thread(target=self._accept, daemon=True)
        self._thread.start()

    @property
    def address(self) -> str:
        host, port = self._srv.getsockname()
        return f"{host}:{port}"

    def _accept(self) -> None:
        while not self._closed:
            try:
                conn, _ = self._srv.accept()
            except OSError:
                return
            conn.sendall(MAGIC + encode_frame(self.meta))
            with self._lock:
                self._clients.append(_Client(conn))
                self._connected.notify_all()

    def wait_for_clients(self, n: int = 1, timeout: float = 5.0) -> bool:
        with self._lock:
            return self._connected.wait_for(lambda: len(self._clients) >= n, timeout)

    def _send(self, data: bytes) -> None:
        with self._lock:
            alive = []
            for c in self._clients:
                try:
                    c.conn.sendall(data)
                    alive.append(c)
                except OSError:
                    log.warning("outlet %s: dropping disconnected client", self.meta.name)
                    c.conn.close()
            self._clients = alive

    def push_chunk(self, t, values) -> None:
        self._send(encode_frame(ChunkMessage(t, values)))

    def push_event(self, t: float, tag: str, payload=None) -> None:
        self._send(encode_frame(EventMessage(t, tag, payload or {})))

    def close(self) -> None:
        self._closed = True
        with self._lock:
            for c in self._clients:
                try:
                    c.conn.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
                c.conn.close()
            self._clients = []
        self._srv.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
