"""NBS1 wire protocol.

A connection starts with the 4-byte magic ``b"NBS1"``, followed by frames::

    u8 type | u32 payload length | payload          (little-endian)

    0x01 metadata  UTF-8 JSON {"name", "kind", "channels", "srate", "units"}
    0x02 chunk     u32 sample_count, then per sample: f64 t, channels x f64
    0x03 event     f64 t, u16 tag length, UTF-8 tag, u32 payload length, UTF-8 JSON
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np

from .types import AcquisitionError

MAGIC = b"NBS1"
FRAME_HEADER = struct.Struct("<BI")
MAX_PAYLOAD = 64 * 1024 * 1024

TYPE_METADATA = 0x01
TYPE_CHUNK = 0x02
TYPE_EVENT = 0x03


class ProtocolError(AcquisitionError, ValueError):
    pass


class BadMagic(ProtocolError):
    pass


class LengthOverflow(ProtocolError):
    pass


class TruncatedFrame(ProtocolError):
    pass


class UnknownFrameType(ProtocolError):
    pass


@dataclass(frozen=True)
class MetadataMessage:
    name: str
    kind: str
    channels: tuple[str, ...]
    srate: float
    units: str = ""

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))


@dataclass(frozen=True, eq=False)
class ChunkMessage:
    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype="<f8").reshape(-1)
        v = np.ascontiguousarray(self.values, dtype="<f8")
        if v.ndim != 2 or v.shape[0] != t.shape[0]:
            raise ProtocolError("chunk values must be (samples, channels) matching timestamps")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        if not isinstance(other, ChunkMessage):
            return NotImplemented
        return (self.values.shape == other.values.shape and self.t.tobytes() == other.t.tobytes()
                and self.values.tobytes() == other.values.tobytes())

    __hash__ = None


@dataclass(frozen=True)
class EventMessage:
    t: float
    tag: str
    payload: dict[str, Any] = field(default_factory=dict)


Message = MetadataMessage | ChunkMessage | EventMessage


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _frame(ftype: int, payload: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise LengthOverflow(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return FRAME_HEADER.pack(ftype, len(payload)) + payload


def encode_frame(msg: Message) -> bytes:
    if isinstance(msg, MetadataMessage):
        return _frame(TYPE_METADATA, _json({
            "name": msg.name, "kind": msg.kind, "channels": list(msg.channels),
            "srate": msg.srate, "units": msg.units,
        }))
    if isinstance(msg, ChunkMessage):
        n = msg.t.shape[0]
        body = np.concatenate([msg.t[:, None], msg.values], axis=1).astype("<f8").tobytes()
        return _frame(TYPE_CHUNK, struct.pack("<I", n) + body)
    if isinstance(msg, EventMessage):
        tag = msg.tag.encode("utf-8")
        if len(tag) > 0xFFFF:
            raise LengthOverflow("event tag longer than 65535 bytes")
        body = _json(msg.payload)
        return _frame(TYPE_EVENT, struct.pack("<dH", msg.t, len(tag)) + tag + struct.pack("<I", len(body)) + body)
    raise TypeError(f"cannot encode {type(msg).__name__}")


def _decode_payload(ftype: int, payload: bytes, channels: int | None) -> Message:
    if ftype == TYPE_METADATA:
        try:
            d = json.loads(payload.decode("utf-8"))
            return MetadataMessage(d["name"], d["kind"], tuple(d["channels"]), float(d["srate"]), d.get("units", ""))
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed metadata payload: {exc}") from None
    if ftype == TYPE_CHUNK:
        if len(payload) < 4:
            raise TruncatedFrame("chunk payload shorter than its sample count")
        (n,) = struct.unpack_from("<I", payload)
        body = len(payload) - 4
        if n == 0:
            if body:
                raise ProtocolError("empty chunk carries sample bytes")
            return ChunkMessage(np.zeros(0), np.zeros((0, channels or 0)))
        rec, rem = divmod(body, n)
        if rem or rec < 8 or rec % 8:
            raise TruncatedFrame(f"chunk body of {body} bytes does not hold {n} whole records")
        c = rec // 8 - 1
        if channels is not None and c != channels:
            raise ProtocolError(f"chunk has {c} channels, expected {channels}")
        arr = np.frombuffer(payload, dtype="<f8", offset=4).reshape(n, c + 1)
        return ChunkMessage(arr[:, 0].copy(), arr[:, 1:].copy())
    if ftype == TYPE_EVENT:
        try:
            t, tlen = struct.unpack_from("<dH", payload)
            off = 10
            tag = payload[off:off + tlen]
            if len(tag) < tlen:
                raise TruncatedFrame("event tag truncated")
            off += tlen
            (plen,) = struct.unpack_from("<I", payload, off)
            off += 4
            body = payload[off:off + plen]
            if len(body) < plen:
                raise TruncatedFrame("event payload truncated")
            if off + plen != len(payload):
                raise ProtocolError("event frame has trailing bytes")
            return EventMessage(t, tag.decode("utf-8"), json.loads(body.decode("utf-8")) if plen else {})
        except struct.error:
            raise TruncatedFrame("event frame truncated") from None
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"malformed event payload: {exc}") from None
    raise UnknownFrameType(f"unknown frame type 0x{ftype:02x}")


def read_frame(buf: bytes, offset: int = 0, channels: int | None = None) -> tuple[Message, int]:
    """Decode one frame at ``offset``; return the message and the next offset."""
    if len(buf) - offset < FRAME_HEADER.size:
        raise TruncatedFrame("incomplete frame header")
    ftype, length = FRAME_HEADER.unpack_from(buf, offset)
    if ftype not in (TYPE_METADATA, TYPE_CHUNK, TYPE_EVENT):
        raise UnknownFrameType(f"unknown frame type 0x{ftype:02x}")
    if length > MAX_PAYLOAD:
        raise LengthOverflow(f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
    start = offset + FRAME_HEADER.size
    if len(buf) - start < length:
        raise TruncatedFrame(f"payload truncated: {len(buf) - start} of {length} bytes")
    payload = bytes(buf[start:start + length])
    return _decode_payload(ftype, payload, channels), start + length


def decode_frame(data: bytes, channels: int | None = None) -> Message:
    """Decode exactly one frame (no preamble)."""
    msg, end = read_frame(data, 0, channels)
    if end != len(data):
        raise ProtocolError(f"{len(data) - end} trailing bytes after frame")
    return msg


def encode_stream(messages) -> bytes:
    return MAGIC + b"".join(encode_frame(m) for m in messages)


def decode_stream(data: bytes) -> list[Message]:
    dec = FrameDecoder()
    out = list(dec.feed(data))
    if dec.pending:
        raise TruncatedFrame(f"{dec.pending} bytes of an incomplete frame at end of stream")
    return out


class FrameDecoder:
    """Incremental decoder for a byte stream starting with the preamble."""

    def __init__(self, expect_magic: bool = True):
        self._buf = bytearray()
        self._magic_ok = not expect_magic
        self.channels: int | None = None

    @property
    def pending(self) -> int:
        return len(self._buf)

    def feed(self, data: bytes) -> Iterator[Message]:
        self._buf.extend(data)
        if not self._magic_ok:
            if len(self._buf) < len(MAGIC):
                return
            if bytes(self._buf[:4]) != MAGIC:
                raise BadMagic(f"bad magic {bytes(self._buf[:4])!r}, expected {MAGIC!r}")
            del self._buf[:4]
            self._magic_ok = True
        while len(self._buf) >= FRAME_HEADER.size:
            ftype, length = FRAME_HEADER.unpack_from(self._buf, 0)
            if ftype not in (TYPE_METADATA, TYPE_CHUNK, TYPE_EVENT):
                raise UnknownFrameType(f"unknown frame type 0x{ftype:02x}")
            if length > MAX_PAYLOAD:
                raise LengthOverflow(f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
            if len(self._buf) < FRAME_HEADER.size + length:
                return
            msg, end = read_frame(self._buf, 0, self.channels)
            del self._buf[:end]
            if isinstance(msg, MetadataMessage):
                self.channels = len(msg.channels)
            yield msg
