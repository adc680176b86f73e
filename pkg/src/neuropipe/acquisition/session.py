"""Session persistence: one CSV per stream plus an event log.

Layout::

    <dir>/<session>/<stream>.csv     header  t,<label>,...
    <dir>/<session>/events.csv       header  t,tag,payload   (payload is JSON)
    <dir>/<session>/session.json     SessionRecord
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd

from .types import AcquisitionError, SampleChunk, StreamEvent

PRECISION = 6
FLOAT_FMT = f"%.{PRECISION}f"


class SessionFormatError(AcquisitionError, ValueError):
    pass


@dataclass
class SessionRecord:
    scenario_id: str
    directory: str
    streams: dict[str, str]                 # stream name -> CSV path (relative to directory)
    events: str = "events.csv"
    start_time: float = 0.0
    end_time: float = 0.0
    channels: dict[str, list[str]] = field(default_factory=dict)
    srates: dict[str, float] = field(default_factory=dict)
    kinds: dict[str, str] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def stream_path(self, name: str) -> Path:
        return Path(self.directory) / self.streams[name]

    @property
    def events_path(self) -> Path:
        return Path(self.directory) / self.events

    def save(self) -> Path:
        path = Path(self.directory) / "session.json"
        d = asdict(self)
        d.pop("directory")
        path.write_text(json.dumps(d, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, directory) -> "SessionRecord":
        directory = Path(directory)
        path = directory / "session.json"
        if not path.exists():
            raise SessionFormatError(f"{directory} has no session.json")
        d = json.loads(path.read_text())
        rec = cls(directory=str(directory), **d)
        for name in rec.streams:
            if not rec.stream_path(name).exists():
                raise SessionFormatError(f"session {directory}: missing {rec.streams[name]}")
        if not rec.events_path.exists():
            raise SessionFormatError(f"session {directory}: missing {rec.events}")
        return rec


def write_stream_csv(path, chunk: SampleChunk, labels: Sequence[str]) -> None:
    labels = list(labels)
    if chunk.n_samples and chunk.n_channels != len(labels):
        raise SessionFormatError(f"{chunk.stream}: {chunk.n_channels} columns but {len(labels)} labels")
    cols = ["t"] + labels
    data = np.column_stack([chunk.t, chunk.values]) if chunk.n_samples else np.zeros((0, len(cols)))
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow(cols)
        np.savetxt(fh, data, fmt=FLOAT_FMT, delimiter=",")


def read_stream_csv(path, stream: str | None = None, labels: Sequence[str] | None = None) -> tuple[SampleChunk, list[str]]:
    """Read one stream CSV; rows with the wrong number of fields are errors."""
    path = Path(path)
    stream = stream or path.stem
    with open(path, newline="") as fh:
        header = next(csv.reader([fh.readline()]), None)
    if not header or header[0] != "t":
        raise SessionFormatError(f"{path}: header must start with 't'")
    cols = header[1:]
    if labels is not None and list(labels) != cols:
        raise SessionFormatError(f"{path}: header {cols} does not match declared channels {list(labels)}")
    try:
        df = pd.read_csv(path, dtype=float, engine="c", skip_blank_lines=False)
    except pd.errors.ParserError as exc:
        raise SessionFormatError(f"{path}: malformed row: {exc}") from None
    except ValueError as exc:
        raise SessionFormatError(f"{path}: non-numeric field: {exc}") from None
    arr = df.to_numpy(dtype=float)
    bad = np.flatnonzero(np.isnan(arr).any(axis=1)) if arr.size else np.zeros(0, int)
    if bad.size:
        line = int(bad[0]) + 2
        raise SessionFormatError(f"{path}: line {line}: expected {len(header)} fields")
    return SampleChunk(stream, arr[:, 0], arr[:, 1:]), cols


def write_events_csv(path, events: Sequence[StreamEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "tag", "payload"])
        for ev in events:
            w.writerow([FLOAT_FMT % ev.t, ev.tag, json.dumps(ev.payload, sort_keys=True, separators=(",", ":"))])


def append_events_csv(path, events: Sequence[StreamEvent]) -> None:
    path = Path(path)
    if not path.exists():
        write_events_csv(path, events)
        return
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for ev in events:
            w.writerow([FLOAT_FMT % ev.t, ev.tag, json.dumps(ev.payload, sort_keys=True, separators=(",", ":"))])


def read_events_csv(path) -> list[StreamEvent]:
    out = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["t", "tag", "payload"]:
            raise SessionFormatError(f"{path}: events header must be t,tag,payload")
        for lineno, row in enumerate(r, start=2):
            if len(row) != 3:
                raise SessionFormatError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            try:
                out.append(StreamEvent(float(row[0]), row[1], json.loads(row[2]) if row[2] else {}))
            except (ValueError, json.JSONDecodeError) as exc:
                raise SessionFormatError(f"{path}: line {lineno}: {exc}") from None
    return out


def write_session_csv(root, session: str, streams: Mapping[str, SampleChunk], channels: Mapping[str, Sequence[str]],
                      events: Sequence[StreamEvent] = (), scenario_id: str = "", srates: Mapping[str, float] | None = None,
                      kinds: Mapping[str, str] | None = None, start_time: float = 0.0, end_time: float = 0.0,
                      meta: Mapping[str, Any] | None = None) -> SessionRecord:
    """Write every stream and the event log under ``root/session``."""
    directory = Path(root) / session
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SessionFormatError(f"cannot create {directory}: {exc}") from None
    paths = {}
    for name, chunk in streams.items():
        fname = f"{name}.csv"
        write_stream_csv(directory / fname, chunk, channels[name])
        paths[name] = fname
    write_events_csv(directory / "events.csv", events)
    rec = SessionRecord(scenario_id, str(directory), paths, "events.csv", float(start_time), float(end_time),
                        {k: list(v) for k, v in channels.items()}, dict(srates or {}), dict(kinds or {}),
                        dict(meta or {}))
    rec.save()
    return rec


def read_session_csv(record) -> tuple[dict[str, SampleChunk], list[StreamEvent]]:
    """Load every stream and the event log of a session (record or directory)."""
    if not isinstance(record, SessionRecord):
        record = SessionRecord.load(record)
    streams = {}
    for name in record.streams:
        chunk, _ = read_stream_csv(record.stream_path(name), name, record.channels.get(name))
        streams[name] = chunk
    return streams, read_events_csv(record.events_path)
