"""Map detection events to actuator commands and deliver them to sinks."""
from __future__ import annotations

import json
import logging
import socket
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence, TextIO

from .. import NeuropipeError
from ..acquisition.protocol import MAGIC, EventMessage, encode_frame
from ..acquisition.session import append_events_csv
from ..acquisition.types import StreamEvent
from .training import DetectionEvent

log = logging.getLogger(__name__)

RETRIES = 3
BACKOFF = 0.1


class SinkError(NeuropipeError):
    pass


@dataclass(frozen=True)
class ActionCommand:
    t: float
    action: str
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"t": self.t, "action": self.action, "payload": self.payload}


@dataclass(frozen=True)
class Receipt:
    t: float
    sink: str
    attempts: int = 1


def _matches(rule, ev: DetectionEvent) -> bool:
    if ev.label is not None:
        if rule.min_score is not None:
            return False
        return (rule.label is None or rule.label == ev.label) and ev.confidence >= rule.min_confidence
    if rule.label is not None:
        return False
    return rule.min_score is None or ev.score >= rule.min_score


class ActionMapper:
    """First matching rule wins; a debounced rule swallows the event instead of passing it on."""

    def __init__(self, rules: Sequence):
        self.rules = list(rules)
        self._last: dict[int, float] = {}

    def __call__(self, ev: DetectionEvent) -> ActionCommand | None:
        for i, rule in enumerate(self.rules):
            if not _matches(rule, ev):
                continue
            last = self._last.get(i)
            if last is not None and ev.t - last < rule.debounce:
                return None
            self._last[i] = ev.t
            payload = {"model": ev.model_id, "scenario": ev.scenario_id}
            if ev.label is not None:
                payload.update(label=ev.label, confidence=ev.confidence)
            else:
                payload["score"] = ev.score
            payload.update(rule.payload)
            return ActionCommand(ev.t, rule.action, payload)
        return None


def map_event_to_action(ev: DetectionEvent, rules: Sequence, mapper: ActionMapper | None = None) -> ActionCommand | None:
    return (mapper or ActionMapper(rules))(ev)


class StdoutSink:
    name = "stdout"

    def __init__(self, stream: TextIO | None = None):
        self.stream = stream

    def send(self, cmd: ActionCommand) -> int:
        out = self.stream or sys.stdout
        out.write(json.dumps(cmd.to_dict(), sort_keys=True) + "\n")
        out.flush()
        return 1

    def close(self) -> None:
        pass


class CsvSink:
    name = "csv"

    def __init__(self, path):
        self.path = Path(path)

    def send(self, cmd: ActionCommand) -> int:
        append_events_csv(self.path, [StreamEvent(cmd.t, cmd.action, cmd.payload)])
        return 1

    def close(self) -> None:
        pass


class SocketSink:
    """Sends each command as an NBS1 event frame over one TCP connection."""
    name = "socket"

    def __init__(self, address: str, timeout: float = 1.0, retries: int = RETRIES, backoff: float = BACKOFF):
        host, port = address.rsplit(":", 1)
        self.addr = (host, int(port))
        self.timeout, self.retries, self.backoff = timeout, retries, backoff
        self._sock: socket.socket | None = None

    def send(self, cmd: ActionCommand) -> int:
        frame = encode_frame(EventMessage(cmd.t, cmd.action, cmd.payload))
        last = None
        for attempt in range(1, self.retries + 1):
            try:
                if self._sock is None:
                    self._sock = socket.create_connection(self.addr, timeout=self.timeout)
                    self._sock.sendall(MAGIC)
                self._sock.sendall(frame)
                return attempt
            except OSError as exc:
                last = exc
                self.close()
                log.warning("socket sink %s:%d attempt %d failed: %s", *self.addr, attempt, exc)
                if attempt < self.retries:
                    time.sleep(self.backoff)
        raise SinkError(f"socket sink {self.addr[0]}:{self.addr[1]} unreachable after {self.retries} attempts: {last}")

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None


def emit_action(sink, cmd: ActionCommand) -> Receipt:
    attempts = sink.send(cmd)
    return Receipt(cmd.t, sink.name, attempts)
