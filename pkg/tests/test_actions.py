import io
import json
import socket
import threading

import pytest

from neuropipe.acquisition.protocol import MAGIC, EventMessage, decode_frame
from neuropipe.acquisition.session import read_events_csv
from neuropipe.config import ActionRule
from neuropipe.detection import ActionCommand, ActionMapper, DetectionEvent, map_event_to_action
from neuropipe.detection.actions import CsvSink, SinkError, SocketSink, StdoutSink, emit_action

DROWSY = ActionRule("alert.drowsiness", label="drowsy", min_confidence=0.5, debounce=10.0)


def event(t, label="drowsy", conf=0.9):
    return DetectionEvent(t, label, None, conf, "uc3", "drowsy/rforest")


def test_rule_fires_and_debounces():
    mapper = ActionMapper([DROWSY])
    cmd = mapper(event(0.0))
    assert cmd.action == "alert.drowsiness" and cmd.payload["confidence"] == 0.9
    assert mapper(event(1.0)) is None
    assert mapper(event(10.5)).t == 10.5


def test_low_confidence_and_other_label():
    assert map_event_to_action(event(0.0, conf=0.4), [DROWSY]) is None
    assert map_event_to_action(event(0.0, label="awake"), [DROWSY]) is None


def test_regression_rule():
    rule = ActionRule("alert.drowsiness", min_score=0.15)
    ev = DetectionEvent(2.0, None, 0.3, None, "uc3", "perclos/linreg")
    assert map_event_to_action(ev, [rule]).payload["score"] == 0.3
    low = DetectionEvent(2.0, None, 0.1, None, "uc3", "perclos/linreg")
    assert map_event_to_action(low, [rule]) is None


def test_first_match_wins():
    rules = [ActionRule("auth.granted", label="legitimate", min_confidence=0.5),
             ActionRule("auth.denied")]
    assert map_event_to_action(event(0, "legitimate"), rules).action == "auth.granted"
    assert map_event_to_action(event(0, "impostor"), rules).action == "auth.denied"


def test_event_confidence_iff_label():
    with pytest.raises(ValueError):
        DetectionEvent(0.0, "a", None, None, "s", "m")


def test_stdout_sink_writes_json_line():
    buf = io.StringIO()
    rec = emit_action(StdoutSink(buf), ActionCommand(1.5, "alert.x", {"a": 1}))
    assert json.loads(buf.getvalue()) == {"t": 1.5, "action": "alert.x", "payload": {"a": 1}}
    assert buf.getvalue().count("\n") == 1
    assert (rec.t, rec.sink) == (1.5, "stdout")


def test_csv_sink_appends(tmp_path):
    sink = CsvSink(tmp_path / "actions.csv")
    emit_action(sink, ActionCommand(1.0, "a", {"k": 1}))
    emit_action(sink, ActionCommand(2.0, "b"))
    evs = read_events_csv(tmp_path / "actions.csv")
    assert [(e.t, e.tag, e.payload) for e in evs] == [(1.0, "a", {"k": 1}), (2.0, "b", {})]


def test_socket_sink_loopback():
    srv = socket.socket()
    srv.bind(("127.0.0.1", 0))
    srv.listen()
    got = bytearray()

    def serve():
        conn, _ = srv.accept()
        while chunk := conn.recv(4096):
            got.extend(chunk)
        conn.close()

    th = threading.Thread(target=serve)
    th.start()
    sink = SocketSink("127.0.0.1:%d" % srv.getsockname()[1])
    cmd = ActionCommand(3.25, "auth.granted", {"subject": "s01"})
    assert emit_action(sink, cmd).sink == "socket"
    sink.close()
    th.join(5)
    srv.close()
    assert bytes(got[:4]) == MAGIC
    assert got[4] == 0x03
    assert decode_frame(bytes(got[4:])) == EventMessage(3.25, "auth.granted", {"subject": "s01"})


def test_unreachable_socket_retries_then_fails():
    srv = socket.socket()
    srv.bind(("127.0.0.1", 0))
    port = srv.getsockname()[1]
    srv.close()
    sink = SocketSink(f"127.0.0.1:{port}", timeout=0.2)
    with pytest.raises(SinkError, match="3 attempts"):
        emit_action(sink, ActionCommand(0.0, "x"))
