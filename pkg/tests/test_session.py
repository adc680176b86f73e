import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuropipe.acquisition.session import (SessionFormatError, read_events_csv, read_session_csv, read_stream_csv,
                                           write_events_csv, write_session_csv, write_stream_csv)
from neuropipe.acquisition.types import SampleChunk, StreamEvent
from neuropipe.config import load_scenario
from neuropipe.synth import synthesize, uc4_script


def test_header_and_rows(tmp_path):
    chunk = SampleChunk("x", np.arange(10) / 10, np.arange(20.0).reshape(10, 2))
    path = tmp_path / "x.csv"
    write_stream_csv(path, chunk, ["ch1", "ch2"])
    lines = path.read_text().splitlines()
    assert lines[0] == "t,ch1,ch2"
    assert len(lines) == 11
    assert lines[1] == "0.000000,0.000000,1.000000"


def test_short_row_names_line(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("t,a,b,c\n0.0,1,2,3\n0.1,1,2\n")
    with pytest.raises(SessionFormatError, match="line 3"):
        read_stream_csv(path)


def test_events_round_trip(tmp_path):
    evs = [StreamEvent(0.5, "stim", {"label": "target", "id": 3}), StreamEvent(1.25, "block", {})]
    write_events_csv(tmp_path / "e.csv", evs)
    assert read_events_csv(tmp_path / "e.csv") == evs


def test_uc4_session_round_trip(tmp_path):
    cfg = load_scenario("uc4")
    script = uc4_script(n_tests=1, seed=3, subject="s01", trait_seed=5)
    sim = synthesize(script, cfg)
    rec = write_session_csv(tmp_path, "a", sim.streams, sim.channels, sim.events, cfg.scenario_id)
    streams, events = read_session_csv(rec.directory)
    for name, chunk in sim.streams.items():
        np.testing.assert_array_equal(streams[name].t, np.round(chunk.t, 6))
        np.testing.assert_array_equal(streams[name].values, np.round(chunk.values, 6))
    assert [e.tag for e in events] == [e.tag for e in sim.events]
    # a second write of the loaded data is byte-identical
    rec2 = write_session_csv(tmp_path, "b", streams, sim.channels, events)
    for name in streams:
        assert rec2.stream_path(name).read_bytes() == rec.stream_path(name).read_bytes()
    assert rec2.events_path.read_bytes() == rec.events_path.read_bytes()


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 30), c=st.integers(1, 5), seed=st.integers(0, 10_000))
def test_csv_round_trip_at_serialized_precision(tmp_path_factory, n, c, seed):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(0.001, 1.0, n)) + rng.uniform(0, 1e4)
    t = np.round(t, 6)
    v = rng.normal(scale=100, size=(n, c))
    chunk = SampleChunk("s", t, v)
    d = tmp_path_factory.mktemp("rt")
    rec = write_session_csv(d, "sess", {"s": chunk}, {"s": [f"c{i}" for i in range(c)]})
    back, _ = read_session_csv(rec.directory)
    np.testing.assert_array_equal(back["s"].t, t)
    np.testing.assert_allclose(back["s"].values, v, rtol=0, atol=5e-7 + 1e-12)
    np.testing.assert_array_equal(back["s"].values, np.array([[float(f"{x:.6f}") for x in row] for row in v]))
