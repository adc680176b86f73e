import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuropipe.dsp.epochs import (Block, EpochError, Signal, SkipReport, StimulusEvent, epoch_around_events,
                                  epoch_fixed)


def ramp(seconds, srate, channels=1):
    n = int(round(seconds * srate))
    return Signal(np.arange(n * channels, dtype=float).reshape(n, channels), srate)


def test_fixed_epoch_counts():
    eps = epoch_fixed(ramp(10, 32), 1.0)
    assert len(eps) == 10 and all(e.n_samples == 32 for e in eps)
    assert len(epoch_fixed(ramp(10.5, 32), 1.0)) == 10
    uc3 = epoch_fixed(ramp(120, 60, 2), 8.0)
    assert len(uc3) == 15 and uc3[0].data.shape == (480, 2)


def test_fixed_epoch_labels_from_midpoint():
    blocks = [Block(0, 2.5, "none"), Block(2.5, 10, "math")]
    eps = epoch_fixed(ramp(4, 32), 1.0, blocks)
    assert [e.label for e in eps] == ["none", "none", "math", "math"]


def test_fixed_epoch_errors():
    with pytest.raises(EpochError):
        epoch_fixed(ramp(1, 32), 0.0)
    with pytest.raises(EpochError):
        epoch_fixed(ramp(1, 32), 0.001)


def test_event_epoch_length_and_start():
    sig = ramp(20, 250)
    eps = epoch_around_events(sig, [StimulusEvent(10.0, "target")], 0.1, 0.8)
    assert len(eps) == 1
    assert eps[0].n_samples == 225
    assert eps[0].t0 == pytest.approx(9.9)
    assert eps[0].data[0, 0] == 9.9 * 250
    assert eps[0].label == "target"
    assert epoch_around_events(sig, [StimulusEvent(10.0)], 0.1, 0.8, n_samples=232)[0].n_samples == 232


def test_event_epoch_skips():
    sig = ramp(20, 250)
    assert epoch_around_events(sig, [], 0.1, 0.8) == []
    rep = SkipReport()
    assert epoch_around_events(sig, [StimulusEvent(0.05)], 0.1, 0.8, report=rep) == []
    assert rep.skipped == 1 and rep.times == [0.05]


@settings(max_examples=50, deadline=None)
@given(seconds=st.floats(1.0, 30.0), srate=st.sampled_from([32.0, 60.0, 125.0, 250.0]), dur=st.floats(0.1, 4.0))
def test_fixed_epochs_partition_prefix(seconds, srate, dur):
    sig = ramp(seconds, srate)
    eps = epoch_fixed(sig, dur)
    n = int(round(dur * srate))
    if n < 1:
        return
    assert all(e.n_samples == n for e in eps)
    if eps and abs(dur * srate - n) < 1e-9:
        joined = np.concatenate([e.data for e in eps])
        np.testing.assert_array_equal(joined, sig.data[: joined.shape[0]])
