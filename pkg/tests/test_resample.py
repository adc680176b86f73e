import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tone
from neuropipe.dsp.resample import ResampleError, StreamingResampler, rational_ratio, resample, resample_causal


def amplitude_at(x, srate, freq):
    t = np.arange(x.size) / srate
    basis = np.column_stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)])
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return float(np.hypot(*coef))


def trim(x, k=100):
    return x[k:-k]


def test_halving_keeps_tone():
    x = tone(10, 250, 5000)
    y = resample(x, 250, 125)
    assert y.size == 2500
    assert amplitude_at(trim(y), 125, 10) == pytest.approx(1.0, rel=0.01)
    np.testing.assert_allclose(trim(y), trim(tone(10, 125, 2500)), atol=0.01)


def test_identity_ratio():
    x = np.random.default_rng(0).normal(size=(500, 2))
    np.testing.assert_allclose(resample(x, 250, 250), x, atol=1e-9)


def test_uc3_rate_removes_out_of_band_tone():
    x = tone(40, 250, 250 * 20)
    y = resample(x, 250, 60)
    assert y.size == round(x.size * 60 / 250)
    assert np.sqrt(np.mean(trim(y) ** 2)) < 0.05 * np.sqrt(np.mean(x ** 2))


@pytest.mark.parametrize("rate_in,rate_out", [(250, 32), (250, 60), (125, 60), (250, 128)])
@pytest.mark.parametrize("frac", [0.05, 0.2, 0.35])
def test_passband_energy_preserved(rate_in, rate_out, frac):
    # the anti-alias passband ends about 0.37 x the output rate
    freq = frac * rate_out
    x = tone(freq, rate_in, rate_in * 20)
    y = trim(resample(x, rate_in, rate_out))
    assert np.mean(y ** 2) == pytest.approx(np.mean(x ** 2), rel=0.05)


def test_irrational_ratio():
    with pytest.raises(ResampleError):
        rational_ratio(250, 250 * np.pi)
    assert rational_ratio(250, 60) == (6, 25)


@settings(max_examples=25, deadline=None)
@given(sizes=st.lists(st.integers(1, 200), min_size=1, max_size=30), rate_out=st.sampled_from([32.0, 60.0, 125.0]))
def test_streaming_resampler_is_chunking_invariant(sizes, rate_out):
    x = np.random.default_rng(len(sizes)).normal(size=(sum(sizes), 2))
    r = StreamingResampler(250.0, rate_out, 2)
    out, s = [], 0
    for n in sizes:
        out.append(r.process(x[s:s + n]))
        s += n
    np.testing.assert_allclose(np.concatenate(out), resample_causal(x, 250.0, rate_out), atol=1e-12)
