import numpy as np
import pytest

from neuropipe.acquisition.session import read_session_csv
from neuropipe.acquisition.types import concat_chunks
from neuropipe.config import load_scenario
from neuropipe.dsp.epochs import Signal
from neuropipe.features.spectral import BANDS, band_power, welch_psd
from neuropipe.synth import (ErpTemplate, SessionScript, SynthError, gen_background_eeg, gen_eog_blinks,
                             gen_eye_openness, inject_erp, simulate_session, synthesize, uc1_script, uc4_script)

CH = ["Fz", "Cz", "Pz"]


def dft_band_power(x, srate, band):
    """Band power from a one-shot periodogram of the whole record."""
    n = x.shape[0]
    spec = np.abs(np.fft.rfft(x - x.mean(axis=0), axis=0)) ** 2 / n**2
    spec[1:] *= 2
    if n % 2 == 0:
        spec[-1] /= 2
    f = np.fft.rfftfreq(n, 1 / srate)
    low, high = band
    return spec[(f >= low) & (f < high)].sum(axis=0)


def test_band_profile_within_ten_percent():
    profile = {"delta": 20.0, "theta": 10.0, "alpha": 12.0, "beta": 6.0, "gamma": 2.0}
    x = concat_chunks(gen_background_eeg(CH, 250.0, 120.0, profile, seed=4)).values
    psd = welch_psd(x, 250.0, segment_len=4096)
    for band, p in profile.items():
        direct = dft_band_power(x, 250.0, BANDS[band])
        welch = band_power(psd, band)
        np.testing.assert_allclose(direct, p, rtol=0.10)
        np.testing.assert_allclose(welch, p, rtol=0.10)


def test_alpha_only_profile_concentrates_power():
    x = concat_chunks(gen_background_eeg(CH, 250.0, 60.0, {"alpha": 5.0}, seed=1)).values
    inside = dft_band_power(x, 250.0, (8, 13))
    total = dft_band_power(x, 250.0, (0.5, 60))
    assert np.all(inside / total >= 0.9)
    psd = welch_psd(x, 250.0, segment_len=1024)
    assert np.all(band_power(psd, "alpha") / band_power(psd, (0.5, 60)) >= 0.9)


def test_zero_profile_and_determinism():
    zero = concat_chunks(gen_background_eeg(CH, 250.0, 10.0, {b: 0.0 for b in BANDS}, seed=1)).values
    assert not zero.any()
    a = concat_chunks(gen_background_eeg(CH, 250.0, 10.0, seed=7)).values
    b = concat_chunks(gen_background_eeg(CH, 250.0, 10.0, seed=7)).values
    np.testing.assert_array_equal(a, b)


def test_band_above_nyquist():
    with pytest.raises(SynthError, match="Nyquist"):
        gen_background_eeg(CH, 64.0, 5.0, {"gamma": 1.0})


def test_erp_peak_on_zero_baseline():
    sig = Signal(np.zeros((750, 1)), 250.0)
    out = inject_erp(sig, [(1.0, True)], ErpTemplate(latency=0.3, width=0.04, amplitude=1.0))
    assert out.times[np.argmax(out.data[:, 0])] == pytest.approx(1.3, abs=1 / 250)
    assert out.data.max() == pytest.approx(1.0, abs=1e-3)
    assert inject_erp(sig, [], ErpTemplate()).data.tolist() == sig.data.tolist()
    untouched = inject_erp(sig, [(1.0, False)], ErpTemplate())
    assert not untouched.data.any()


def test_erp_past_signal_end():
    with pytest.raises(SynthError):
        inject_erp(Signal(np.zeros((250, 1)), 250.0), [(0.9, True)], ErpTemplate())


def test_erp_grand_average_difference():
    srate = 250.0
    rng = np.random.default_rng(0)
    times = 1.0 + np.arange(200) * 1.0
    target = np.zeros(200, bool)
    target[rng.choice(200, 40, replace=False)] = True
    bg = concat_chunks(gen_background_eeg(["Pz"], srate, 202.0, seed=3)).values
    out = inject_erp(Signal(bg, srate), list(zip(times, target)), ErpTemplate(amplitude=4.0)).data[:, 0]
    idx = (times * srate).astype(int)
    ep = np.stack([out[i:i + int(0.8 * srate)] for i in idx])
    diff = ep[target].mean(axis=0) - ep[~target].mean(axis=0)
    peak_t = np.argmax(diff) / srate
    assert 0.25 <= peak_t <= 0.5
    assert diff.max() > 0


def count_peaks(x, threshold):
    above = x > threshold
    return int(np.count_nonzero(above[1:] & ~above[:-1]) + above[0])


def test_blink_counts():
    flat = concat_chunks(gen_eog_blinks(250.0, 60.0, 0.0, seed=1)).values
    assert not flat.any()
    for seed in range(5):
        x = concat_chunks(gen_eog_blinks(250.0, 300.0, 12.0, seed=seed)).values[:, 0]
        assert 48 <= count_peaks(x, 60.0) <= 72
    a = concat_chunks(gen_eog_blinks(250.0, 30.0, 12.0, seed=2)).values
    b = concat_chunks(gen_eog_blinks(250.0, 30.0, 12.0, seed=2)).values
    np.testing.assert_array_equal(a, b)


def closed_fraction(x, thr=0.2):
    return float(np.mean(x <= thr))


def test_openness_profiles():
    awake = concat_chunks(gen_eye_openness(90.0, 120.0, 0.0, seed=1)).values[:, 0]
    assert awake.min() >= 0 and awake.max() <= 1
    assert awake.mean() > 0.85
    assert closed_fraction(awake) == 0.0
    drowsy = concat_chunks(gen_eye_openness(90.0, 120.0, 1.0, seed=1)).values[:, 0]
    assert closed_fraction(drowsy) >= 0.5
    ramp = concat_chunks(gen_eye_openness(90.0, 600.0, lambda t: t / 600.0, seed=1)).values[:, 0]
    windows = ramp[: 60 * 90 * 10].reshape(10, -1)
    means = np.array([closed_fraction(w) for w in windows])
    slope = np.polyfit(np.arange(10), means, 1)[0]
    assert slope > 0


def test_uc4_event_log():
    script = uc4_script(n_tests=10, seed=1)
    syn = synthesize(script, load_scenario("uc4"))
    stim = [e for e in syn.events if e.tag == "stimulus"]
    assert len(stim) == 2000
    assert sum(e.payload["target"] for e in stim) == 400
    np.testing.assert_allclose(np.diff([e.t for e in stim[:200]]), 1.0)


def test_zero_duration_session():
    syn = synthesize(SessionScript("UC1", 0.0), load_scenario("uc1"))
    assert all(c.n_samples == 0 for c in syn.streams.values())
    assert syn.events == []


def test_uc1_timeline():
    script = uc1_script()
    assert script.duration == 1200.0
    assert script.blocks[0].start == 0 and script.blocks[-1].end == 1200
    for a, b in zip(script.blocks, script.blocks[1:]):
        assert a.end == b.start
    labels = {b.label for b in script.blocks}
    assert labels == {"none", "visual", "math"}


def test_script_usecase_must_match():
    with pytest.raises(SynthError):
        synthesize(uc4_script(n_tests=1), load_scenario("uc1"))


def test_session_files_are_bit_identical(tmp_path):
    cfg = load_scenario("uc1")
    script = uc1_script(duration=40, block=10, seed=5)
    a = simulate_session(script, cfg, tmp_path / "a")
    b = simulate_session(script, cfg, tmp_path / "b")
    for name in a.streams:
        assert a.stream_path(name).read_bytes() == b.stream_path(name).read_bytes()
    assert a.events_path.read_bytes() == b.events_path.read_bytes()
    streams, events = read_session_csv(a.directory)
    assert {e.payload["label"] for e in events if e.tag == "block_start"} == {"none", "visual", "math"}
