"""Closed-form references shared by the DSP tests and the acceptance run."""
import numpy as np

from neuropipe.config import load_scenario
from neuropipe.dsp.ica import EogRejection, fast_ica, remove_artifact_components
from neuropipe.synth import blink_pulse, synthesize, uc3_script


def notch_magnitude(f, f0, srate, q):
    """|H| of the bilinear-transformed second-order notch with -3 dB width f0/q."""
    w = 2 * np.pi * np.asarray(f, float) / srate
    w0 = 2 * np.pi * f0 / srate
    beta = np.tan(w0 / q / 2)
    d = np.cos(w) - np.cos(w0)
    return np.abs(d) / np.sqrt(d**2 + beta**2 * np.sin(w) ** 2)


def butter_bandpass_magnitude(f, low, high, order, srate):
    """|H| of a Butterworth band-pass designed with pre-warped bilinear transform."""
    warp = lambda x: 2 * srate * np.tan(np.pi * np.asarray(x, float) / srate)
    w, wl, wh = warp(f), warp(low), warp(high)
    return 1 / np.sqrt(1 + ((w**2 - wl * wh) / (w * (wh - wl))) ** (2 * order))


def steady_state_gain(filt, freq, srate, seconds=20.0, tail=5.0):
    """Amplitude of the filter's response to a unit sine, fitted on the last ``tail`` seconds."""
    t = np.arange(int(seconds * srate)) / srate
    y = filt(np.sin(2 * np.pi * freq * t))
    m = t >= seconds - tail
    basis = np.column_stack([np.sin(2 * np.pi * freq * t[m]), np.cos(2 * np.pi * freq * t[m])])
    coef, *_ = np.linalg.lstsq(basis, y[m], rcond=None)
    return float(np.hypot(*coef))


def match_sources(true, est):
    """Best |corr| per true source under a brute-force permutation search."""
    from itertools import permutations
    k = true.shape[1]
    c = np.abs(np.corrcoef(true.T, est.T)[:k, k:])
    best = max(permutations(range(k)), key=lambda p: sum(c[i, p[i]] for i in range(k)))
    return np.array([c[i, best[i]] for i in range(k)])


def blink_oracle(times, n, srate, amplitude=120.0):
    """Re-derive the unit-weight blink trace from logged blink times."""
    x = np.zeros(n)
    m = int(round(0.15 * srate))
    p = blink_pulse(m) * amplitude
    for t in times:
        i = int(round(t * srate))
        seg = x[i:i + m]
        seg += p[:seg.size]
    return x


def blink_removal_stats(seed, duration=300.0):
    """(blink RMS ratio after/before, worst clean RMS relative change) on one synthetic session."""
    cfg = load_scenario("uc3_regression")
    syn = synthesize(uc3_script(duration=duration, block=60, seed=seed), cfg)
    eeg = syn.streams["eeg"]
    chans = syn.channels["eeg"]
    srate = syn.srates["eeg"]
    x = eeg.values
    times = [e.t for e in syn.events if e.tag == "blink"]
    trace = blink_oracle(times, x.shape[0], srate)
    eeg_idx = [i for i, c in enumerate(chans) if not c.startswith("EOG")]
    eog_idx = [i for i, c in enumerate(chans) if c.startswith("EOG")]
    # per-channel blink weight by least squares on the known trace
    w = np.linalg.lstsq(trace[:, None], x - x.mean(0), rcond=None)[0][0]
    truth = x - trace[:, None] * w[None, :]
    model = fast_ica(x, seed=seed)
    cleaned = remove_artifact_components(model, x, EogRejection(x[:, eog_idx]))
    in_blink = np.zeros(x.shape[0], bool)
    for t in times:
        i = int(round(t * srate))
        in_blink[max(i - 5, 0):i + int(0.15 * srate) + 5] = True
    clean = ~np.convolve(in_blink, np.ones(int(srate)), mode="same").astype(bool)
    before = np.sqrt(np.mean((x - truth)[in_blink][:, eeg_idx] ** 2))
    after = np.sqrt(np.mean((cleaned - truth)[in_blink][:, eeg_idx] ** 2))
    rms = lambda a: np.sqrt(np.mean((a - a.mean(0)) ** 2, axis=0))
    change = np.abs(rms(cleaned[clean][:, eeg_idx]) / rms(x[clean][:, eeg_idx]) - 1)
    return after / before, float(change.max())
