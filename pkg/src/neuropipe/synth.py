"""Synthetic sessions with ground-truth labels for the four driving use cases.

Condition effects are invented, parameterised band-power changes (and a
subject-specific P300 for the oddball protocol).  They exist so the pipeline
can be tested end to end; they make no physiological claim.  Setting the
effect size to zero removes every label-dependent difference.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import NeuropipeError
from .acquisition.session import SessionRecord, write_session_csv
from .acquisition.types import SampleChunk, StreamEvent, split_chunks
from .dsp.epochs import Block, Signal
from .features.spectral import BANDS
from .seeds import derive_seed, rng_for

log = logging.getLogger(__name__)

BAND_ORDER = ("delta", "theta", "alpha", "beta", "gamma")
DEFAULT_PROFILE = {"delta": 20.0, "theta": 10.0, "alpha": 12.0, "beta": 6.0, "gamma": 2.0}   # uV^2
EFFECT_SIZES = {"none": 0.0, "mid": 0.5, "high": 1.0}
LINE_NOISE_UV = 4.0
BLINK_WIDTH = 0.15
BLINK_UV = 120.0
CLOSED_OPENNESS = 0.05
CLOSURE_CYCLE = 2.0          # s between eyelid closures when drowsy
CLOSURE_FRACTION = 0.6       # closed fraction of a cycle at drowsiness 1


class SynthError(NeuropipeError, ValueError):
    pass


def effect_value(effect) -> float:
    if isinstance(effect, str):
        try:
            return EFFECT_SIZES[effect]
        except KeyError:
            raise SynthError(f"unknown effect size {effect!r}; known: {sorted(EFFECT_SIZES)}") from None
    return float(effect)


# --------------------------------------------------------------------------- generators

def _band_component(rng: np.random.Generator, n: int, n_ch: int, srate: float, band) -> np.ndarray:
    """Gaussian noise confined to ``band`` with a 1/f power slope, unit variance per channel."""
    low, high = band
    freqs = np.fft.rfftfreq(n, 1.0 / srate)
    mask = (freqs >= low) & (freqs < high) & (freqs > 0)
    spec = (rng.standard_normal((freqs.size, n_ch)) + 1j * rng.standard_normal((freqs.size, n_ch)))
    shape = np.zeros(freqs.size)
    shape[mask] = 1.0 / np.sqrt(freqs[mask])
    x = np.fft.irfft(spec * shape[:, None], n=n, axis=0)
    x -= x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return x / sd


GainFn = Callable[[str], Sequence[tuple[int, int, np.ndarray]]]


def _background(rng: np.random.Generator, n: int, n_ch: int, srate: float, profile: Mapping[str, float],
                gains: GainFn | None = None) -> np.ndarray:
    """Sum of band components; ``gains(band)`` yields (start, stop, power multiplier per channel)."""
    out = np.zeros((n, n_ch))
    if n == 0:
        return out
    nyq = srate / 2
    for band in BAND_ORDER:
        p = float(profile.get(band, 0.0))
        if p < 0:
            raise SynthError(f"negative power for band {band!r}")
        low, high = BANDS[band]
        if p == 0:
            continue
        if high > nyq:
            raise SynthError(f"band {band!r} ({low}-{high} Hz) lies above Nyquist ({nyq} Hz)")
        comp = _band_component(rng, n, n_ch, srate, (low, high)) * np.sqrt(p)
        if gains is None:
            out += comp
            continue
        mult = np.ones((n, n_ch))
        for start, stop, m in gains(band):
            mult[start:stop] = np.maximum(np.asarray(m, dtype=float), 0.0)
        out += comp * np.sqrt(mult)
    return out


def gen_background_eeg(channels: Sequence[str], srate: float, duration: float,
                       band_profile: Mapping[str, float] = DEFAULT_PROFILE, seed: int = 0,
                       chunk_size: int = 250, stream: str = "eeg") -> list[SampleChunk]:
    """Background EEG whose Welch band powers follow ``band_profile`` (units^2 per band)."""
    unknown = set(band_profile) - set(BAND_ORDER)
    if unknown:
        raise SynthError(f"unknown band(s) {sorted(unknown)}")
    n = int(round(duration * srate))
    x = _background(rng_for(seed, "background"), n, len(channels), srate, band_profile)
    return split_chunks(stream, np.arange(n) / srate, x, chunk_size)


@dataclass(frozen=True)
class ErpTemplate:
    latency: float = 0.35        # s after stimulus
    width: float = 0.05          # Gaussian sd, s
    amplitude: float = 8.0
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.25 <= self.latency <= 0.5:
            raise SynthError(f"ERP latency {self.latency}s outside the P300 window 0.25-0.5 s")
        if self.width <= 0:
            raise SynthError("ERP width must be positive")

    @property
    def extent(self) -> float:
        return self.latency + 4 * self.width

    def waveform(self, t: np.ndarray) -> np.ndarray:
        return self.amplitude * np.exp(-0.5 * ((t - self.latency) / self.width) ** 2)


def inject_erp(signal: Signal, schedule: Sequence[tuple[float, bool]], template: ErpTemplate) -> Signal:
    """Add the template at every target time of ``schedule``; non-targets are left alone."""
    data = signal.data.copy()
    n_ch = data.shape[1]
    w = np.asarray(template.weights, dtype=float) if template.weights else np.ones(n_ch)
    if w.size != n_ch:
        raise SynthError(f"template has {w.size} weights for {n_ch} channels")
    t_end = signal.t0 + signal.n_samples / signal.srate
    half = int(np.ceil(template.extent * signal.srate))
    for t, is_target in schedule:
        if not signal.t0 <= t < t_end:
            raise SynthError(f"stimulus at {t}s outside the signal span")
        if not is_target:
            continue
        if t + template.extent > t_end:
            raise SynthError(f"ERP at {t}s extends past the signal end ({t_end}s)")
        i0 = int(np.ceil((t - signal.t0) * signal.srate - 1e-9))
        idx = np.arange(i0, min(i0 + half + 1, signal.n_samples))
        rel = signal.t0 + idx / signal.srate - t
        data[idx] += template.waveform(rel)[:, None] * w[None, :]
    return signal.with_data(data)


def blink_times(rng: np.random.Generator, rate_per_min: float, duration: float) -> np.ndarray:
    """Gamma-distributed inter-blink intervals (shape 8) with mean 60/rate."""
    if rate_per_min < 0:
        raise SynthError("blink rate must be >= 0")
    if rate_per_min == 0 or duration <= 0:
        return np.zeros(0)
    mean = 60.0 / rate_per_min
    n_max = int(duration / mean * 2 + 10)
    iv = np.maximum(rng.gamma(8.0, mean / 8.0, n_max), BLINK_WIDTH * 2)
    t = np.cumsum(iv)
    return t[t + BLINK_WIDTH < duration]


def blink_pulse(n: int) -> np.ndarray:
    """Smooth biphasic pulse over ``n`` samples, positive lobe first, peak 1."""
    u = (np.arange(n) + 0.5) / n
    p = np.sin(2 * np.pi * u) * np.sin(np.pi * u)
    return p / np.max(np.abs(p))


def _blink_trace(times: np.ndarray, n: int, srate: float, amplitude: float) -> np.ndarray:
    x = np.zeros(n)
    m = max(int(round(BLINK_WIDTH * srate)), 3)
    pulse = blink_pulse(m) * amplitude
    for t in times:
        i = int(round(t * srate))
        seg = x[i:i + m]
        seg += pulse[:seg.size]
    return x


def gen_eog_blinks(srate: float, duration: float, blink_rate: float, seed: int = 0,
                   amplitude: float = BLINK_UV, chunk_size: int = 250, stream: str = "eog") -> list[SampleChunk]:
    """Single-channel EOG trace of 150 ms biphasic blinks at ``blink_rate`` per minute."""
    n = int(round(duration * srate))
    times = blink_times(rng_for(seed, "blinks"), blink_rate, duration)
    x = _blink_trace(times, n, srate, amplitude)
    return split_chunks(stream, np.arange(n) / srate, x[:, None], chunk_size)


def _openness(rng: np.random.Generator, n: int, srate: float, profile: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Eyelid openness in [0, 1]: awake ~0.9, with closures whose share of time grows with drowsiness."""
    t = np.arange(n) / srate
    d = np.clip(np.asarray(profile(t), dtype=float) * np.ones(n), 0.0, 1.0)
    base = np.clip(0.9 + 0.03 * rng.standard_normal(n), 0.7, 1.0)
    closed = np.zeros(n, bool)
    duration = n / srate
    c = rng.uniform(0, CLOSURE_CYCLE)
    while c < duration:
        period = rng.uniform(0.75, 1.25) * CLOSURE_CYCLE
        i = int(c * srate)
        dc = d[min(i, n - 1)] * CLOSURE_FRACTION * period
        if dc > 0:
            closed[i:int((c + dc) * srate)] = True
        c += period
    # smooth the lid movement over ~40 ms so closures are not instantaneous steps
    k = max(int(0.04 * srate), 1)
    shut = np.convolve(closed.astype(float), np.ones(k) / k, mode="same") if n else closed.astype(float)
    o = base * (1 - shut) + CLOSED_OPENNESS * shut
    o[closed] = np.minimum(o[closed], CLOSED_OPENNESS + 0.02 * rng.random(np.count_nonzero(closed)))
    return np.clip(o, 0.0, 1.0)


def gen_eye_openness(srate: float, duration: float, drowsiness_profile=0.0, seed: int = 0,
                     chunk_size: int = 90, stream: str = "eye") -> list[SampleChunk]:
    """Eye-openness series; ``drowsiness_profile`` is a constant or a function of time in [0, 1]."""
    n = int(round(duration * srate))
    prof = drowsiness_profile if callable(drowsiness_profile) else (lambda t, c=float(drowsiness_profile): np.full_like(t, c))
    x = _openness(rng_for(seed, "openness"), n, srate, prof)
    return split_chunks(stream, np.arange(n) / srate, x[:, None], chunk_size)


# --------------------------------------------------------------------------- protocols

@dataclass(frozen=True)
class SessionScript:
    usecase: str
    duration: float
    blocks: tuple[Block, ...] = ()
    stimuli: tuple[tuple[float, bool], ...] = ()
    seed: int = 0
    subject: str = "s01"
    trait_seed: int | None = None     # subject identity; defaults to seed
    effect: float = 1.0
    day: int = 1
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.usecase not in ("UC1", "UC2", "UC3", "UC4"):
            raise SynthError(f"unknown use case {self.usecase!r}")
        if self.duration < 0:
            raise SynthError("duration must be >= 0")
        last = -np.inf
        for b in sorted(self.blocks, key=lambda b: b.start):
            if b.start < last or b.start < 0 or b.end > self.duration + 1e-9 or b.end <= b.start:
                raise SynthError(f"block {b.label!r} [{b.start}, {b.end}) overlaps or leaves the session")
            last = b.end
        for t, _ in self.stimuli:
            if not 0 <= t <= self.duration:
                raise SynthError(f"stimulus at {t}s outside the session")

    @property
    def traits_seed(self) -> int:
        return self.seed if self.trait_seed is None else self.trait_seed


def _alternating_blocks(duration: float, block: float, labels: Sequence[str]) -> tuple[Block, ...]:
    out = []
    t, k = 0.0, 0
    while t + 1e-9 < duration:
        end = min(t + block, duration)
        out.append(Block(t, end, labels[k % len(labels)]))
        t, k = end, k + 1
    return tuple(out)


def uc1_script(duration: float = 1200.0, block: float = 60.0, seed: int = 0, subject: str = "s01",
               effect=1.0, trait_seed: int | None = None) -> SessionScript:
    """Continuous driving alternating no-distraction with visual or arithmetic distraction."""
    return SessionScript("UC1", duration, _alternating_blocks(duration, block, ("none", "visual", "none", "math")),
                         (), seed, subject, trait_seed, effect_value(effect))


UC2_SEQUENCE = ("none", "neutral", "joy", "anger")


def uc2_script(block: float = 300.0, repeats: int = 2, seed: int = 0, subject: str = "s01",
               effect=1.0, trait_seed: int | None = None) -> SessionScript:
    """Emotion induction: none, neutral, joy, anger, each ``block`` seconds, repeated."""
    duration = block * len(UC2_SEQUENCE) * repeats
    return SessionScript("UC2", duration, _alternating_blocks(duration, block, UC2_SEQUENCE),
                         (), seed, subject, trait_seed, effect_value(effect))


def uc3_script(duration: float = 1200.0, block: float = 64.0, seed: int = 0, subject: str = "s01",
               effect=1.0, trait_seed: int | None = None) -> SessionScript:
    """Free driving with a piecewise-constant drowsiness level per block.

    Levels are ``u**2`` with ``u`` uniform, which puts half the time above the
    default drowsy PERCLOS threshold.
    """
    rng = rng_for(seed, "uc3-levels")
    blocks = []
    t = 0.0
    while t + 1e-9 < duration:
        end = min(t + block, duration)
        d = float(round(rng.uniform() ** 2, 4))
        blocks.append(Block(t, end, f"drowsiness={d:.4f}", {"drowsiness": d}))
        t = end
    return SessionScript("UC3", duration, tuple(blocks), (), seed, subject, trait_seed, effect_value(effect))


def uc4_script(n_tests: int = 10, n_stimuli: int = 200, n_targets: int = 40, isi: float = 1.0,
               gap: float = 2.0, seed: int = 0, subject: str = "s01", day: int = 1,
               effect=1.0, trait_seed: int | None = None, erp_amplitude: float = 8.0) -> SessionScript:
    """Oddball authentication: per test, ``n_targets`` known images among ``n_stimuli``, one per ``isi``.

    ``erp_amplitude`` (uV) is the mean P300 peak before subject variation.
    """
    if n_targets > n_stimuli:
        raise SynthError("more targets than stimuli")
    rng = rng_for(seed, "uc4-schedule")
    stim = []
    blocks = []
    t = 1.0
    for test in range(n_tests):
        is_t = np.zeros(n_stimuli, bool)
        is_t[rng.choice(n_stimuli, n_targets, replace=False)] = True
        start = t
        for k in range(n_stimuli):
            stim.append((round(t, 6), bool(is_t[k])))
            t += isi
        blocks.append(Block(start, t, f"test{test + 1}"))
        t += gap
    duration = t if n_tests else 0.0
    return SessionScript("UC4", duration, tuple(blocks), tuple(stim), seed, subject, trait_seed,
                         effect_value(effect), day, meta={"erp_amplitude": float(erp_amplitude)})


# --------------------------------------------------------------------------- session assembly

def _region_weight(label: str, region: str) -> float:
    lab = label.upper()
    if region == "frontal":
        return 1.0 if lab.startswith("F") else 0.0
    if region == "occipital":
        return 1.0 if lab.startswith("O") else 0.0
    if region == "parietal":
        return 1.0 if lab.startswith("P") else 0.0
    if region == "right_frontal":
        return 1.0 if lab.startswith("F") and lab[-1:].isdigit() and int(lab[-1]) % 2 == 0 else 0.0
    if region == "left_frontal":
        return 1.0 if lab.startswith("F") and lab[-1:].isdigit() and int(lab[-1]) % 2 == 1 else 0.0
    return 1.0   # "all"


# condition -> list of (band, region, relative power change per unit effect)
UC1_EFFECTS = {
    "none": [],
    "visual": [("alpha", "occipital", -0.85), ("alpha", "parietal", -0.7), ("beta", "frontal", 4.0),
               ("gamma", "frontal", 4.0), ("theta", "occipital", 2.0)],
    "math": [("theta", "frontal", 6.0), ("beta", "frontal", 4.0), ("gamma", "frontal", 4.0),
             ("delta", "frontal", -0.7)],
}
UC2_EFFECTS = {
    "none": [],
    "neutral": [("alpha", "all", 1.5)],
    "joy": [("beta", "left_frontal", 2.0), ("gamma", "left_frontal", 2.5), ("alpha", "right_frontal", -0.6)],
    "anger": [("beta", "right_frontal", 2.0), ("gamma", "right_frontal", 2.5), ("theta", "all", 1.5)],
}
UC3_EFFECTS = [("theta", "all", 2.0), ("alpha", "all", 1.5), ("beta", "all", -0.5)]


def _eeg_channels(channels: Sequence[str]) -> list[int]:
    return [i for i, c in enumerate(channels) if not c.upper().startswith("EOG")]


def _eog_channels(channels: Sequence[str]) -> list[int]:
    return [i for i, c in enumerate(channels) if c.upper().startswith("EOG")]


def _blink_weight(label: str) -> float:
    lab = label.upper()
    if lab.startswith("FP"):
        return 0.5
    if lab.startswith("F"):
        return 0.3
    if lab.startswith("C") or lab.startswith("T3") or lab.startswith("T4"):
        return 0.12
    return 0.05


@dataclass
class SyntheticSession:
    """In-memory session: one chunk per stream plus the ground-truth event log."""
    scenario_id: str
    streams: dict[str, SampleChunk]
    channels: dict[str, list[str]]
    srates: dict[str, float]
    kinds: dict[str, str]
    events: list[StreamEvent]
    meta: dict

    @property
    def duration(self) -> float:
        return float(self.meta.get("duration", 0.0))


def _check_script(script: SessionScript, cfg) -> None:
    if cfg.usecase is not None and cfg.usecase != script.usecase:
        raise SynthError(f"script is {script.usecase} but scenario {cfg.scenario_id!r} is {cfg.usecase}")
    kinds = {s.kind for s in cfg.streams}
    if "eeg" not in kinds:
        raise SynthError("scenario declares no EEG stream")
    if script.usecase == "UC3" and "eye_tracking" not in kinds:
        raise SynthError("UC3 scenario needs an eye-tracking stream")
    if script.usecase == "UC4" and not script.stimuli and script.duration > 0:
        raise SynthError("UC4 script has no stimulus schedule")


def _block_gains(script: SessionScript, channels: Sequence[str], srate: float, n: int) -> GainFn | None:
    e = script.effect
    if e == 0 or script.usecase == "UC4":
        return None
    table = {"UC1": UC1_EFFECTS, "UC2": UC2_EFFECTS}.get(script.usecase)

    def changes(block: Block):
        if script.usecase == "UC3":
            d = float(block.payload.get("drowsiness", 0.0))
            return [(b, r, v * d) for b, r, v in UC3_EFFECTS]
        return table.get(block.label, [])

    def gains(band: str):
        out = []
        for blk in script.blocks:
            m = np.ones(len(channels))
            for b, region, v in changes(blk):
                if b != band:
                    continue
                w = np.array([_region_weight(c, region) for c in channels])
                m = m * (1 + e * v * w)
            start, stop = int(round(blk.start * srate)), min(int(round(blk.end * srate)), n)
            out.append((start, stop, np.maximum(m, 0.05)))
        return out

    return gains


def _uc4_traits(script: SessionScript, channels: Sequence[str]) -> tuple[np.ndarray, ErpTemplate, dict]:
    """Subject identity: channel gains, ERP latency, amplitude and topography, all scaled by effect."""
    rng = rng_for(script.traits_seed, f"uc4-traits:{script.subject}")
    e = script.effect
    n = len(channels)
    base_w = np.array([1.0 if c.upper().startswith("P") else 0.8 if c.upper().startswith(("C", "O")) else 0.4
                       for c in channels])
    z_gain, z_w, u_lat, u_amp = rng.standard_normal(n), rng.standard_normal(n), rng.uniform(), rng.uniform()
    z_band = rng.standard_normal(len(BAND_ORDER))
    gains = np.exp(e * 0.5 * z_gain)
    weights = np.clip(base_w + e * 0.3 * z_w, 0.05, None)
    tmpl = ErpTemplate(latency=0.375 + e * (u_lat - 0.5) * 0.24, width=0.05,
                       amplitude=script.meta.get("erp_amplitude", 8.0) * (1 + e * 0.6 * (u_amp - 0.5)),
                       weights=tuple(weights))
    profile = {b: DEFAULT_PROFILE[b] * float(np.exp(e * 0.4 * z)) for b, z in zip(BAND_ORDER, z_band)}
    return gains, tmpl, profile


def synthesize(script: SessionScript, cfg) -> SyntheticSession:
    """Generate every declared stream of ``cfg`` following ``script``."""
    _check_script(script, cfg)
    events: list[StreamEvent] = []
    for b in script.blocks:
        events.append(StreamEvent(b.start, "block_start", {"label": b.label, **b.payload}))
        events.append(StreamEvent(b.end, "block_end", {"label": b.label}))
    for i, (t, is_t) in enumerate(script.stimuli):
        events.append(StreamEvent(t, "stimulus", {"label": "target" if is_t else "nontarget", "target": bool(is_t),
                                                  "index": i}))
    streams, channels, srates, kinds = {}, {}, {}, {}
    blink_rng = rng_for(script.seed, "blink-times")
    blinks = blink_times(blink_rng, 15.0, script.duration) if script.usecase == "UC3" else np.zeros(0)
    for t in blinks:
        events.append(StreamEvent(float(round(t, 6)), "blink", {}))
    events.sort(key=lambda ev: (ev.t, ev.tag != "block_end"))

    drowsy_blocks = [(b.start, b.end, float(b.payload.get("drowsiness", 0.0))) for b in script.blocks] \
        if script.usecase == "UC3" else []

    def drowsiness(t: np.ndarray) -> np.ndarray:
        d = np.zeros_like(t)
        for s, e, v in drowsy_blocks:
            d[(t >= s) & (t < e)] = v
        return d

    for desc in cfg.streams:
        n = int(round(script.duration * desc.srate))
        t = np.arange(n) / desc.srate
        rng = rng_for(script.seed, f"stream:{desc.name}")
        chans = list(desc.channels)
        if desc.kind == "eeg":
            eeg_idx = _eeg_channels(chans)
            eog_idx = _eog_channels(chans)
            x = np.zeros((n, len(chans)))
            eeg_chans = [chans[i] for i in eeg_idx]
            profile = DEFAULT_PROFILE
            ch_gain = np.ones(len(eeg_idx))
            if script.usecase == "UC4":
                ch_gain, tmpl, profile = _uc4_traits(script, eeg_chans)
            gains = _block_gains(script, eeg_chans, desc.srate, n)
            x[:, eeg_idx] = _background(rng, n, len(eeg_idx), desc.srate, profile, gains) * ch_gain
            if script.usecase == "UC4" and n:
                sig = inject_erp(Signal(x[:, eeg_idx], desc.srate), script.stimuli, tmpl)
                x[:, eeg_idx] = sig.data
            if eog_idx:
                x[:, eog_idx] = 5.0 * rng.standard_normal((n, len(eog_idx)))
            if blinks.size:
                trace = _blink_trace(blinks, n, desc.srate, BLINK_UV)
                w = np.array([_blink_weight(c) for c in eeg_chans])
                x[:, eeg_idx] += trace[:, None] * w[None, :]
                if eog_idx:
                    sgn = np.array([1.0 if k % 2 == 0 else 0.8 for k in range(len(eog_idx))])
                    x[:, eog_idx] += trace[:, None] * sgn[None, :]
            x[:, eeg_idx] += LINE_NOISE_UV * np.sin(2 * np.pi * 50.0 * t)[:, None] if desc.srate > 100 else 0.0
            x += rng.normal(0, 2.0, len(chans))[None, :]       # electrode offsets
        elif desc.kind == "eog":
            x = 5.0 * rng.standard_normal((n, len(chans)))
            if blinks.size:
                x += _blink_trace(blinks, n, desc.srate, BLINK_UV)[:, None]
        elif desc.kind == "eye_tracking":
            o = _openness(rng_for(script.seed, f"openness:{desc.name}"), n, desc.srate, drowsiness)
            x = np.repeat(o[:, None], len(chans), axis=1)
        else:   # telemetry: slow random walks (speed, steering, ...)
            x = np.cumsum(rng.normal(0, 0.05, (n, len(chans))), axis=0)
        streams[desc.name] = SampleChunk(desc.name, t, x)
        channels[desc.name] = chans
        srates[desc.name] = desc.srate
        kinds[desc.name] = desc.kind
    meta = {"usecase": script.usecase, "subject": script.subject, "day": script.day, "seed": script.seed,
            "trait_seed": script.traits_seed, "effect": script.effect, "duration": script.duration}
    return SyntheticSession(cfg.scenario_id, streams, channels, srates, kinds, events, meta)


def simulate_session(script: SessionScript, cfg, out_dir, session: str | None = None) -> SessionRecord:
    """Generate a session and write it in the standard CSV layout."""
    syn = synthesize(script, cfg)
    name = session or f"{script.subject}_day{script.day}"
    rec = write_session_csv(Path(out_dir), name, syn.streams, syn.channels, syn.events, cfg.scenario_id,
                            syn.srates, syn.kinds, 0.0, script.duration, syn.meta)
    log.info("wrote %s session %s (%.0f s)", script.usecase, rec.directory, script.duration)
    return rec


def subject_seeds(seed: int, subject: str, day: int = 1) -> tuple[int, int]:
    """(noise seed, trait seed) for one synthetic subject and recording day."""
    return derive_seed(seed, f"subject:{subject}:day:{day}") % (2**31), derive_seed(seed, f"traits:{subject}") % (2**31)
