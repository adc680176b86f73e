"""Turn epochs into named feature vectors according to a list of feature specs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .. import NeuropipeError
from ..dsp.epochs import Epoch
from .spectral import BANDS, DEFAULT_OVERLAP, band_power, resolve_band, spectral_entropy, stft_band_stats, welch_psd
from .temporal import STATS, DEFAULT_CLOSED_THRESHOLD, hjorth, perclos, time_stats

FEATURE_KINDS = ("band_power", "spectral_entropy", "time_stats", "hjorth", "perclos", "raw", "stft_band_stats")


class FeatureError(NeuropipeError, ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    kind: str
    stream: str
    channels: tuple[str, ...] | None = None
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class FeatureVector:
    names: list[str]
    values: np.ndarray
    t0: float = 0.0
    label: Any = None
    lineage: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.names) != len(self.values):
            raise FeatureError("feature names and values differ in length")


def _band_name(band) -> str:
    return band if isinstance(band, str) else f"{band[0]:g}-{band[1]:g}Hz"


def _select_channels(epoch: Epoch, spec: FeatureSpec) -> tuple[np.ndarray, tuple[str, ...]]:
    if spec.channels is None:
        return epoch.data, tuple(epoch.channels)
    idx = []
    for ch in spec.channels:
        if ch not in epoch.channels:
            raise FeatureError(f"channel {ch!r} not in stream {spec.stream!r}")
        idx.append(epoch.channels.index(ch))
    return epoch.data[:, idx], tuple(spec.channels)


def _features_for(spec: FeatureSpec, epoch: Epoch) -> tuple[list[str], list[float]]:
    x, chans = _select_channels(epoch, spec)
    p = spec.params
    names: list[str] = []
    vals: list[np.ndarray] = []

    def add(suffix: str, v: np.ndarray) -> None:
        names.extend(f"{ch}.{suffix}" for ch in chans)
        vals.append(np.asarray(v, dtype=float).ravel())

    if spec.kind == "band_power":
        psd = welch_psd(x, epoch.srate, p.get("segment_len"), p.get("overlap", DEFAULT_OVERLAP))
        for band in p.get("bands", list(BANDS)):
            v = band_power(psd, band)
            if p.get("log", False):
                v = np.log10(v + 1e-12)
            add(f"{_band_name(band)}_power", v)
    elif spec.kind == "spectral_entropy":
        psd = welch_psd(x, epoch.srate, p.get("segment_len"), p.get("overlap", DEFAULT_OVERLAP))
        add("spectral_entropy", spectral_entropy(psd))
    elif spec.kind == "time_stats":
        window = p.get("window_samples")
        data = x if window is None else x[: int(window)]
        stats = time_stats(data, p.get("stats", STATS))
        for s, v in stats.items():
            add("excess_kurtosis" if s == "kurtosis" else s, v)
    elif spec.kind == "hjorth":
        act, mob, comp = hjorth(x)
        add("hjorth_activity", act)
        add("hjorth_mobility", mob)
        add("hjorth_complexity", comp)
    elif spec.kind == "perclos":
        thr = p.get("threshold", DEFAULT_CLOSED_THRESHOLD)
        names.append(p.get("name", "perclos"))
        vals.append(np.array([perclos(x[:, 0], thr)]))
    elif spec.kind == "raw":
        step = int(p.get("decimate", 1))
        sub = x[::step]
        names.extend(f"{ch}.raw_{i}" for i in range(sub.shape[0]) for ch in chans)
        vals.append(sub.ravel())  # row-major: sample-major, channel-minor
    elif spec.kind == "stft_band_stats":
        seg = int(p.get("segment_len", min(x.shape[0], 128)))
        res = stft_band_stats(x, epoch.srate, p.get("bands", ["theta", "alpha", "beta", "gamma"]), seg,
                              p.get("overlap", DEFAULT_OVERLAP), p.get("stats", ("mean", "std")))
        for (band, stat), v in res.items():
            add(f"{band}_{stat}", v)
    else:
        raise FeatureError(f"unknown feature kind {spec.kind!r}; known: {FEATURE_KINDS}")
    return names, (np.concatenate(vals).tolist() if vals else [])


def assemble_features(bundle: Mapping[str, Epoch], specs: Sequence[FeatureSpec]) -> FeatureVector:
    """Concatenate features in spec order, channels in stream order.

    ``bundle`` maps stream name to that stream's epoch for the same window.
    """
    if not specs:
        raise FeatureError("no features requested")
    names: list[str] = []
    values: list[float] = []
    first = None
    for spec in specs:
        if spec.stream not in bundle:
            raise FeatureError(f"feature {spec.kind!r} needs stream {spec.stream!r}, which is missing")
        epoch = bundle[spec.stream]
        first = first or epoch
        n, v = _features_for(spec, epoch)
        names.extend(n)
        values.extend(v)
    arr = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise FeatureError(f"non-finite value for feature {names[bad[0]]!r}")
    if len(set(names)) != len(names):
        raise FeatureError("duplicate feature names; give overlapping specs distinct channels or streams")
    return FeatureVector(names, arr, first.t0, first.label)


def feature_matrix_csv(vectors: Sequence[FeatureVector], path) -> None:
    """Write feature vectors as CSV: feature names then ``label``."""
    import csv

    if not vectors:
        raise FeatureError("no feature vectors to export")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(vectors[0].names) + ["label"])
        for fv in vectors:
            w.writerow([repr(float(v)) for v in fv.values] + ["" if fv.label is None else fv.label])
