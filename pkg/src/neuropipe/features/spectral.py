"""Spectral features: Welch PSD, band power, spectral entropy, STFT band statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import NeuropipeError

# Hz, [low, high)
BANDS: dict[str, tuple[float, float]] = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
    "gamma": (30.0, 60.0),
}

DEFAULT_SEGMENT = 256
DEFAULT_OVERLAP = 0.5


class SpectralError(NeuropipeError, ValueError):
    pass


@dataclass(frozen=True)
class Psd:
    freqs: np.ndarray          # (bins,)
    power: np.ndarray          # (bins, channels), units^2/Hz
    segment_len: int
    overlap: float
    window: str = "hann"

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if len(self.freqs) > 1 else 0.0

    def total_power(self) -> np.ndarray:
        return self.power.sum(axis=0) * self.df


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def resolve_band(band) -> tuple[float, float]:
    if isinstance(band, str):
        try:
            return BANDS[band]
        except KeyError:
            raise SpectralError(f"unknown band {band!r}; known: {sorted(BANDS)}") from None
    low, high = band
    return float(low), float(high)


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _segment_starts(n: int, seg: int, overlap: float) -> np.ndarray:
    step = seg - int(round(overlap * seg))
    if step < 1:
        raise SpectralError("overlap leaves no hop between segments")
    return np.arange(0, n - seg + 1, step)


def _periodograms(x: np.ndarray, srate: float, seg: int, overlap: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided density periodograms, shape (segments, bins, channels)."""
    starts = _segment_starts(x.shape[0], seg, overlap)
    w = hann(seg)
    frames = np.stack([x[s:s + seg] for s in starts])             # (S, seg, C)
    frames = frames - frames.mean(axis=1, keepdims=True)
    spec = np.fft.rfft(frames * w[None, :, None], axis=1)
    p = (np.abs(spec) ** 2) / (srate * np.sum(w**2))
    if seg % 2 == 0:
        p[:, 1:-1] *= 2
    else:
        p[:, 1:] *= 2
    freqs = np.fft.rfftfreq(seg, 1.0 / srate)
    return freqs, p


def welch_psd(x, srate: float, segment_len: int | None = None, overlap: float = DEFAULT_OVERLAP) -> Psd:
    """Averaged periodogram of Hann-windowed segments (mean removed per segment).

    Density scaling: summing ``power * df`` over the one-sided grid gives
    the signal variance.
    """
    x = _as_2d(x)
    n = x.shape[0]
    seg = min(n, DEFAULT_SEGMENT) if segment_len is None else int(segment_len)
    if seg > n:
        raise SpectralError(f"segment length {seg} exceeds epoch length {n}")
    if seg < 2:
        raise SpectralError("segment length must be at least 2 samples")
    if not 0 <= overlap < 1:
        raise SpectralError("overlap must be in [0, 1)")
    freqs, p = _periodograms(x, srate, seg, overlap)
    return Psd(freqs, p.mean(axis=0), seg, overlap)


def _band_integral(freqs: np.ndarray, power: np.ndarray, band) -> np.ndarray:
    low, high = resolve_band(band)
    mask = (freqs >= low) & (freqs < high)
    if not mask.any():
        raise SpectralError(f"band [{low}, {high}) Hz contains no frequency bins (grid up to {freqs[-1]:.3g} Hz)")
    f = freqs[mask]
    p = power[..., mask, :] if power.ndim == 3 else power[mask]
    if f.size == 1:
        df = freqs[1] - freqs[0]
        return p.sum(axis=-2) * df
    return np.trapezoid(p, f, axis=-2)


def band_power(psd: Psd, band) -> np.ndarray:
    """Trapezoidal integral of the PSD over ``[low, high)``, per channel.

    Bands reaching past the grid are clipped to it; a band with no bins is
    an error.
    """
    return _band_integral(psd.freqs, psd.power, band)


def spectral_entropy(psd: Psd) -> np.ndarray:
    """Shannon entropy of the normalised PSD divided by ``log(bins)``; 0 for silent channels."""
    p = psd.power
    nbins = p.shape[0]
    if nbins < 2:
        raise SpectralError("spectral entropy needs at least two frequency bins")
    total = p.sum(axis=0)
    out = np.zeros(p.shape[1])
    live = total > 0
    if live.any():
        q = p[:, live] / total[live]
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -np.sum(np.where(q > 0, q * np.log(q), 0.0), axis=0)
        out[live] = np.clip(h / np.log(nbins), 0.0, 1.0)
    return out


def stft_band_stats(x, srate: float, bands, segment_len: int, overlap: float = DEFAULT_OVERLAP,
                    stats=("mean", "std")) -> dict[tuple[str, str], np.ndarray]:
    """Band power per STFT frame, summarised across frames.

    Returns ``{(band, stat): per-channel values}``.
    """
    x = _as_2d(x)
    if segment_len > x.shape[0]:
        raise SpectralError(f"segment length {segment_len} exceeds epoch length {x.shape[0]}")
    freqs, p = _periodograms(x, srate, int(segment_len), overlap)
    out = {}
    for band in bands:
        name = band if isinstance(band, str) else f"{band[0]:g}-{band[1]:g}Hz"
        frames = _band_integral(freqs, p, band)                   # (S, C)
        for stat in stats:
            if stat == "mean":
                out[(name, stat)] = frames.mean(axis=0)
            elif stat == "std":
                out[(name, stat)] = frames.std(axis=0)
            else:
                raise SpectralError(f"unsupported STFT statistic {stat!r}")
    return out
