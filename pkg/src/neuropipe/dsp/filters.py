"""IIR filter design and application.

Notch filters are second-order biquads; band-pass filters are Butterworth
designs mapped to the z-plane with a pre-warped bilinear transform.  Filters
are applied as second-order sections for numerical robustness (the 0.1 Hz
edges used in the driving scenarios put poles within 1e-3 of the unit
circle, where a single high-order polynomial loses precision).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import signal as sps

from .. import NeuropipeError


class FilterDesignError(NeuropipeError, ValueError):
    pass


class StreamingModeError(NeuropipeError, ValueError):
    pass


@dataclass(frozen=True)
class FilterCoefficients:
    b: np.ndarray
    a: np.ndarray
    sos: np.ndarray
    kind: str
    band: tuple[float, ...]
    order: int
    srate: float
    meta: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_ba(cls, b, a, srate: float = 1.0, kind: str = "custom") -> "FilterCoefficients":
        b = np.atleast_1d(np.asarray(b, dtype=float))
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if a[0] == 0:
            raise FilterDesignError("leading denominator coefficient must be non-zero")
        b, a = b / a[0], a / a[0]
        sos = sps.tf2sos(b, a)
        return cls(b, a, sos, kind, (), max(len(a), len(b)) - 1, srate)

    @property
    def poles(self) -> np.ndarray:
        return np.roots(self.a) if len(self.a) > 1 else np.array([])

    def is_stable(self) -> bool:
        # Check each section; the expanded polynomial is too ill-conditioned
        # for very low cut-offs.
        for sec in self.sos:
            p = np.roots(sec[3:])
            if p.size and np.max(np.abs(p)) >= 1.0:
                return False
        return True

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "band": list(self.band),
            "order": self.order,
            "srate": self.srate,
            "b": self.b.tolist(),
            "a": self.a.tolist(),
            "sos": self.sos.tolist(),
            "stable": self.is_stable(),
            **self.meta,
        }


def _check_freq(f: float, srate: float, what: str) -> None:
    if not 0 < f < srate / 2:
        raise FilterDesignError(f"{what} {f} Hz must lie in (0, {srate / 2}) Hz (Nyquist)")


def design_notch(f0: float, srate: float, q: float = 30.0) -> FilterCoefficients:
    """Second-order notch at ``f0`` with quality factor ``q``.

    The -3 dB bandwidth is ``f0 / q``.
    """
    _check_freq(f0, srate, "notch frequency")
    if q <= 0:
        raise FilterDesignError("quality factor must be positive")
    w0 = 2 * np.pi * f0 / srate
    beta = np.tan(w0 / q / 2)
    gain = 1.0 / (1.0 + beta)
    b = gain * np.array([1.0, -2.0 * np.cos(w0), 1.0])
    a = np.array([1.0, -2.0 * gain * np.cos(w0), 2.0 * gain - 1.0])
    sos = np.concatenate([b, a])[None, :]
    return FilterCoefficients(b, a, sos, "notch", (f0,), 2, srate, {"q": q})


def _butter_analog_lowpass(order: int) -> np.ndarray:
    k = np.arange(1, order + 1)
    return np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))


def _bilinear_zpk(z, p, k, srate):
    fs2 = 2.0 * srate
    degree = len(p) - len(z)
    zd = (fs2 + z) / (fs2 - z)
    pd = (fs2 + p) / (fs2 - p)
    zd = np.append(zd, -np.ones(degree))
    kd = k * np.real(np.prod(fs2 - z) / np.prod(fs2 - p))
    return zd, pd, kd


def design_bandpass(low: float, high: float, order: int = 4, srate: float = 250.0) -> FilterCoefficients:
    """Butterworth band-pass of the given prototype order.

    ``low == 0`` degrades to a low-pass.  Band edges are pre-warped so the
    -3 dB points land exactly on ``low`` and ``high``.
    """
    if not (0 <= low < high < srate / 2):
        raise FilterDesignError(
            f"invalid band edges ({low}, {high}) Hz for srate {srate}: need 0 <= low < high < {srate / 2}"
        )
    if order < 1:
        raise FilterDesignError("filter order must be >= 1")
    proto = _butter_analog_lowpass(order)
    w_high = 2 * srate * np.tan(np.pi * high / srate)
    if low == 0:
        z = np.array([], dtype=complex)
        p = proto * w_high
        k = w_high**order
        kind = "lowpass"
    else:
        w_low = 2 * srate * np.tan(np.pi * low / srate)
        bw = w_high - w_low
        w0sq = w_low * w_high
        pb = proto * bw / 2
        disc = np.sqrt(pb**2 - w0sq)
        p = np.concatenate([pb + disc, pb - disc])
        z = np.zeros(order, dtype=complex)
        k = bw**order
        kind = "bandpass"
    zd, pd, kd = _bilinear_zpk(z, p, k, srate)
    b = np.real(kd * np.poly(zd))
    a = np.real(np.poly(pd))
    sos = sps.zpk2sos(zd, pd, kd)
    return FilterCoefficients(b, a, sos, kind, (low, high), order, srate)


def freq_response(coeffs: FilterCoefficients, freqs) -> np.ndarray:
    """Complex response H(e^{jw}) at ``freqs`` (Hz), evaluated section by section."""
    freqs = np.asarray(freqs, dtype=float)
    zinv = np.exp(-2j * np.pi * freqs / coeffs.srate)
    h = np.ones_like(zinv)
    for sec in coeffs.sos:
        num = sec[0] + sec[1] * zinv + sec[2] * zinv**2
        den = sec[3] + sec[4] * zinv + sec[5] * zinv**2
        h = h * num / den
    return h


class CausalFilter:
    """Stateful causal filter: one instance per stream, state per channel."""

    def __init__(self, coeffs: FilterCoefficients, n_channels: int):
        self.coeffs = coeffs
        self.n_channels = n_channels
        self._zi = np.zeros((coeffs.sos.shape[0], 2, n_channels))

    def reset(self) -> None:
        self._zi[:] = 0.0

    def process(self, chunk: np.ndarray) -> np.ndarray:
        chunk = np.asarray(chunk, dtype=float)
        if chunk.shape[0] == 0:
            return chunk.copy()
        y, self._zi = sps.sosfilt(self.coeffs.sos, chunk, axis=0, zi=self._zi)
        return y


def apply_filter(coeffs: FilterCoefficients, x, mode: str = "causal", streaming: bool = False) -> np.ndarray:
    """Filter ``x`` (samples x channels, or 1-D) along the sample axis.

    ``causal`` is a single forward pass from zero initial state.
    ``zero_phase`` runs forward then reversed, giving zero group delay and
    the squared magnitude response; it needs the whole signal.
    """
    x = np.asarray(x, dtype=float)
    if mode == "causal":
        if x.shape[0] == 0:
            return x.copy()
        return sps.sosfilt(coeffs.sos, x, axis=0)
    if mode == "zero_phase":
        if streaming:
            raise StreamingModeError("zero_phase filtering requires the whole signal; use causal for streams")
        if x.shape[0] == 0:
            return x.copy()
        padlen = min(3 * (2 * coeffs.sos.shape[0] + 1), x.shape[0] - 1)
        return sps.sosfiltfilt(coeffs.sos, x, axis=0, padlen=padlen)
    raise ValueError(f"unknown filter mode {mode!r}")
