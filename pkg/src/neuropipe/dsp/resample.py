"""Rational polyphase resampling with a Kaiser-windowed sinc anti-alias filter."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .. import NeuropipeError

KAISER_BETA = 5.0
CUTOFF_FRACTION = 0.45
HALF_TAPS_PER_FACTOR = 10
MAX_DENOMINATOR = 1000


class ResampleError(NeuropipeError, ValueError):
    pass


def rational_ratio(srate_in: float, srate_out: float) -> tuple[int, int]:
    """Return ``(up, down)`` with ``up/down == srate_out/srate_in``."""
    if srate_in <= 0 or srate_out <= 0:
        raise ResampleError("sample rates must be positive")
    ratio = srate_out / srate_in
    frac = Fraction(ratio).limit_denominator(MAX_DENOMINATOR)
    if abs(float(frac) - ratio) > 1e-9 * ratio:
        raise ResampleError(
            f"ratio {srate_out}/{srate_in} is not rational with denominator <= {MAX_DENOMINATOR}"
        )
    return frac.numerator, frac.denominator


def design_antialias(up: int, down: int) -> np.ndarray:
    """FIR taps at the up-sampled rate, DC gain ``up``.

    Cut-off is ``CUTOFF_FRACTION`` of the lower of the two rates.
    """
    half = HALF_TAPS_PER_FACTOR * max(up, down)
    n = np.arange(-half, half + 1)
    # cutoff in cycles/sample at the up-sampled rate
    fc = CUTOFF_FRACTION / max(up, down)
    h = 2 * fc * np.sinc(2 * fc * n) * np.kaiser(2 * half + 1, KAISER_BETA)
    return h * (up / h.sum())


def _polyphase_table(h: np.ndarray, up: int) -> np.ndarray:
    taps_per_phase = -(-len(h) // up)
    padded = np.zeros(taps_per_phase * up)
    padded[: len(h)] = h
    # table[p, l] = h[p + l*up]
    return padded.reshape(taps_per_phase, up).T.copy()


def _polyphase_outputs(x: np.ndarray, table: np.ndarray, up: int, down: int,
                       m_start: int, m_stop: int, offset: int, x_start: int = 0) -> np.ndarray:
    """Outputs ``y[m] = sum_k h[k] * xup[m*down + offset - k]`` for m in [m_start, m_stop).

    ``x`` holds input samples ``x_start .. x_start+len(x)-1``; anything outside
    is treated as zero.
    """
    n_ch = x.shape[1]
    m = np.arange(m_start, m_stop)
    if m.size == 0:
        return np.zeros((0, n_ch))
    pos = m * down + offset
    phase = pos % up
    base = pos // up
    taps = table.shape[1]
    idx = base[:, None] - np.arange(taps)[None, :] - x_start
    valid = (idx >= 0) & (idx < x.shape[0])
    gathered = x[np.clip(idx, 0, max(x.shape[0] - 1, 0))] if x.shape[0] else np.zeros(idx.shape + (n_ch,))
    gathered = np.where(valid[..., None], gathered, 0.0)
    return np.einsum("mlc,ml->mc", gathered, table[phase])


def resample(x, srate_in: float, srate_out: float, block: int = 4096) -> np.ndarray:
    """Zero-delay offline resampling; output length is ``round(n * out / in)``."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    up, down = rational_ratio(srate_in, srate_out)
    if up == down:
        out = x.copy()
    else:
        h = design_antialias(up, down)
        table = _polyphase_table(h, up)
        n_out = int(round(x.shape[0] * up / down))
        centre = (len(h) - 1) // 2
        parts = [
            _polyphase_outputs(x, table, up, down, s, min(s + block, n_out), centre)
            for s in range(0, n_out, block)
        ]
        out = np.concatenate(parts) if parts else np.zeros((0, x.shape[1]))
    return out[:, 0] if squeeze else out


class StreamingResampler:
    """Causal polyphase resampler with carried input history.

    Output ``m`` is emitted once input sample ``floor(m*down/up)`` has
    arrived, so pushing a signal in any chunking yields the same outputs as
    pushing it whole.
    """

    def __init__(self, srate_in: float, srate_out: float, n_channels: int):
        self.up, self.down = rational_ratio(srate_in, srate_out)
        self.n_channels = n_channels
        self.identity = self.up == self.down
        h = design_antialias(self.up, self.down)
        self.table = _polyphase_table(h, self.up)
        self._hist = np.zeros((0, n_channels))
        self._hist_start = 0
        self._n_in = 0
        self._n_out = 0

    @property
    def group_delay_out(self) -> float:
        """Filter delay, in output samples."""
        if self.identity:
            return 0.0
        return (self.table.size - 1) / 2 / self.down

    def process(self, chunk: np.ndarray) -> np.ndarray:
        chunk = np.asarray(chunk, dtype=float).reshape(-1, self.n_channels)
        if self.identity:
            return chunk.copy()
        self._hist = np.concatenate([self._hist, chunk])
        self._n_in += chunk.shape[0]
        # largest m with floor(m*down/up) <= n_in - 1
        m_stop = ((self._n_in - 1) * self.up) // self.down + 1 if self._n_in else 0
        out = _polyphase_outputs(self._hist, self.table, self.up, self.down,
                                 self._n_out, m_stop, 0, self._hist_start)
        self._n_out = max(self._n_out, m_stop)
        keep = self.table.shape[1] + 1
        if self._hist.shape[0] > keep:
            drop = self._hist.shape[0] - keep
            self._hist = self._hist[drop:]
            self._hist_start += drop
        return out


def resample_causal(x, srate_in: float, srate_out: float) -> np.ndarray:
    """Whole-signal equivalent of :class:`StreamingResampler`."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    x2 = x[:, None] if squeeze else x
    r = StreamingResampler(srate_in, srate_out, x2.shape[1])
    out = np.concatenate([r.process(x2[s:s + 8192]) for s in range(0, max(x2.shape[0], 1), 8192)]) \
        if x2.shape[0] else np.zeros((0, x2.shape[1]))
    return out[:, 0] if squeeze else out
