"""Continuous signals and their segmentation into epochs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .. import NeuropipeError


class EpochError(NeuropipeError, ValueError):
    pass


@dataclass
class Signal:
    """Uniformly sampled multichannel signal; sample ``i`` sits at ``t0 + i/srate``."""
    data: np.ndarray
    srate: float
    t0: float = 0.0
    channels: tuple[str, ...] = ()
    name: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim == 1:
            self.data = self.data[:, None]
        if not self.channels:
            self.channels = tuple(f"ch{i + 1}" for i in range(self.data.shape[1]))
        self.channels = tuple(self.channels)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def duration(self) -> float:
        return self.n_samples / self.srate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) / self.srate

    def with_data(self, data, srate: float | None = None) -> "Signal":
        return Signal(data, self.srate if srate is None else srate, self.t0, self.channels, self.name)


@dataclass(frozen=True)
class Block:
    start: float
    end: float
    label: str
    payload: dict = field(default_factory=dict, compare=False)


@dataclass
class Epoch:
    data: np.ndarray
    srate: float
    t0: float
    channels: tuple[str, ...] = ()
    label: Any = None
    event_offset: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]


@dataclass
class SkipReport:
    skipped: int = 0
    times: list[float] = field(default_factory=list)


def block_at(blocks: Sequence[Block], t: float) -> Block | None:
    for b in blocks:
        if b.start <= t < b.end:
            return b
    return None


def epoch_samples(duration: float, srate: float) -> int:
    return int(round(duration * srate))


def epoch_fixed(signal: Signal, duration: float, blocks: Sequence[Block] = (),
                origin: float | None = None) -> list[Epoch]:
    """Consecutive non-overlapping epochs; a trailing partial epoch is dropped.

    Epoch ``k`` starts at sample ``round(k * duration * srate)`` so epochs
    stay on a common time grid across streams with different rates.  Labels
    come from the block containing the epoch midpoint.
    """
    if duration <= 0:
        raise EpochError("epoch duration must be positive")
    n = epoch_samples(duration, signal.srate)
    if n < 1:
        raise EpochError(f"epoch duration {duration}s is shorter than one sample at {signal.srate} Hz")
    t_origin = signal.t0 if origin is None else origin
    out = []
    k = 0
    while True:
        start = int(round(k * duration * signal.srate))
        if start + n > signal.n_samples:
            break
        t0 = t_origin + start / signal.srate
        blk = block_at(blocks, t0 + duration / 2) if blocks else None
        out.append(Epoch(signal.data[start:start + n], signal.srate, t0, signal.channels,
                         blk.label if blk else None, None, {"index": k}))
        k += 1
    return out


@dataclass(frozen=True)
class StimulusEvent:
    t: float
    label: Any = None
    payload: dict = field(default_factory=dict, compare=False)


def epoch_around_events(signal: Signal, events: Iterable[StimulusEvent], pre: float, post: float,
                        n_samples: int | None = None, report: SkipReport | None = None) -> list[Epoch]:
    """One epoch per event spanning ``[t - pre, t + post)``.

    Events whose window is not fully inside the signal are skipped and
    counted in ``report``.  ``n_samples`` overrides ``round((pre+post)*srate)``.
    """
    if pre < 0 or post < 0 or pre + post <= 0:
        raise EpochError("need pre, post >= 0 and pre + post > 0")
    n = epoch_samples(pre + post, signal.srate) if n_samples is None else int(n_samples)
    report = report if report is not None else SkipReport()
    out = []
    for ev in events:
        start = int(round((ev.t - pre - signal.t0) * signal.srate))
        if start < 0 or start + n > signal.n_samples:
            report.skipped += 1
            report.times.append(ev.t)
            continue
        out.append(Epoch(signal.data[start:start + n], signal.srate, signal.t0 + start / signal.srate,
                         signal.channels, ev.label, pre, {"event_t": ev.t, **ev.payload}))
    return out
