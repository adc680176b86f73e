"""Align heterogeneous streams onto the master stream's sample clock.

Each frame takes, for every stream, the sample nearest in time to the
master timestamp if it lies within the tolerance; otherwise the most recent
earlier sample is carried forward and flagged stale.  Nothing is
interpolated.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .types import AcquisitionError, SampleChunk

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyncPolicy:
    master: str | None = None          # default: highest srate, first declared on ties
    tolerance: float | None = None     # default: 0.5 / slowest srate
    max_gap: float = 0.1               # seconds between master samples before a gap event
    queue_capacity: int = 1024         # chunks per stream queue (online use)


@dataclass(frozen=True)
class GapEvent:
    t_start: float
    t_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class FusedFrame:
    t: float
    values: dict[str, np.ndarray]
    stale: dict[str, bool]


@dataclass
class FusedFrames:
    """A run of fused frames stored column-wise."""
    t: np.ndarray
    values: dict[str, np.ndarray]
    stale: dict[str, np.ndarray]
    source_t: dict[str, np.ndarray]
    gaps: list[GapEvent] = field(default_factory=list)

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> FusedFrame:
        return FusedFrame(float(self.t[i]), {k: v[i] for k, v in self.values.items()},
                          {k: bool(v[i]) for k, v in self.stale.items()})

    def __iter__(self) -> Iterator[FusedFrame]:
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def empty(cls, channels: Mapping[str, int]) -> "FusedFrames":
        return cls(np.zeros(0), {k: np.zeros((0, c)) for k, c in channels.items()},
                   {k: np.zeros(0, bool) for k in channels}, {k: np.zeros(0) for k in channels})

    @classmethod
    def concat(cls, parts: Sequence["FusedFrames"]) -> "FusedFrames":
        parts = list(parts)
        first = parts[0]
        return cls(
            np.concatenate([p.t for p in parts]),
            {k: np.concatenate([p.values[k] for p in parts]) for k in first.values},
            {k: np.concatenate([p.stale[k] for p in parts]) for k in first.stale},
            {k: np.concatenate([p.source_t[k] for p in parts]) for k in first.source_t},
            [g for p in parts for g in p.gaps],
        )


def choose_master(srates: Mapping[str, float], policy: SyncPolicy) -> str:
    if policy.master is not None:
        if policy.master not in srates:
            raise AcquisitionError(f"master stream {policy.master!r} is not declared")
        return policy.master
    best = max(srates.values())
    return next(name for name, r in srates.items() if r == best)


def default_tolerance(srates: Mapping[str, float], policy: SyncPolicy) -> float:
    return policy.tolerance if policy.tolerance is not None else 0.5 / min(srates.values())


class _Buffer:
    def __init__(self, n_channels: int):
        self._t = np.zeros(0)
        self._v = np.zeros((0, n_channels))
        self._pending: list[SampleChunk] = []
        self._last = -np.inf
        self.closed = False

    def append(self, chunk: SampleChunk) -> None:
        if chunk.n_samples == 0:
            return
        if chunk.t[0] <= self._last:
            raise AcquisitionError(f"stream {chunk.stream!r} went back in time at t={chunk.t[0]}")
        self._last = chunk.t[-1]
        self._pending.append(chunk)

    def _consolidate(self) -> None:
        if self._pending:
            self._t = np.concatenate([self._t] + [c.t for c in self._pending])
            self._v = np.concatenate([self._v] + [c.values for c in self._pending])
            self._pending = []

    @property
    def t(self) -> np.ndarray:
        self._consolidate()
        return self._t

    @property
    def v(self) -> np.ndarray:
        self._consolidate()
        return self._v

    def trim(self, start: int) -> None:
        self._consolidate()
        self._t, self._v = self._t[start:], self._v[start:]


class Synchronizer:
    """Incremental fusion; ``push`` chunks as they arrive, ``pop`` ready frames.

    Frames are emitted only once every other stream has either produced a
    sample beyond ``t + tolerance`` or been closed, so the output does not
    depend on how the inputs were chunked.
    """

    def __init__(self, srates: Mapping[str, float], channels: Mapping[str, int],
                 policy: SyncPolicy = SyncPolicy()):
        if not srates:
            raise AcquisitionError("synchronisation needs at least one stream")
        self.srates = dict(srates)
        self.channels = dict(channels)
        self.policy = policy
        self.master = choose_master(self.srates, policy)
        self.tolerance = default_tolerance(self.srates, policy)
        self._buf = {k: _Buffer(self.channels[k]) for k in self.srates}
        self._started = False
        self._last_master_t: float | None = None
        self.dropped_leading = 0
        self.gaps: list[GapEvent] = []

    def push(self, chunk: SampleChunk) -> None:
        if chunk.stream not in self._buf:
            raise AcquisitionError(f"undeclared stream {chunk.stream!r}")
        if chunk.n_samples and chunk.n_channels != self.channels[chunk.stream]:
            raise AcquisitionError(f"stream {chunk.stream!r}: {chunk.n_channels} channels, "
                                   f"declared {self.channels[chunk.stream]}")
        self._buf[chunk.stream].append(chunk)

    def close(self, stream: str | None = None) -> None:
        for k in ([stream] if stream else list(self._buf)):
            self._buf[k].closed = True

    def pop(self) -> FusedFrames:
        mb = self._buf[self.master]
        tol = self.tolerance
        others = [k for k in self._buf if k != self.master]
        T = mb.t
        if T.size == 0:
            return FusedFrames.empty(self.channels)
        # readiness: every other stream has data past T + tol, or is closed
        limit = np.inf
        for k in others:
            b = self._buf[k]
            if not b.closed:
                limit = min(limit, (b.t[-1] - tol) if b.t.size else -np.inf)
        if limit == np.inf:
            n_ready = T.size
        elif limit == -np.inf:
            n_ready = 0
        else:
            n_ready = int(np.searchsorted(T, limit, side="left"))
        if not self._started and n_ready:
            # start once every stream has begun (has a sample at or before T + tol)
            first_ok = 0
            for k in others:
                b = self._buf[k]
                if b.t.size == 0:
                    first_ok = n_ready if not b.closed else T.size
                    continue
                first_ok = max(first_ok, int(np.searchsorted(T, b.t[0] - tol, side="left")))
            first_ok = min(first_ok, n_ready)
            if first_ok:
                self.dropped_leading += first_ok
                mb.trim(first_ok)
                T = mb.t
                n_ready -= first_ok
            if n_ready:
                self._started = True
        if n_ready == 0:
            return FusedFrames.empty(self.channels)
        Tr = T[:n_ready]
        values = {self.master: mb.v[:n_ready].copy()}
        stale = {self.master: np.zeros(n_ready, bool)}
        source_t = {self.master: Tr.copy()}
        for k in others:
            b = self._buf[k]
            if b.t.size == 0:
                raise AcquisitionError(f"stream {k!r} produced no samples")
            hi = np.searchsorted(b.t, Tr, side="left")        # first sample >= T
            lo = np.clip(hi - 1, 0, b.t.size - 1)
            hi_c = np.clip(hi, 0, b.t.size - 1)
            d_lo = np.where(hi - 1 >= 0, np.abs(Tr - b.t[lo]), np.inf)
            d_hi = np.where(hi < b.t.size, np.abs(b.t[hi_c] - Tr), np.inf)
            nearest = np.where(d_hi < d_lo, hi_c, lo)          # ties -> earlier sample
            d_near = np.minimum(d_lo, d_hi)
            fresh = d_near <= tol
            prev = np.searchsorted(b.t, Tr, side="right") - 1  # last sample <= T
            idx = np.where(fresh, nearest, np.clip(prev, 0, None))
            values[k] = b.v[idx]
            stale[k] = ~fresh
            source_t[k] = b.t[idx]
            # keep from the last sample at or before the final emitted frame
            keep = max(int(np.searchsorted(b.t, Tr[-1], side="right")) - 1, 0)
            b.trim(keep)
        gaps = []
        prev_t = np.concatenate([[self._last_master_t], Tr[:-1]]) if self._last_master_t is not None else Tr[:-1]
        cur_t = Tr if self._last_master_t is not None else Tr[1:]
        for i in np.flatnonzero(cur_t - prev_t > self.policy.max_gap):
            gaps.append(GapEvent(float(prev_t[i]), float(cur_t[i])))
            log.warning("gap of %.3fs in master stream %r at t=%.6f", cur_t[i] - prev_t[i], self.master, prev_t[i])
        self.gaps.extend(gaps)
        self._last_master_t = float(Tr[-1])
        mb.trim(n_ready)
        return FusedFrames(Tr.copy(), values, stale, source_t, gaps)


def synchronize(chunks: Mapping[str, Sequence[SampleChunk]], policy: SyncPolicy = SyncPolicy(),
                srates: Mapping[str, float] | None = None) -> FusedFrames:
    """Fuse whole recordings (stream name -> time-ordered chunks)."""
    if not chunks:
        raise AcquisitionError("synchronisation needs at least one stream")
    channels = {}
    for k, seq in chunks.items():
        nonempty = [c for c in seq if c.n_samples]
        channels[k] = nonempty[0].n_channels if nonempty else 0
    if srates is None:
        srates = {k: _estimate_srate(seq) for k, seq in chunks.items()}
    sync = Synchronizer(srates, channels, policy)
    for k, seq in chunks.items():
        for c in seq:
            sync.push(c)
    sync.close()
    return sync.pop()


def _estimate_srate(seq: Sequence[SampleChunk]) -> float:
    t = np.concatenate([c.t for c in seq]) if seq else np.zeros(0)
    if t.size < 2:
        return 1.0
    return float(1.0 / np.median(np.diff(t)))
