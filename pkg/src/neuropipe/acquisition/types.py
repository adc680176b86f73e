"""Data carried between acquisition, synchronisation and persistence."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import NeuropipeError


class AcquisitionError(NeuropipeError):
    pass


@dataclass(frozen=True)
class SampleChunk:
    """Timestamped block of samples from one stream; read-only once built."""
    stream: str
    t: np.ndarray          # (n,) seconds, strictly increasing
    values: np.ndarray     # (n, channels)

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(-1)
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(len(t), -1) if len(t) else v.reshape(0, 0)
        if v.shape[0] != t.shape[0]:
            raise AcquisitionError(f"chunk of {self.stream!r}: {t.shape[0]} timestamps but {v.shape[0]} rows")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise AcquisitionError(f"chunk of {self.stream!r}: timestamps not strictly increasing")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    @property
    def n_samples(self) -> int:
        return self.t.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class StreamEvent:
    t: float
    tag: str
    payload: dict[str, Any] = field(default_factory=dict)


def concat_chunks(chunks, stream: str | None = None, n_channels: int | None = None) -> SampleChunk:
    chunks = [c for c in chunks if c.n_samples]
    if not chunks:
        return SampleChunk(stream or "", np.zeros(0), np.zeros((0, n_channels or 0)))
    return SampleChunk(stream or chunks[0].stream, np.concatenate([c.t for c in chunks]),
                       np.concatenate([c.values for c in chunks]))


def split_chunks(stream: str, t: np.ndarray, values: np.ndarray, chunk_size: int) -> list[SampleChunk]:
    chunk_size = max(int(chunk_size), 1)
    return [SampleChunk(stream, t[s:s + chunk_size], values[s:s + chunk_size])
            for s in range(0, len(t), chunk_size)]
