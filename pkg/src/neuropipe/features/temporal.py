"""Time-domain features: summary statistics, Hjorth parameters, PERCLOS."""
from __future__ import annotations

import numpy as np

from .. import NeuropipeError

STATS = ("mean", "min", "max", "median", "q1", "q3", "variance", "std", "kurtosis")
DEFAULT_CLOSED_THRESHOLD = 0.2


class TemporalError(NeuropipeError, ValueError):
    pass


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def excess_kurtosis(x) -> np.ndarray:
    """Population excess kurtosis per column; 0 for constant columns."""
    x = _as_2d(x)
    d = x - x.mean(axis=0)
    m2 = np.mean(d**2, axis=0)
    m4 = np.mean(d**4, axis=0)
    out = np.zeros(x.shape[1])
    live = m2 > 0
    out[live] = m4[live] / m2[live] ** 2 - 3.0
    return out


def time_stats(x, stats=STATS) -> dict[str, np.ndarray]:
    """Per-channel summary statistics of an epoch (samples x channels).

    Quartiles use linear interpolation; variance is the population variance
    and kurtosis is excess kurtosis (Gaussian -> 0).
    """
    x = _as_2d(x)
    if x.shape[0] == 0:
        raise TemporalError("epoch is empty")
    funcs = {
        "mean": lambda: x.mean(axis=0),
        "min": lambda: x.min(axis=0),
        "max": lambda: x.max(axis=0),
        "median": lambda: np.percentile(x, 50, axis=0),
        "q1": lambda: np.percentile(x, 25, axis=0),
        "q3": lambda: np.percentile(x, 75, axis=0),
        "variance": lambda: x.var(axis=0),
        "std": lambda: x.std(axis=0),
        "kurtosis": lambda: excess_kurtosis(x),
    }
    out = {}
    for s in stats:
        if s not in funcs:
            raise TemporalError(f"unknown statistic {s!r}; known: {list(funcs)}")
        out[s] = funcs[s]()
    return out


def hjorth(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hjorth activity, mobility and complexity per channel.

    Derivatives are first differences.  Channels with zero variance (or a
    zero-variance difference) return zeros.
    """
    x = _as_2d(x)
    if x.shape[0] < 3:
        raise TemporalError("Hjorth parameters need at least 3 samples")
    d1 = np.diff(x, axis=0)
    d2 = np.diff(d1, axis=0)
    v0, v1, v2 = x.var(axis=0), d1.var(axis=0), d2.var(axis=0)
    activity = v0.copy()
    mobility = np.zeros_like(v0)
    complexity = np.zeros_like(v0)
    ok = (v0 > 0) & (v1 > 0)
    mobility[ok] = np.sqrt(v1[ok] / v0[ok])
    mob_d1 = np.sqrt(v2[ok] / v1[ok])
    complexity[ok] = mob_d1 / mobility[ok]
    activity[~(v0 > 0)] = 0.0
    return activity, mobility, complexity


def perclos(openness, closed_threshold: float = DEFAULT_CLOSED_THRESHOLD) -> float:
    """Fraction of samples with openness at or below ``closed_threshold``."""
    o = np.asarray(openness, dtype=float).ravel()
    if o.size == 0:
        raise TemporalError("PERCLOS needs a non-empty openness series")
    if not 0 < closed_threshold < 1:
        raise TemporalError("closed threshold must be in (0, 1)")
    return float(np.count_nonzero(o <= closed_threshold) / o.size)
