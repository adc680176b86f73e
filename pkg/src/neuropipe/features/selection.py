"""Feature selection: greedy correlation pruning and PCA."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import NeuropipeError

DEFAULT_CORRELATION_THRESHOLD = 0.9
DEFAULT_RETAINED_VARIANCE = 0.95


class SelectionError(NeuropipeError, ValueError):
    pass


def correlation_prune(matrix, threshold: float = DEFAULT_CORRELATION_THRESHOLD) -> list[int]:
    """Indices of features kept by an in-order greedy scan.

    Constant columns are dropped first; a column is then dropped if its
    |Pearson r| with any already-kept column reaches ``threshold``.
    """
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise SelectionError("correlation pruning needs at least 2 epochs")
    xc = x - x.mean(axis=0)
    norms = np.linalg.norm(xc, axis=0)
    scale = np.max(np.abs(x), axis=0)
    live = norms > 1e-12 * np.maximum(scale, 1.0) * np.sqrt(x.shape[0])
    z = np.zeros_like(xc)
    z[:, live] = xc[:, live] / norms[live]
    kept: list[int] = []
    for j in np.flatnonzero(live):
        if kept:
            r = np.abs(z[:, kept].T @ z[:, j])
            if np.any(r >= threshold):
                continue
        kept.append(int(j))
    return kept


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray                 # (features,)
    components: np.ndarray           # (retained, features), orthonormal rows
    explained_variance_ratio: np.ndarray
    n_components: int

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "n_components": self.n_components,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        comps = np.asarray(d["components"], float).reshape(int(d["n_components"]), -1)
        return cls(np.asarray(d["mean"], float), comps,
                   np.asarray(d["explained_variance_ratio"], float), int(d["n_components"]))


def pca_fit(matrix, retained_variance: float = DEFAULT_RETAINED_VARIANCE) -> PcaModel:
    """Smallest set of principal axes whose cumulative explained variance reaches the target."""
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise SelectionError("PCA needs at least 2 epochs")
    if not 0 < retained_variance <= 1:
        raise SelectionError("retained variance must be in (0, 1]")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    var = s**2
    total = var.sum()
    if total <= 0:
        # all epochs identical: keep a single axis so transforms stay defined
        return PcaModel(mean, vt[:1].copy(), np.zeros(1), 1)
    ratio = var / total
    cum = np.cumsum(ratio)
    k = int(np.searchsorted(cum, retained_variance - 1e-9) + 1)
    k = min(k, int(np.count_nonzero(var > var[0] * 1e-20)))
    return PcaModel(mean, vt[:k].copy(), ratio[:k].copy(), k)


def pca_transform(model: PcaModel, x) -> np.ndarray:
    """Project centred vectors (1-D or rows of a matrix) onto the retained axes."""
    x = np.asarray(x, dtype=float)
    return (x - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, z) -> np.ndarray:
    return np.asarray(z, dtype=float) @ model.components + model.mean
