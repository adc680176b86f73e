"""Symmetric FastICA (logcosh contrast) and artifact-component rejection."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import NeuropipeError

log = logging.getLogger(__name__)

TOL = 1e-4
MAX_ITER = 200
EOG_CORR_THRESHOLD = 0.7


class IcaError(NeuropipeError, ValueError):
    pass


@dataclass(frozen=True)
class IcaModel:
    mean: np.ndarray          # (channels,)
    whitening: np.ndarray     # (components, channels)
    unmixing: np.ndarray      # (components, components), orthogonal
    mixing: np.ndarray        # (channels, components)
    n_components: int
    n_iter: int
    converged: bool
    seed: int

    @property
    def filters(self) -> np.ndarray:
        """Full unmixing applied to centred channel data."""
        return self.unmixing @ self.whitening

    def sources(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float)
        return (data - self.mean) @ self.filters.T

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "whitening": self.whitening.tolist(),
            "unmixing": self.unmixing.tolist(),
            "mixing": self.mixing.tolist(),
            "n_components": self.n_components,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IcaModel":
        return cls(
            np.asarray(d["mean"], float), np.asarray(d["whitening"], float),
            np.asarray(d["unmixing"], float), np.asarray(d["mixing"], float),
            int(d["n_components"]), int(d["n_iter"]), bool(d["converged"]), int(d["seed"]),
        )


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    # W <- (W W^T)^{-1/2} W
    s, u = np.linalg.eigh(w @ w.T)
    s = np.clip(s, np.finfo(float).tiny, None)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ w


def fast_ica(data, n_components: int | None = None, seed: int = 0,
             tol: float = TOL, max_iter: int = MAX_ITER) -> IcaModel:
    """Fit symmetric FastICA to ``data`` (samples x channels).

    Whitening is by eigendecomposition of the (population) covariance, so the
    recovered components have unit variance and are exactly decorrelated on
    the training data.  If the fixed point does not converge within
    ``max_iter`` the best iterate is returned with ``converged=False``.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise IcaError("data must be samples x channels")
    n, c = x.shape
    if n < 10 * c:
        raise IcaError(f"need at least {10 * c} samples for {c} channels, got {n}")
    k = c if n_components is None else int(n_components)
    if not 1 <= k <= c:
        raise IcaError(f"n_components must be in [1, {c}]")

    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order][:k], evecs[:, order][:, :k]
    if evals[-1] <= 1e-12 * max(evals[0], np.finfo(float).tiny):
        raise IcaError("data is rank-deficient; reduce n_components")
    whitening = (evecs / np.sqrt(evals)).T            # (k, c)
    z = xc @ whitening.T                               # (n, k)

    rng = np.random.default_rng(seed)
    w = _sym_decorrelate(rng.standard_normal((k, k)))
    best_w, best_dist = w, np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        y = z @ w.T                                    # (n, k)
        gy = np.tanh(y)
        g_prime = 1.0 - gy**2
        w_new = (gy.T @ z) / n - g_prime.mean(axis=0)[:, None] * w
        w_new = _sym_decorrelate(w_new)
        dist = np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0))
        w = w_new
        if dist < best_dist:
            best_w, best_dist = w, dist
        if dist < tol:
            converged = True
            break
    if not converged:
        log.warning("FastICA did not converge in %d iterations (best distance %.2e)", max_iter, best_dist)
        w = best_w
    mixing = np.linalg.pinv(whitening) @ w.T
    return IcaModel(mean, whitening, w, mixing, k, it, converged, int(seed))


def eog_artifact_components(model: IcaModel, data, reference,
                            threshold: float = EOG_CORR_THRESHOLD) -> list[int]:
    """Components whose |Pearson r| with any reference channel exceeds ``threshold``."""
    s = model.sources(data)
    ref = np.asarray(reference, dtype=float)
    if ref.ndim == 1:
        ref = ref[:, None]
    if ref.shape[0] != s.shape[0]:
        raise IcaError("reference must have the same number of samples as data")
    sc = s - s.mean(axis=0)
    rc = ref - ref.mean(axis=0)
    denom = np.outer(np.linalg.norm(sc, axis=0), np.linalg.norm(rc, axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0, (sc.T @ rc) / np.where(denom > 0, denom, 1.0), 0.0)
    return [int(i) for i in np.flatnonzero(np.max(np.abs(r), axis=1) > threshold)]


@dataclass(frozen=True)
class EogRejection:
    """Automatic rule: reject components correlated with an EOG reference."""
    reference: np.ndarray
    threshold: float = EOG_CORR_THRESHOLD


def remove_artifact_components(model: IcaModel, data, rejection: "Sequence[int] | EogRejection") -> np.ndarray:
    """Subtract the back-projection of the rejected components from ``data``.

    Equivalent to reconstructing with those components zeroed; any part of
    the data outside the ICA subspace is left as is.
    """
    if isinstance(rejection, EogRejection):
        rejection = eog_artifact_components(model, data, rejection.reference, rejection.threshold)
    rejected = sorted(set(int(i) for i in rejection))
    if any(i < 0 or i >= model.n_components for i in rejected):
        raise IcaError(f"component index out of range [0, {model.n_components})")
    if len(rejected) == model.n_components:
        raise IcaError("refusing to reject every component")
    data = np.asarray(data, dtype=float)
    if not rejected:
        return data.copy()
    s = model.sources(data)[:, rejected]
    return data - s @ model.mixing[:, rejected].T
