"""Labelled feature matrices and stratified, seeded splits."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import NeuropipeError


class DatasetError(NeuropipeError, ValueError):
    pass


@dataclass
class Dataset:
    """Epochs x features with class ids (dense 0..K-1) or real targets."""
    x: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    class_names: tuple[str, ...] | None = None      # None for regression
    groups: tuple[str, ...] = ()
    t0: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 2:
            raise DatasetError("feature matrix must be 2-D")
        n = self.x.shape[0]
        self.y = np.asarray(self.y, dtype=np.int64 if self.class_names is not None else float)
        if self.y.shape != (n,):
            raise DatasetError(f"{n} rows but {self.y.size} labels")
        if self.x.shape[1] != len(self.feature_names):
            raise DatasetError(f"{self.x.shape[1]} columns but {len(self.feature_names)} feature names")
        if not np.all(np.isfinite(self.x)):
            r, c = np.argwhere(~np.isfinite(self.x))[0]
            raise DatasetError(f"non-finite value in row {r}, feature {self.feature_names[c]!r}")
        if self.class_names is not None and n and (self.y.min() < 0 or self.y.max() >= len(self.class_names)):
            raise DatasetError("class ids must lie in 0..K-1")
        if self.groups and len(self.groups) != n:
            raise DatasetError("group ids must match row count")
        if self.t0.size == 0:
            self.t0 = np.full(n, np.nan)

    @property
    def task(self) -> str:
        return "regression" if self.class_names is None else "classification"

    @property
    def n_classes(self) -> int:
        return 0 if self.class_names is None else len(self.class_names)

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        groups = tuple(self.groups[i] for i in idx) if self.groups else ()
        return Dataset(self.x[idx], self.y[idx], self.feature_names, self.class_names, groups, self.t0[idx])

    @classmethod
    def from_labels(cls, x, labels: Sequence, feature_names, classes: Sequence[str] | None = None,
                    groups=(), t0=None) -> "Dataset":
        """Map string labels to dense ids (sorted class names unless ``classes`` is given)."""
        labels = [str(v) for v in labels]
        names = tuple(classes) if classes is not None else tuple(sorted(set(labels)))
        index = {c: i for i, c in enumerate(names)}
        missing = sorted(set(labels) - set(index))
        if missing:
            raise DatasetError(f"labels {missing} not among classes {list(names)}")
        return cls(np.asarray(x, float).reshape(len(labels), -1), np.array([index[v] for v in labels]),
                   tuple(feature_names), names, tuple(groups),
                   np.zeros(0) if t0 is None else np.asarray(t0, float))


def _class_rows(ds: Dataset, rng: np.random.Generator) -> list[np.ndarray]:
    out = []
    for k in range(ds.n_classes):
        rows = np.flatnonzero(ds.y == k)
        if rows.size == 0:
            continue
        if rows.size == 1:
            raise DatasetError(f"class {ds.class_names[k]!r} has a single row; cannot stratify")
        out.append(rng.permutation(rows))
    return out


def split_indices(ds: Dataset, holdout: float = 0.8, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sorted train and test row indices with ``holdout`` of the rows in train.

    Classification splits are stratified: every class puts round(holdout * n_k)
    rows in train, clipped so both sides keep at least one.
    """
    if not 0 < holdout < 1:
        raise DatasetError("holdout ratio must be in (0, 1)")
    rng = np.random.default_rng(seed)
    if ds.task == "regression":
        if len(ds) < 2:
            raise DatasetError("need at least 2 rows to split")
        perm = rng.permutation(len(ds))
        n_tr = min(max(int(round(holdout * len(ds))), 1), len(ds) - 1)
        return np.sort(perm[:n_tr]), np.sort(perm[n_tr:])
    train, test = [], []
    for rows in _class_rows(ds, rng):
        n_tr = min(max(int(round(holdout * rows.size)), 1), rows.size - 1)
        train.append(rows[:n_tr])
        test.append(rows[n_tr:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split_dataset(ds: Dataset, holdout: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    tr, te = split_indices(ds, holdout, seed)
    return ds.subset(tr), ds.subset(te)


def kfold_indices(ds: Dataset, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold: rows of each shuffled class are dealt round-robin to folds."""
    if k < 2 or k > len(ds):
        raise DatasetError(f"k must be in 2..{len(ds)}")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(ds), dtype=np.int64)
    if ds.task == "regression":
        perm = rng.permutation(len(ds))
        fold[perm] = np.arange(len(ds)) % k
    else:
        offset = 0
        for rows in _class_rows(ds, rng):
            fold[rows] = (np.arange(rows.size) + offset) % k
            offset += rows.size
    return [(np.flatnonzero(fold != i), np.flatnonzero(fold == i)) for i in range(k)]


def kfold(ds: Dataset, k: int = 5, seed: int = 0) -> list[tuple[Dataset, Dataset]]:
    return [(ds.subset(tr), ds.subset(te)) for tr, te in kfold_indices(ds, k, seed)]
