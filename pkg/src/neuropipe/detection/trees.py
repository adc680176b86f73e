"""CART trees (Gini or variance reduction) and bagged forests.

Split search is vectorised per node: candidate feature columns are sorted
once and cumulative class counts (or sums) give the impurity of every cut.
Thresholds sit at midpoints between consecutive distinct values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_MAX_DEPTH = 16
DEFAULT_MIN_LEAF = 2


@dataclass
class Tree:
    feature: np.ndarray      # (nodes,) int, -1 for leaves
    threshold: np.ndarray    # (nodes,)
    left: np.ndarray         # (nodes,) int
    right: np.ndarray        # (nodes,) int
    value: np.ndarray        # (nodes, K) class distribution, or (nodes, 1) mean

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``x``."""
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            go_left = x[rows, np.where(inner, f, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(np.asarray(d["feature"], np.int64), np.asarray(d["threshold"], float),
                   np.asarray(d["left"], np.int64), np.asarray(d["right"], np.int64),
                   np.asarray(d["value"], float))


def _best_split_cls(xs: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int):
    """Best Gini cut over the columns of ``xs`` (n x m). Returns (column, threshold, score) or None."""
    n, m = xs.shape
    order = np.argsort(xs, axis=0, kind="stable")
    xsorted = np.take_along_axis(xs, order, axis=0)
    ys = y[order]                                                  # (n, m)
    onehot = np.zeros((n, m, n_classes))
    np.put_along_axis(onehot, ys[:, :, None], 1.0, axis=2)
    left = np.cumsum(onehot, axis=0)[:-1]                          # (n-1, m, K): first i+1 rows
    total = left[-1] + onehot[-1]
    right = total[None] - left
    n_l = np.arange(1, n)[:, None].astype(float)
    n_r = n - n_l
    # weighted Gini * n = n_l - sum(l^2)/n_l + n_r - sum(r^2)/n_r
    score = (n_l - (left ** 2).sum(axis=2) / n_l) + (n_r - (right ** 2).sum(axis=2) / n_r)
    valid = (xsorted[1:] > xsorted[:-1]) & (n_l >= min_leaf) & (n_r >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score, np.inf).T                       # (m, n-1): column-major tie order
    flat = int(np.argmin(score))
    col, pos = divmod(flat, n - 1)
    thr = 0.5 * (xsorted[pos, col] + xsorted[pos + 1, col])
    if not thr < xsorted[pos + 1, col]:      # midpoint rounded onto the upper value
        thr = xsorted[pos, col]
    return col, thr, float(score[col, pos])


def _best_split_reg(xs: np.ndarray, y: np.ndarray, min_leaf: int):
    n, m = xs.shape
    order = np.argsort(xs, axis=0, kind="stable")
    xsorted = np.take_along_axis(xs, order, axis=0)
    ys = y[order]
    s = np.cumsum(ys, axis=0)[:-1]
    s2 = np.cumsum(ys ** 2, axis=0)[:-1]
    tot, tot2 = ys.sum(axis=0), (ys ** 2).sum(axis=0)
    n_l = np.arange(1, n)[:, None].astype(float)
    n_r = n - n_l
    sse = (s2 - s ** 2 / n_l) + ((tot2 - s2) - (tot - s) ** 2 / n_r)
    valid = (xsorted[1:] > xsorted[:-1]) & (n_l >= min_leaf) & (n_r >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, sse, np.inf).T
    flat = int(np.argmin(score))
    col, pos = divmod(flat, n - 1)
    thr = 0.5 * (xsorted[pos, col] + xsorted[pos + 1, col])
    if not thr < xsorted[pos + 1, col]:
        thr = xsorted[pos, col]
    return col, thr, float(score[col, pos])


def build_tree(x: np.ndarray, y: np.ndarray, *, task: str, n_classes: int = 0, max_depth: int = DEFAULT_MAX_DEPTH,
               min_leaf: int = DEFAULT_MIN_LEAF, max_features: int | None = None,
               rng: np.random.Generator | None = None) -> Tree:
    """Grow one tree depth-first. ``max_features`` candidates are drawn per node when given."""
    n, F = x.shape
    feature, threshold, left, right, value = [], [], [], [], []

    def leaf_value(idx):
        if task == "classification":
            return np.bincount(y[idx], minlength=n_classes) / idx.size
        return np.array([y[idx].mean()])

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(leaf_value(idx))
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or idx.size < 2 * min_leaf:
            continue
        yi = y[idx]
        if task == "classification":
            if np.all(yi == yi[0]):
                continue
        elif np.all(yi == yi[0]):
            continue
        if max_features is not None and max_features < F:
            feats = np.sort(rng.choice(F, max_features, replace=False))
        else:
            feats = np.arange(F)
        xs = x[np.ix_(idx, feats)]
        best = (_best_split_cls(xs, yi, n_classes, min_leaf) if task == "classification"
                else _best_split_reg(xs, yi, min_leaf))
        if best is None:
            continue
        col, thr, _ = best
        f = int(feats[col])
        mask = x[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        if li.size == 0 or ri.size == 0:
            continue
        feature[node] = f
        threshold[node] = float(thr)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(np.asarray(feature, np.int64), np.asarray(threshold, float), np.asarray(left, np.int64),
                np.asarray(right, np.int64), np.vstack(value))


def forest_fit(x: np.ndarray, y: np.ndarray, *, task: str, n_classes: int = 0, n_trees: int = 100,
               max_depth: int = DEFAULT_MAX_DEPTH, min_leaf: int = DEFAULT_MIN_LEAF,
               max_features: int | None = None, seed: int = 0) -> list[Tree]:
    """Bagged trees; every tree draws its bootstrap and feature candidates from ``seed``."""
    n, F = x.shape
    if max_features is None:
        max_features = max(1, int(np.sqrt(F))) if task == "classification" else max(1, F // 3)
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, n, n)
        trees.append(build_tree(x[boot], y[boot], task=task, n_classes=n_classes, max_depth=max_depth,
                                min_leaf=min_leaf, max_features=max_features, rng=rng))
    return trees
