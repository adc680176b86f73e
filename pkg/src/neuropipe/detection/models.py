"""Classifiers and regressors behind one ``fit`` / ``predict`` interface.

Every estimator works on already standardised features (the lineage takes
care of that) and exposes its fitted state as plain arrays so models
serialise to JSON without pickling.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp, softmax

from .. import NeuropipeError
from .trees import DEFAULT_MAX_DEPTH, DEFAULT_MIN_LEAF, Tree, build_tree, forest_fit

CLASSIFIERS = ("knn", "logistic", "lda", "qda", "dtree", "rforest")
REGRESSORS = ("linreg", "rforest_reg")
RIDGE_COV = 1e-6
RIDGE_OLS = 1e-8


class ModelError(NeuropipeError, ValueError):
    pass


def _vote(labels: np.ndarray, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Majority vote per row of ``labels`` (rows x voters); ties go to the smallest class id."""
    counts = np.zeros((labels.shape[0], n_classes))
    for k in range(n_classes):
        counts[:, k] = (labels == k).sum(axis=1)
    winner = np.argmax(counts, axis=1)
    return winner, counts[np.arange(labels.shape[0]), winner] / labels.shape[1]


class Knn:
    name = "knn"

    def __init__(self, k: int = 5):
        self.k = int(k)

    def fit(self, x, y, n_classes, seed=0):
        self.x, self.y, self.n_classes = np.asarray(x, float), np.asarray(y, np.int64), n_classes
        return self

    def predict(self, x):
        x = np.asarray(x, float)
        k = min(self.k, self.x.shape[0])
        d2 = (x ** 2).sum(1)[:, None] - 2 * x @ self.x.T + (self.x ** 2).sum(1)[None, :]
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]       # distance ties: earlier training row
        return _vote(self.y[nn], self.n_classes)

    def state(self):
        return {"k": self.k, "x": self.x.tolist(), "y": self.y.tolist(), "n_classes": self.n_classes}

    @classmethod
    def from_state(cls, s):
        m = cls(s["k"])
        m.x, m.y, m.n_classes = np.asarray(s["x"], float), np.asarray(s["y"], np.int64), s["n_classes"]
        return m


class Logistic:
    """Multinomial logistic regression by gradient descent with backtracking steps."""
    name = "logistic"

    def __init__(self, l2: float = 1e-4, max_iter: int = 500, tol: float = 1e-6):
        self.l2, self.max_iter, self.tol = float(l2), int(max_iter), float(tol)

    def _loss_grad(self, w, x1, onehot):
        z = x1 @ w
        lse = logsumexp(z, axis=1)
        loss = float(np.mean(lse - (z * onehot).sum(1)) + 0.5 * self.l2 * (w[:-1] ** 2).sum())
        p = np.exp(z - lse[:, None])
        g = x1.T @ (p - onehot) / x1.shape[0]
        g[:-1] += self.l2 * w[:-1]
        return loss, g

    def fit(self, x, y, n_classes, seed=0):
        x = np.asarray(x, float)
        x1 = np.hstack([x, np.ones((x.shape[0], 1))])
        onehot = np.eye(n_classes)[np.asarray(y)]
        w = np.zeros((x1.shape[1], n_classes))
        loss, g = self._loss_grad(w, x1, onehot)
        step = 1.0
        self.n_iter = 0
        for it in range(1, self.max_iter + 1):
            self.n_iter = it
            gn = float((g ** 2).sum())
            if np.sqrt(gn) < self.tol:
                break
            while True:
                w_new = w - step * g
                loss_new, g_new = self._loss_grad(w_new, x1, onehot)
                if loss_new <= loss - 0.5 * step * gn or step < 1e-10:
                    break
                step *= 0.5
            done = loss - loss_new < self.tol
            w, loss, g = w_new, loss_new, g_new
            step = min(step * 2.0, 16.0)
            if done:
                break
        self.w, self.n_classes = w, n_classes
        return self

    def proba(self, x):
        x = np.asarray(x, float)
        return softmax(np.hstack([x, np.ones((x.shape[0], 1))]) @ self.w, axis=1)

    def predict(self, x):
        p = self.proba(x)
        lab = np.argmax(p, axis=1)
        return lab, p[np.arange(p.shape[0]), lab]

    def state(self):
        return {"l2": self.l2, "max_iter": self.max_iter, "tol": self.tol, "w": self.w.tolist(),
                "n_classes": self.n_classes}

    @classmethod
    def from_state(cls, s):
        m = cls(s["l2"], s["max_iter"], s["tol"])
        m.w, m.n_classes = np.asarray(s["w"], float), s["n_classes"]
        return m


class Gaussian:
    """LDA (shared covariance) or QDA (per-class covariance), ridge-regularised."""

    def __init__(self, shared: bool, ridge: float = RIDGE_COV):
        self.shared, self.ridge = shared, float(ridge)
        self.name = "lda" if shared else "qda"

    def fit(self, x, y, n_classes, seed=0):
        x, y = np.asarray(x, float), np.asarray(y)
        F = x.shape[1]
        self.means = np.vstack([x[y == k].mean(axis=0) for k in range(n_classes)])
        self.log_prior = np.log(np.bincount(y, minlength=n_classes) / y.size)
        covs = []
        if self.shared:
            r = x - self.means[y]
            covs.append(r.T @ r / x.shape[0] + self.ridge * np.eye(F))
        else:
            for k in range(n_classes):
                r = x[y == k] - self.means[k]
                covs.append(r.T @ r / max(r.shape[0], 1) + self.ridge * np.eye(F))
        self.prec, self.logdet = [], []
        for c in covs:
            sign, ld = np.linalg.slogdet(c)
            if sign <= 0:
                raise ModelError(f"{self.name}: covariance not positive definite")
            self.prec.append(np.linalg.inv(c))
            self.logdet.append(ld)
        self.n_classes = n_classes
        return self

    def log_post(self, x):
        x = np.asarray(x, float)
        out = np.empty((x.shape[0], self.n_classes))
        for k in range(self.n_classes):
            p = self.prec[0 if self.shared else k]
            ld = self.logdet[0 if self.shared else k]
            d = x - self.means[k]
            out[:, k] = -0.5 * np.einsum("ij,jk,ik->i", d, p, d) - 0.5 * ld + self.log_prior[k]
        return out

    def predict(self, x):
        p = softmax(self.log_post(x), axis=1)
        lab = np.argmax(p, axis=1)
        return lab, p[np.arange(p.shape[0]), lab]

    def state(self):
        return {"shared": self.shared, "ridge": self.ridge, "means": self.means.tolist(),
                "log_prior": self.log_prior.tolist(), "prec": [p.tolist() for p in self.prec],
                "logdet": list(self.logdet), "n_classes": self.n_classes}

    @classmethod
    def from_state(cls, s):
        m = cls(s["shared"], s["ridge"])
        m.means, m.log_prior = np.asarray(s["means"], float), np.asarray(s["log_prior"], float)
        m.prec = [np.asarray(p, float) for p in s["prec"]]
        m.logdet, m.n_classes = list(s["logdet"]), s["n_classes"]
        return m


class DecisionTree:
    name = "dtree"

    def __init__(self, max_depth: int = DEFAULT_MAX_DEPTH, min_leaf: int = DEFAULT_MIN_LEAF):
        self.max_depth, self.min_leaf = int(max_depth), int(min_leaf)

    def fit(self, x, y, n_classes, seed=0):
        self.tree = build_tree(np.asarray(x, float), np.asarray(y, np.int64), task="classification",
                               n_classes=n_classes, max_depth=self.max_depth, min_leaf=self.min_leaf)
        self.n_classes = n_classes
        return self

    def predict(self, x):
        v = self.tree.value[self.tree.apply(np.asarray(x, float))]
        lab = np.argmax(v, axis=1)
        return lab, v[np.arange(v.shape[0]), lab]

    def state(self):
        return {"max_depth": self.max_depth, "min_leaf": self.min_leaf, "tree": self.tree.to_dict(),
                "n_classes": self.n_classes}

    @classmethod
    def from_state(cls, s):
        m = cls(s["max_depth"], s["min_leaf"])
        m.tree, m.n_classes = Tree.from_dict(s["tree"]), s["n_classes"]
        return m


class RandomForest:
    """Classification forest; each tree votes its leaf majority, confidence is the vote share."""
    name = "rforest"

    def __init__(self, n_trees: int = 100, max_depth: int = DEFAULT_MAX_DEPTH, min_leaf: int = DEFAULT_MIN_LEAF,
                 max_features: int | None = None):
        self.n_trees, self.max_depth, self.min_leaf = int(n_trees), int(max_depth), int(min_leaf)
        self.max_features = max_features

    def fit(self, x, y, n_classes, seed=0):
        self.trees = forest_fit(np.asarray(x, float), np.asarray(y, np.int64), task="classification",
                                n_classes=n_classes, n_trees=self.n_trees, max_depth=self.max_depth,
                                min_leaf=self.min_leaf, max_features=self.max_features, seed=seed)
        self.n_classes = n_classes
        return self

    def votes(self, x):
        x = np.asarray(x, float)
        return np.column_stack([np.argmax(t.value[t.apply(x)], axis=1) for t in self.trees])

    def predict(self, x):
        return _vote(self.votes(x), self.n_classes)

    def state(self):
        return {"n_trees": self.n_trees, "max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "max_features": self.max_features, "n_classes": self.n_classes,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_state(cls, s):
        m = cls(s["n_trees"], s["max_depth"], s["min_leaf"], s["max_features"])
        m.trees, m.n_classes = [Tree.from_dict(t) for t in s["trees"]], s["n_classes"]
        return m


class LinearRegression:
    name = "linreg"

    def __init__(self, ridge: float = RIDGE_OLS):
        self.ridge = float(ridge)

    def fit(self, x, y, n_classes=0, seed=0):
        x, y = np.asarray(x, float), np.asarray(y, float)
        xm, ym = x.mean(axis=0), y.mean()
        xc = x - xm
        gram = xc.T @ xc + self.ridge * np.eye(x.shape[1])
        try:
            beta = np.linalg.solve(gram, xc.T @ (y - ym))
        except np.linalg.LinAlgError:
            raise ModelError("linreg: design matrix is rank-deficient beyond ridge rescue") from None
        if not np.all(np.isfinite(beta)) or np.linalg.cond(gram) > 1e14:
            raise ModelError("linreg: design matrix is rank-deficient beyond ridge rescue")
        self.beta, self.intercept = beta, float(ym - xm @ beta)
        return self

    def predict(self, x):
        return np.asarray(x, float) @ self.beta + self.intercept, None

    def state(self):
        return {"ridge": self.ridge, "beta": self.beta.tolist(), "intercept": self.intercept}

    @classmethod
    def from_state(cls, s):
        m = cls(s["ridge"])
        m.beta, m.intercept = np.asarray(s["beta"], float), float(s["intercept"])
        return m


class RandomForestRegressor:
    name = "rforest_reg"

    def __init__(self, n_trees: int = 100, max_depth: int = DEFAULT_MAX_DEPTH, min_leaf: int = DEFAULT_MIN_LEAF,
                 max_features: int | None = None):
        self.n_trees, self.max_depth, self.min_leaf = int(n_trees), int(max_depth), int(min_leaf)
        self.max_features = max_features

    def fit(self, x, y, n_classes=0, seed=0):
        self.trees = forest_fit(np.asarray(x, float), np.asarray(y, float), task="regression",
                                n_trees=self.n_trees, max_depth=self.max_depth, min_leaf=self.min_leaf,
                                max_features=self.max_features, seed=seed)
        return self

    def predict(self, x):
        x = np.asarray(x, float)
        return np.mean([t.value[t.apply(x), 0] for t in self.trees], axis=0), None

    def state(self):
        return {"n_trees": self.n_trees, "max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "max_features": self.max_features, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_state(cls, s):
        m = cls(s["n_trees"], s["max_depth"], s["min_leaf"], s["max_features"])
        m.trees = [Tree.from_dict(t) for t in s["trees"]]
        return m


_HYPER = {
    "knn": {"k"},
    "logistic": {"l2", "max_iter", "tol"},
    "lda": {"ridge"},
    "qda": {"ridge"},
    "dtree": {"max_depth", "min_leaf"},
    "rforest": {"n_trees", "max_depth", "min_leaf", "max_features"},
    "linreg": {"ridge"},
    "rforest_reg": {"n_trees", "max_depth", "min_leaf", "max_features"},
}


def make_estimator(algorithm: str, **hp):
    if algorithm not in _HYPER:
        raise ModelError(f"unknown algorithm {algorithm!r}; valid: {', '.join(CLASSIFIERS + REGRESSORS)}")
    bad = set(hp) - _HYPER[algorithm]
    if bad:
        raise ModelError(f"{algorithm}: unknown hyperparameter(s) {sorted(bad)}")
    if algorithm == "knn":
        return Knn(**hp)
    if algorithm == "logistic":
        return Logistic(**hp)
    if algorithm in ("lda", "qda"):
        return Gaussian(algorithm == "lda", **hp)
    if algorithm == "dtree":
        return DecisionTree(**hp)
    if algorithm == "rforest":
        return RandomForest(**hp)
    if algorithm == "linreg":
        return LinearRegression(**hp)
    return RandomForestRegressor(**hp)


def estimator_from_state(algorithm: str, state: dict):
    cls = {"knn": Knn, "logistic": Logistic, "lda": Gaussian, "qda": Gaussian, "dtree": DecisionTree,
           "rforest": RandomForest, "linreg": LinearRegression, "rforest_reg": RandomForestRegressor}[algorithm]
    return cls.from_state(state)
