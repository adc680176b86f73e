"""Preprocessing lineage, training entry points, prediction and model persistence."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .. import NeuropipeError
from ..features.selection import PcaModel, correlation_prune, pca_fit, pca_transform
from .dataset import Dataset
from .models import CLASSIFIERS, REGRESSORS, ModelError, estimator_from_state, make_estimator

MODEL_FORMAT = "neuropipe.modelset"
MODEL_VERSION = 1


class LineageError(NeuropipeError, ValueError):
    pass


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class Lineage:
    """Standardise, then optionally prune correlated columns, then optionally project onto PCA axes."""
    input_names: tuple[str, ...]
    mean: np.ndarray
    scale: np.ndarray
    kept: np.ndarray
    pca: PcaModel | None = None
    correlation_threshold: float | None = None
    pca_variance: float | None = None

    @classmethod
    def fit(cls, x: np.ndarray, names: Sequence[str], correlation_threshold: float | None = None,
            pca_variance: float | None = None) -> "Lineage":
        x = np.asarray(x, float)
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        z = (x - mean) / scale
        kept = np.arange(x.shape[1])
        if correlation_threshold is not None:
            kept = np.asarray(correlation_prune(z, correlation_threshold), dtype=np.int64)
            if kept.size == 0:
                raise LineageError("correlation pruning removed every feature")
        pca = pca_fit(z[:, kept], pca_variance) if pca_variance is not None else None
        return cls(tuple(names), mean, scale, kept, pca, correlation_threshold, pca_variance)

    @property
    def n_inputs(self) -> int:
        return len(self.input_names)

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        one = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != self.n_inputs:
            raise LineageError(f"expected {self.n_inputs} features, got {x2.shape[1]}")
        bad = np.argwhere(~np.isfinite(x2))
        if bad.size:
            j = int(bad[0, 1])
            raise LineageError(f"non-finite input at feature index {j} ({self.input_names[j]})")
        z = ((x2 - self.mean) / self.scale)[:, self.kept]
        if self.pca is not None:
            z = pca_transform(self.pca, z)
        return z[0] if one else z

    def to_dict(self) -> dict:
        return {"input_names": list(self.input_names), "mean": self.mean.tolist(), "scale": self.scale.tolist(),
                "kept": self.kept.tolist(), "pca": None if self.pca is None else self.pca.to_dict(),
                "correlation_threshold": self.correlation_threshold, "pca_variance": self.pca_variance}

    @classmethod
    def from_dict(cls, d: dict) -> "Lineage":
        return cls(tuple(d["input_names"]), np.asarray(d["mean"], float), np.asarray(d["scale"], float),
                   np.asarray(d["kept"], np.int64), None if d["pca"] is None else PcaModel.from_dict(d["pca"]),
                   d["correlation_threshold"], d["pca_variance"])

    def digest(self) -> str:
        return hashlib.sha256(_canonical(self.to_dict()).encode()).hexdigest()


@dataclass
class DetectionEvent:
    t: float
    label: str | None
    score: float | None
    confidence: float | None
    scenario_id: str
    model_id: str

    def __post_init__(self):
        if (self.confidence is None) != (self.label is None):
            raise ModelError("confidence is defined exactly for classification events")

    def to_dict(self) -> dict:
        return {"t": self.t, "label": self.label, "score": self.score, "confidence": self.confidence,
                "scenario_id": self.scenario_id, "model_id": self.model_id}


@dataclass
class TrainedModel:
    algorithm: str
    task: str
    estimator: Any
    lineage: Lineage
    class_names: tuple[str, ...] | None
    target: str = ""
    positive: str | None = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def model_id(self) -> str:
        return f"{self.target}/{self.algorithm}" if self.target else self.algorithm

    def predict_matrix(self, x) -> tuple[list, np.ndarray | None]:
        """Labels (class names or real scores) and confidences for every row."""
        z = self.lineage.transform(np.atleast_2d(np.asarray(x, float)))
        out, conf = self.estimator.predict(z)
        if self.task == "classification":
            return [self.class_names[int(i)] for i in out], np.asarray(conf, float)
        return [float(v) for v in out], None

    def predict(self, x, t: float = 0.0, scenario_id: str = "") -> DetectionEvent:
        x = np.asarray(x, float)
        if x.ndim != 1:
            raise LineageError("predict expects one feature vector")
        labels, conf = self.predict_matrix(x[None, :])
        if self.task == "classification":
            return DetectionEvent(t, labels[0], None, float(conf[0]), scenario_id, self.model_id)
        return DetectionEvent(t, None, labels[0], None, scenario_id, self.model_id)

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "task": self.task, "target": self.target, "seed": self.seed,
                "class_names": None if self.class_names is None else list(self.class_names),
                "positive": self.positive, "lineage": self.lineage.to_dict(),
                "lineage_hash": self.lineage.digest(), "params": self.estimator.state(), "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        lin = Lineage.from_dict(d["lineage"])
        if lin.digest() != d["lineage_hash"]:
            raise LineageError(f"model {d['target']}/{d['algorithm']}: lineage hash mismatch")
        names = None if d["class_names"] is None else tuple(d["class_names"])
        return cls(d["algorithm"], d["task"], estimator_from_state(d["algorithm"], d["params"]), lin, names,
                   d["target"], d["positive"], int(d["seed"]), dict(d.get("meta", {})))


def _train(algorithm: str, hyperparameters: Mapping | None, train: Dataset, seed: int,
           correlation_threshold: float | None, pca_variance: float | None, target: str,
           positive: str | None) -> TrainedModel:
    lin = Lineage.fit(train.x, train.feature_names, correlation_threshold, pca_variance)
    est = make_estimator(algorithm, **dict(hyperparameters or {}))
    est.fit(lin.transform(train.x), train.y, train.n_classes, seed=seed)
    return TrainedModel(algorithm, train.task, est, lin, train.class_names, target, positive, seed,
                        {"n_train": len(train)})


def train_classifier(algorithm: str, hyperparameters: Mapping | None, train: Dataset, seed: int = 0, *,
                     correlation_threshold: float | None = None, pca_variance: float | None = None,
                     target: str = "", positive: str | None = None) -> TrainedModel:
    if algorithm not in CLASSIFIERS:
        raise ModelError(f"unknown classifier {algorithm!r}; valid: {', '.join(CLASSIFIERS)}")
    if train.task != "classification":
        raise ModelError("classifier needs class labels")
    if np.unique(train.y).size < 2:
        raise ModelError("degenerate training set: a single class")
    if np.unique(train.y).size != train.n_classes:
        raise ModelError("training set lacks some declared classes")
    return _train(algorithm, hyperparameters, train, seed, correlation_threshold, pca_variance, target, positive)


def train_regressor(algorithm: str, hyperparameters: Mapping | None, train: Dataset, seed: int = 0, *,
                    correlation_threshold: float | None = None, pca_variance: float | None = None,
                    target: str = "") -> TrainedModel:
    if algorithm not in REGRESSORS:
        raise ModelError(f"unknown regressor {algorithm!r}; valid: {', '.join(REGRESSORS)}")
    if train.task != "regression":
        raise ModelError("regressor needs real-valued targets")
    return _train(algorithm, hyperparameters, train, seed, correlation_threshold, pca_variance, target, None)


@dataclass
class ModelSet:
    """Every model trained for one (scenario, subject) plus the signal-chain state they depend on."""
    scenario_id: str
    subject: str
    scenario_hash: str
    plan_digest: str
    ica: dict
    models: dict[str, TrainedModel]

    def filename(self) -> str:
        return f"model.{self.scenario_id}.{self.subject}.json"

    def to_dict(self) -> dict:
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION, "scenario_id": self.scenario_id,
                "subject": self.subject, "scenario_hash": self.scenario_hash, "plan_digest": self.plan_digest,
                "ica": self.ica, "models": {k: m.to_dict() for k, m in sorted(self.models.items())}}

    def save(self, directory) -> Path:
        path = Path(directory) / self.filename()
        path.write_text(_canonical(self.to_dict()))
        return path

    @classmethod
    def load(cls, path) -> "ModelSet":
        path = Path(path)
        if not path.is_file():
            raise LineageError(f"model file {path} not found")
        d = json.loads(path.read_text())
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise LineageError(f"{path}: not a version {MODEL_VERSION} model set")
        return cls(d["scenario_id"], d["subject"], d["scenario_hash"], d["plan_digest"], d["ica"],
                   {k: TrainedModel.from_dict(m) for k, m in d["models"].items()})
