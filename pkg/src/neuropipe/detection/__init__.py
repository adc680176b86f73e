"""Model training, evaluation, inference and action mapping."""
from .actions import (ActionCommand, ActionMapper, CsvSink, Receipt, SinkError, SocketSink, StdoutSink, emit_action,
                      map_event_to_action)
from .dataset import Dataset, DatasetError, kfold, kfold_indices, split_dataset, split_indices
from .metrics import MetricError, confusion_matrix, f1_score, rmse
from .models import CLASSIFIERS, REGRESSORS, ModelError, estimator_from_state, make_estimator
from .training import (DetectionEvent, Lineage, LineageError, ModelSet, TrainedModel, train_classifier,
                       train_regressor)

__all__ = [
    "ActionCommand", "ActionMapper", "CsvSink", "Receipt", "SinkError", "SocketSink", "StdoutSink", "emit_action",
    "map_event_to_action", "Dataset", "DatasetError", "kfold", "kfold_indices", "split_dataset", "split_indices",
    "MetricError", "confusion_matrix", "f1_score", "rmse", "CLASSIFIERS", "REGRESSORS", "ModelError", "estimator_from_state", "make_estimator",
    "DetectionEvent", "Lineage", "LineageError", "ModelSet", "TrainedModel", "train_classifier", "train_regressor",
]
