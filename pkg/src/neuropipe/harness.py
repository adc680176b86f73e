"""End-to-end commands: synthesise sessions, train and evaluate, run online, report.

Every command writes into a single run directory and finishes with a
``manifest.json`` of artifact hashes.  Wall-clock measurements go to
``timing.json`` only, so everything else is reproducible from the seed.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import queue
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import NeuropipeError
from .acquisition.adapters import StreamOutlet, open_stream
from .acquisition.session import SessionRecord, append_events_csv, write_session_csv
from .acquisition.types import SampleChunk, StreamEvent, concat_chunks
from .config import ScenarioConfig, TargetSpec, load_scenario, scenario_hash
from .detection.actions import ActionMapper, CsvSink, StdoutSink, emit_action
from .detection.dataset import Dataset, kfold_indices, split_indices
from .detection.metrics import confusion_matrix, f1_score, rmse
from .detection.models import CLASSIFIERS, REGRESSORS
from .detection.training import DetectionEvent, LineageError, ModelSet, TrainedModel, train_classifier, train_regressor
from .pipeline import (IcaProjection, Pipeline, SessionData, blocks_from_events, classification_label, epoch_label,
                       replay)
from .seeds import derive_seed
from .synth import SynthError, simulate_session, subject_seeds, uc1_script, uc2_script, uc3_script, uc4_script

log = logging.getLogger(__name__)

POOLED = "all"
METRIC_TOL = 1e-9


class StageError(NeuropipeError):
    """A failure attributed to one module and operation."""

    def __init__(self, module: str, operation: str, message: str):
        super().__init__(f"{module}.{operation}: {message}")
        self.module, self.operation = module, operation


@contextmanager
def stage(module: str, operation: str):
    try:
        yield
    except StageError:
        raise
    except (NeuropipeError, ValueError, OSError, KeyError) as exc:
        raise StageError(module, operation, str(exc) or type(exc).__name__) from exc


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out: Path, command: str, seed: int | None, extra: Mapping | None = None) -> Path:
    """Hash every file under ``out`` except the manifest and wall-clock timing."""
    out = Path(out)
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name not in ("manifest.json", "timing.json"))
    doc = {"command": command, "seed": seed, **dict(extra or {}),
           "artifacts": {str(p.relative_to(out)): _sha256(p) for p in files}}
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))


# --------------------------------------------------------------------------- synth

def subject_ids(subjects: int | Sequence[str]) -> list[str]:
    if isinstance(subjects, int):
        if subjects < 1:
            raise SynthError("need at least one subject")
        return [f"s{i + 1:02d}" for i in range(subjects)]
    return list(subjects)


def make_script(usecase: str, *, subject: str, seed: int, trait_seed: int, effect, day: int = 1,
                duration: float | None = None, tests: int | None = None, stimuli: int = 200, targets: int = 40):
    """Protocol script for one subject and day; ``duration`` rescales the default protocol."""
    if duration is not None and not duration > 0:
        raise SynthError(f"duration must be positive, got {duration}")
    if usecase == "UC1":
        return uc1_script(duration or 1200.0, seed=seed, subject=subject, effect=effect, trait_seed=trait_seed)
    if usecase == "UC2":
        block = 300.0 if duration is None else duration / 8.0
        return uc2_script(block, 2, seed=seed, subject=subject, effect=effect, trait_seed=trait_seed)
    if usecase == "UC3":
        return uc3_script(duration or 1200.0, seed=seed, subject=subject, effect=effect, trait_seed=trait_seed)
    if usecase == "UC4":
        if tests is None:
            per_test = stimuli * 1.0 + 2.0
            tests = 10 if duration is None else max(1, int(duration // per_test))
        return uc4_script(tests, stimuli, targets, seed=seed, subject=subject, day=day, effect=effect,
                          trait_seed=trait_seed)
    raise SynthError(f"unknown use case {usecase!r}")


def cmd_synth(scenario, out, *, subjects: int | Sequence[str] = 1, seed: int = 0, duration: float | None = None,
              effect="high", days: int | None = None, tests: int | None = None) -> list[Path]:
    """Write one session directory per synthetic subject and day under ``out``."""
    cfg = scenario if isinstance(scenario, ScenarioConfig) else load_scenario(scenario)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.usecase is None:
        raise StageError("signal-synth", "cmd_synth", f"scenario {cfg.scenario_id!r} names no use case")
    n_days = days if days is not None else (2 if cfg.usecase == "UC4" else 1)
    dirs = []
    with stage("signal-synth", "simulate_session"):
        for subj in subject_ids(subjects):
            for day in range(1, n_days + 1):
                noise_seed, trait_seed = subject_seeds(seed, subj, day)
                script = make_script(cfg.usecase, subject=subj, seed=noise_seed, trait_seed=trait_seed,
                                     effect=effect, day=day, duration=duration, tests=tests)
                rec = simulate_session(script, cfg, out)
                dirs.append(Path(rec.directory))
    write_manifest(out, "synth", seed, {"scenario": cfg.scenario_id, "effect": str(effect)})
    return dirs


# --------------------------------------------------------------------------- sessions

def find_sessions(paths: str | Path | Iterable) -> list[Path]:
    """Session directories given directly or found one level below the given roots."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    out = []
    for p in paths:
        p = Path(p)
        if (p / "session.json").is_file():
            out.append(p)
        elif p.is_dir():
            out.extend(sorted(d for d in p.iterdir() if (d / "session.json").is_file()))
        else:
            raise StageError("stream-acquisition", "load_session", f"{p} is not a session directory")
    if not out:
        raise StageError("stream-acquisition", "load_session", "no session directories found")
    return out


def load_sessions(sessions) -> list[SessionData]:
    if sessions and all(isinstance(s, SessionData) for s in sessions):
        return list(sessions)
    with stage("stream-acquisition", "read_session_csv"):
        return [SessionData.from_record(SessionRecord.load(d)) for d in find_sessions(sessions)]


# --------------------------------------------------------------------------- datasets

@dataclass
class EpochTable:
    """Features and raw labels of every epoch of one session."""
    session: str
    subject: str
    t0: np.ndarray
    x: np.ndarray
    names: tuple[str, ...]
    raw: dict[str, list]            # target name -> raw label per epoch (None = unused)


def _class_names(target: TargetSpec, labels: Sequence[str]) -> tuple[str, ...]:
    if target.mode == "one_vs_rest":
        return ("impostor", "legitimate")
    if target.classes:
        return tuple(dict.fromkeys(target.classes.values()))
    return tuple(sorted(set(labels)))


def epoch_table(pipe: Pipeline, session: SessionData, targets: Sequence[TargetSpec]) -> EpochTable:
    with stage("dsp-processing", "epoch"):
        bundles = pipe.epochs(session)
    with stage("feature-engine", "assemble_features"):
        vecs = [pipe.features(b) for b in bundles]
    blocks = blocks_from_events(session.events)
    raw = {}
    with stage("detection", "label_epochs"):
        for tg in targets:
            raw[tg.name] = [epoch_label(b, session, tg, pipe.plan, blocks) for b in bundles]
    names = vecs[0].names if vecs else ()
    x = np.array([v.values for v in vecs]).reshape(len(vecs), len(names))
    return EpochTable(session.name, session.subject, np.array([b.t0 for b in bundles]), x, tuple(names), raw)


def build_dataset(tables: Sequence[EpochTable], target: TargetSpec, task: str,
                  legit: str | None = None) -> tuple[Dataset, list[str]]:
    """Stack the used epochs of ``tables``; returns the dataset and the session of each row."""
    xs, labels, groups, t0s, sess = [], [], [], [], []
    for tb in tables:
        for i, r in enumerate(tb.raw[target.name]):
            if r is None:
                continue
            if task == "regression":
                lab = float(r)
            elif target.mode == "one_vs_rest":
                lab = "legitimate" if tb.subject == legit else "impostor"
            else:
                lab = str(classification_label(r, target))
            xs.append(tb.x[i])
            labels.append(lab)
            groups.append(tb.subject)
            t0s.append(tb.t0[i])
            sess.append(tb.session)
    if not xs:
        raise StageError("detection", "build_dataset", f"target {target.name!r}: no labelled epochs")
    names = tables[0].names
    if task == "regression":
        return Dataset(np.vstack(xs), np.array(labels), names, None, tuple(groups), np.array(t0s)), sess
    ds = Dataset.from_labels(np.vstack(xs), labels, names, _class_names(target, labels), groups, t0s)
    return ds, sess


def _positive(target: TargetSpec, ds: Dataset) -> str | None:
    if target.mode == "one_vs_rest":
        return "legitimate"
    if target.positive is not None:
        return target.positive
    return None


def classification_metrics(pred: Sequence[str], truth: Sequence[str], positive: str | None) -> dict[str, float]:
    out = {"f1_macro": f1_score(pred, truth, "macro")}
    if positive is not None:
        out["f1_binary"] = f1_score(pred, truth, "binary", positive=positive)
    return out


# --------------------------------------------------------------------------- train

@dataclass
class TrainResult:
    out: Path
    metrics: list[dict]
    model_paths: list[Path]
    report: dict
    timing: dict = field(default_factory=dict)

    def metric(self, target: str, algorithm: str, metric: str, subject: str | None = None) -> float:
        """Mean of a metric over subjects (or for one subject)."""
        vals = [m["value"] for m in self.metrics if m["task"].endswith("/" + target) and m["algorithm"] == algorithm
                and m["metric"] == metric and (subject is None or m["subject"] == subject)]
        if not vals:
            raise KeyError(f"no {metric} for {target}/{algorithm}")
        return float(np.mean(vals))


def _units(cfg: ScenarioConfig, targets: Sequence[TargetSpec], sessions: Sequence[SessionData]) -> dict[str, list]:
    """ICA fitting units: each subject alone, or everyone pooled when any target pools subjects."""
    pooled = any(t.mode != "per_subject" for t in targets)
    subjects = sorted({s.subject for s in sessions})
    if pooled:
        return {POOLED: list(sessions)}
    return {sub: [s for s in sessions if s.subject == sub] for sub in subjects}


def _split_seed(seed: int, target: str, subject: str) -> int:
    return derive_seed(seed, f"split:{target}:{subject}") % (2**31)


def cmd_train(scenario, sessions, out, *, algorithms: Sequence[str] | None = None, seed: int = 0,
              targets: Sequence[str] | None = None, split: Mapping | None = None,
              hyperparameters: Mapping | None = None) -> TrainResult:
    """Process, extract, select, train and evaluate every (target, algorithm) on held-out epochs."""
    t_start = time.perf_counter()
    cfg = scenario if isinstance(scenario, ScenarioConfig) else load_scenario(scenario)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    det = cfg.detection
    task = det.task
    valid = CLASSIFIERS if task == "classification" else REGRESSORS
    algs = list(algorithms or det.algorithms)
    bad = [a for a in algs if a not in valid]
    if bad:
        raise StageError("detection", "train", f"unknown algorithm(s) {bad} for {task}; valid: {', '.join(valid)}")
    tgs = [t for t in det.targets if targets is None or t.name in targets]
    if targets is not None and len(tgs) != len(set(targets)):
        raise StageError("detection", "train", f"unknown target(s) in {list(targets)}")
    split = dict(split or det.split)
    hp_all = {**det.hyperparameters, **dict(hyperparameters or {})}

    data = load_sessions(sessions)
    with stage("scenario-config", "resolve_pipeline"):
        base = Pipeline(cfg)
    tables: dict[str, EpochTable] = {}
    ica_of: dict[str, dict] = {}
    for unit, members in _units(cfg, tgs, data).items():
        pipe = Pipeline(cfg, base.plan)
        with stage("dsp-processing", "fit_ica"):
            pipe.fit_ica(members, seed=seed)
        for s in members:
            tables[s.name] = epoch_table(pipe, s, tgs)
            ica_of[s.subject if unit != POOLED else POOLED] = pipe.ica_dict()
    subjects = sorted({s.subject for s in data})
    ica_for = (lambda subj: ica_of[POOLED]) if POOLED in ica_of else (lambda subj: ica_of[subj])

    metrics: list[dict] = []
    pred_rows: list[dict] = []
    confusion: dict[str, Any] = {}
    sets: dict[str, dict[str, TrainedModel]] = {}
    feat_dir = out / "features"
    feat_dir.mkdir(exist_ok=True)

    for tg in tgs:
        jobs = []    # (owner subject, dataset, sessions per row)
        if tg.mode == "per_subject":
            for sub in subjects:
                ds, sess = build_dataset([tables[s.name] for s in data if s.subject == sub], tg, task)
                jobs.append((sub, ds, sess))
        elif tg.mode == "cross_subject":
            ds, sess = build_dataset([tables[s.name] for s in data], tg, task)
            jobs.append((POOLED, ds, sess))
        else:
            for sub in subjects:
                ds, sess = build_dataset([tables[s.name] for s in data], tg, task, legit=sub)
                jobs.append((sub, ds, sess))
        for owner, ds, sess in jobs:
            _write_features(feat_dir / f"{tg.name}.{owner}.csv", ds)
            positive = _positive(tg, ds)
            sseed = _split_seed(seed, tg.name, owner)
            with stage("detection", "split_dataset"):
                if "kfold" in split:
                    parts = kfold_indices(ds, int(split["kfold"]), sseed)
                else:
                    parts = [split_indices(ds, float(split.get("holdout", 0.8)), sseed)]
                folds = [(ds.subset(a), ds.subset(b), b.tolist()) for a, b in parts]
            for alg in algs:
                hp = hp_all.get(alg, {})
                aseed = derive_seed(seed, f"model:{tg.name}:{owner}:{alg}") % (2**31)
                preds, truths, confs, model = [], [], [], None
                for fi, (tr, te, idx) in enumerate(folds):
                    with stage("detection", "train_classifier" if task == "classification" else "train_regressor"):
                        kw = dict(correlation_threshold=cfg.selection.correlation_threshold,
                                  pca_variance=cfg.selection.pca_variance, target=tg.name)
                        if task == "classification":
                            model = train_classifier(alg, hp, tr, aseed, positive=positive, **kw)
                        else:
                            model = train_regressor(alg, hp, tr, aseed, **kw)
                    with stage("detection", "predict"):
                        p, c = model.predict_matrix(te.x)
                    truth = ([te.class_names[i] for i in te.y] if task == "classification"
                             else [float(v) for v in te.y])
                    for j, row in enumerate(idx):
                        pred_rows.append({"subject": owner, "algorithm": alg, "target": tg.name, "fold": fi,
                                          "session": sess[row], "t0": float(ds.t0[row]), "truth": truth[j],
                                          "prediction": p[j], "confidence": "" if c is None else float(c[j])})
                    preds += p
                    truths += truth
                    confs += [] if c is None else list(c)
                if task == "classification":
                    vals = classification_metrics(preds, truths, positive)
                    confusion[f"{tg.name}/{alg}/{owner}"] = {
                        "classes": list(ds.class_names),
                        "matrix": confusion_matrix(preds, truths, ds.class_names).tolist()}
                else:
                    vals = {"rmse": rmse(preds, truths)}
                for k, v in vals.items():
                    metrics.append({"subject": owner, "algorithm": alg, "task": f"{task}/{tg.name}",
                                    "metric": k, "value": float(v)})
                model.meta.update(mode=tg.mode, owner=owner, n_test=len(truths))
                sets.setdefault(owner, {})[f"{tg.name}/{alg}"] = model

    paths = []
    digest = base.plan.digest()
    shash = scenario_hash(cfg)
    for owner, models in sorted(sets.items()):
        ms = ModelSet(cfg.scenario_id, owner, shash, digest, ica_for(owner), models)
        paths.append(ms.save(out))
    _write_metrics(out / "metrics.csv", metrics)
    _write_predictions(out / "predictions.csv", pred_rows)
    report = {"scenario_id": cfg.scenario_id, "task": task, "seed": seed, "subjects": subjects,
              "algorithms": algs, "targets": [t.name for t in tgs], "split": split,
              "metrics": metrics, "confusion": confusion,
              "artifacts": {"models": [p.name for p in paths], "metrics": "metrics.csv",
                            "predictions": "predictions.csv",
                            "features": sorted(str(p.relative_to(out)) for p in feat_dir.iterdir())}}
    _write_json(out / "report.json", report)
    timing = {"train_seconds": time.perf_counter() - t_start}
    write_manifest(out, "train", seed, {"scenario": cfg.scenario_id})
    _write_json(out / "timing.json", timing)
    return TrainResult(out, metrics, paths, report, timing)


def _write_features(path: Path, ds: Dataset) -> None:
    labels = ([ds.class_names[i] for i in ds.y] if ds.task == "classification" else [repr(float(v)) for v in ds.y])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ds.feature_names) + ["label"])
        for row, lab in zip(ds.x, labels):
            w.writerow([repr(float(v)) for v in row] + [lab])


METRIC_FIELDS = ("subject", "algorithm", "task", "metric", "value")
PRED_FIELDS = ("subject", "algorithm", "target", "fold", "session", "t0", "truth", "prediction", "confidence")


def _write_metrics(path: Path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, METRIC_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "value": repr(float(r["value"]))})


def _write_predictions(path: Path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, PRED_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


# --------------------------------------------------------------------------- evaluate

def load_model_sets(models) -> list[ModelSet]:
    """Model sets from files or from every ``model.*.json`` in a directory."""
    if isinstance(models, (str, Path)):
        models = [models]
    files = []
    for m in models:
        m = Path(m)
        if m.is_dir():
            files.extend(sorted(m.glob("model.*.json")))
        else:
            files.append(m)
    if not files:
        raise StageError("detection", "load_model", "no model files found")
    with stage("detection", "load_model"):
        return [ModelSet.load(f) for f in files]


def check_lineage(cfg: ScenarioConfig, ms: ModelSet, pipe: Pipeline | None = None) -> None:
    """Refuse model sets trained for a different scenario or signal chain."""
    pipe = pipe or Pipeline(cfg)
    if ms.scenario_id != cfg.scenario_id:
        raise StageError("detection", "lineage_check",
                         f"model set is for scenario {ms.scenario_id!r}, not {cfg.scenario_id!r}")
    if ms.scenario_hash != scenario_hash(cfg) or ms.plan_digest != pipe.plan.digest():
        raise StageError("detection", "lineage_check",
                         f"lineage hash mismatch: model set {ms.filename()} was trained on a different scenario")


def _pipeline_for(cfg: ScenarioConfig, ms: ModelSet) -> Pipeline:
    pipe = Pipeline(cfg)
    check_lineage(cfg, ms, pipe)
    pipe.ica = {k: IcaProjection.from_dict(v) for k, v in ms.ica.items()}
    return pipe


def _sets_for(sets: Sequence[ModelSet], subject: str) -> list[ModelSet]:
    return [ms for ms in sets if ms.subject in (subject, POOLED)]


def cmd_evaluate(scenario, models, sessions, out, *, seed: int = 0) -> dict:
    """Score stored models on every labelled epoch of other sessions (e.g. a second recording day)."""
    cfg = scenario if isinstance(scenario, ScenarioConfig) else load_scenario(scenario)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sets = load_model_sets(models)
    data = load_sessions(sessions)
    tgs = {t.name: t for t in cfg.detection.targets}
    acc: dict[tuple, tuple[list, list]] = {}
    for ms in sets:
        pipe = _pipeline_for(cfg, ms)
        members = data if ms.subject == POOLED else [s for s in data if s.subject == ms.subject]
        if any(m.meta.get("mode") == "one_vs_rest" for m in ms.models.values()):
            members = data
        for s in members:
            used = sorted({k.split("/")[0] for k in ms.models})
            tb = epoch_table(pipe, s, [tgs[u] for u in used])
            for key, model in sorted(ms.models.items()):
                tg = tgs[model.target]
                ds, _ = build_dataset([tb], tg, model.task, legit=ms.subject) if any(
                    r is not None for r in tb.raw[tg.name]) else (None, None)
                if ds is None:
                    continue
                p, _ = model.predict_matrix(ds.x)
                truth = [ds.class_names[i] for i in ds.y] if model.task == "classification" else list(ds.y)
                a = acc.setdefault((ms.subject, model.algorithm, model.task, model.target, model.positive), ([], []))
                a[0].extend(p)
                a[1].extend(truth)
    rows = []
    for (subj, alg, task, target, pos), (p, t) in sorted(acc.items()):
        vals = classification_metrics(p, t, pos) if task == "classification" else {"rmse": rmse(p, t)}
        rows += [{"subject": subj, "algorithm": alg, "task": f"{task}/{target}", "metric": k, "value": float(v)}
                 for k, v in vals.items()]
    _write_metrics(out / "eval_metrics.csv", rows)
    write_manifest(out, "evaluate", seed, {"scenario": cfg.scenario_id})
    return {"metrics": rows}


# --------------------------------------------------------------------------- run

@dataclass
class RunResult:
    events: list[DetectionEvent]
    actions: list
    rtf: float
    latency_ms: dict[str, float]
    processed_seconds: float
    wall_seconds: float
    epochs: int


def _predict_bundle(pipe: Pipeline, ms: ModelSet, bundle, scenario_id: str) -> list[DetectionEvent]:
    fv = pipe.features(bundle)
    return [m.predict(fv.values, bundle.t0, scenario_id) for _, m in sorted(ms.models.items())]


def infer_online(pipe: Pipeline, ms: ModelSet, bundles: Iterable, scenario_id: str,
                 latencies: list[float] | None = None) -> Iterable[DetectionEvent]:
    """Predict every completed epoch as it arrives; latency is feature extraction plus inference."""
    for b in bundles:
        t0 = time.perf_counter()
        evs = _predict_bundle(pipe, ms, b, scenario_id)
        if latencies is not None:
            latencies.append((time.perf_counter() - t0) * 1e3)
        yield from evs


def batch_predictions(cfg: ScenarioConfig, ms: ModelSet, session: SessionData) -> list[DetectionEvent]:
    """Offline reference: the whole session processed at once."""
    pipe = _pipeline_for(cfg, ms)
    return [e for b in pipe.epochs(session) for e in _predict_bundle(pipe, ms, b, cfg.scenario_id)]


def online_predictions(cfg: ScenarioConfig, ms: ModelSet, session: SessionData,
                       chunk_seconds: float = 0.125) -> list[DetectionEvent]:
    pipe = _pipeline_for(cfg, ms)
    return list(infer_online(pipe, ms, replay(pipe, session, chunk_seconds), cfg.scenario_id))


def _socket_bundles(pipe: Pipeline, cfg: ScenarioConfig, timeout: float) -> Iterable:
    """Read every declared stream from its socket address in a thread; feed the runner in arrival order."""
    q: queue.Queue = queue.Queue(maxsize=1024)
    handles = []
    for desc in cfg.streams:
        with stage("stream-acquisition", "open_stream"):
            handles.append(open_stream(replace(desc, source="socket"), timeout=timeout))

    def reader(h):
        seen = 0
        try:
            for c in h:
                while seen < len(h.events):
                    q.put(("event", h.events[seen]))
                    seen += 1
                q.put(("chunk", c))
            while seen < len(h.events):
                q.put(("event", h.events[seen]))
                seen += 1
        except Exception as exc:     # surfaced in the consumer
            q.put(("error", exc))
        finally:
            q.put(("done", h.desc.name))

    threads = [threading.Thread(target=reader, args=(h,), daemon=True) for h in handles]
    for t in threads:
        t.start()
    runner = pipe.runner()
    live = len(handles)
    while live:
        kind, item = q.get()
        if kind == "done":
            live -= 1
        elif kind == "error":
            raise StageError("stream-acquisition", "read_stream", str(item))
        elif kind == "event":
            runner.push_event(item)
        else:
            runner.push(item)
            yield from runner.pop()
    yield from runner.close()
    for h in handles:
        h.close()


def cmd_run(scenario, models, out, *, source="replay", sessions=None, subject: str | None = None,
            chunk_seconds: float = 0.125, sinks: Sequence[str] = ("csv",), timeout: float = 5.0,
            seed: int = 0) -> RunResult:
    """Online inference over replayed sessions or live sockets; writes detection and action logs."""
    cfg = scenario if isinstance(scenario, ScenarioConfig) else load_scenario(scenario)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sets = load_model_sets(models)
    for ms in sets:
        check_lineage(cfg, ms)
    det_path, act_path = out / "detections.csv", out / "actions.csv"
    for p in (det_path, act_path):
        if p.exists():
            p.unlink()
    sink_objs = []
    for s in sinks:
        if s == "csv":
            sink_objs.append(CsvSink(act_path))
        elif s == "stdout":
            sink_objs.append(StdoutSink())
        else:
            raise StageError("detection", "emit_action", f"unknown sink {s!r}")
    mapper = ActionMapper(cfg.actions)
    events: list[DetectionEvent] = []
    actions = []
    lat: list[float] = []
    processed = 0.0
    n_epochs = 0
    wall0 = time.perf_counter()

    def consume(pipe, ms, bundles):
        nonlocal n_epochs
        for b in bundles:
            t0 = time.perf_counter()
            with stage("detection", "infer_online"):
                evs = _predict_bundle(pipe, ms, b, cfg.scenario_id)
            lat.append((time.perf_counter() - t0) * 1e3)
            n_epochs += 1
            for ev in evs:
                events.append(ev)
                cmd = mapper(ev)
                if cmd is not None:
                    with stage("detection", "emit_action"):
                        for sk in sink_objs:
                            emit_action(sk, cmd)
                    actions.append(cmd)

    if source == "replay":
        data = load_sessions(sessions)
        for s in data:
            chosen = _sets_for(sets, s.subject) if subject is None else _sets_for(sets, subject)
            if not chosen:
                raise StageError("detection", "load_model", f"no model set for subject {s.subject!r}")
            for ms in chosen:
                pipe = _pipeline_for(cfg, ms)
                consume(pipe, ms, replay(pipe, s, chunk_seconds))
            first = cfg.stream(cfg.stream_names[0])
            c = s.streams[first.name]
            processed += c.n_samples / first.srate
    elif source == "socket":
        chosen = sets if subject is None else _sets_for(sets, subject)
        if len(chosen) != 1:
            raise StageError("detection", "load_model", "live input needs exactly one model set (use --subjects)")
        ms = chosen[0]
        pipe = _pipeline_for(cfg, ms)
        t_first = None
        bundles = _socket_bundles(pipe, cfg, timeout)
        consume(pipe, ms, bundles)
        if events:
            processed = events[-1].t - events[0].t + _epoch_seconds(pipe)
            t_first = events[0].t
        log.info("live run: first epoch at %s", t_first)
    else:
        raise StageError("cli-harness", "cmd_run", f"unknown source {source!r}")
    wall = time.perf_counter() - wall0
    for sk in sink_objs:
        sk.close()

    append_events_csv(det_path, [StreamEvent(e.t, e.model_id, {k: v for k, v in e.to_dict().items() if k != "t"})
                                 for e in events]) if events else det_path.write_text("t,tag,payload\n")
    if not act_path.exists():
        act_path.write_text("t,tag,payload\n")
    latency = {"p50": float(np.percentile(lat, 50)) if lat else 0.0,
               "p95": float(np.percentile(lat, 95)) if lat else 0.0}
    rtf = processed / wall if wall > 0 else math.inf
    _write_json(out / "run_report.json", {"scenario_id": cfg.scenario_id, "epochs": n_epochs,
                                          "detections": len(events), "actions": len(actions),
                                          "processed_seconds": processed})
    write_manifest(out, "run", seed, {"scenario": cfg.scenario_id})
    _write_json(out / "timing.json", {"wall_seconds": wall, "real_time_factor": rtf, "latency_ms": latency})
    return RunResult(events, actions, rtf, latency, processed, wall, n_epochs)


def _epoch_seconds(pipe: Pipeline) -> float:
    st = pipe.plan.epoch_stage
    return st.params["duration"] if st.stage == "epoch_fixed" else st.params["pre"] + st.params["post"]


# --------------------------------------------------------------------------- report

@dataclass
class Report:
    text: str
    metrics: list[dict]
    mismatches: list[str]

    @property
    def ok(self) -> bool:
        return not self.mismatches


def recompute_metrics(pred_path: Path, positive_of: Mapping[str, str | None], task: str) -> list[dict]:
    groups: dict[tuple, tuple[list, list]] = {}
    with open(pred_path, newline="") as fh:
        for r in csv.DictReader(fh):
            g = groups.setdefault((r["subject"], r["algorithm"], r["target"]), ([], []))
            if task == "regression":
                g[0].append(float(r["prediction"]))
                g[1].append(float(r["truth"]))
            else:
                g[0].append(r["prediction"])
                g[1].append(r["truth"])
    rows = []
    for (subj, alg, target), (p, t) in groups.items():
        vals = classification_metrics(p, t, positive_of.get(target)) if task == "classification" \
            else {"rmse": rmse(p, t)}
        rows += [{"subject": subj, "algorithm": alg, "task": f"{task}/{target}", "metric": k, "value": float(v)}
                 for k, v in vals.items()]
    return rows


def cmd_report(run_dir) -> Report:
    """Recompute metrics from persisted predictions and compare with the stored report."""
    run = Path(run_dir)
    rep_path, pred_path, met_path = run / "report.json", run / "predictions.csv", run / "metrics.csv"
    for p in (rep_path, pred_path, met_path):
        if not p.is_file():
            raise StageError("cli-harness", "cmd_report", f"{run} lacks {p.name}")
    stored = json.loads(rep_path.read_text())
    task = stored["task"]
    positive_of = {}
    for f in run.glob("model.*.json"):
        for m in json.loads(f.read_text())["models"].values():
            positive_of[m["target"]] = m["positive"]
    with stage("detection", "recompute_metrics"):
        fresh = recompute_metrics(pred_path, positive_of, task)
    with open(met_path, newline="") as fh:
        on_disk = list(csv.DictReader(fh))
    key = lambda r: (r["subject"], r["algorithm"], r["task"], r["metric"])
    have = {key(r): float(r["value"]) for r in on_disk}
    want = {key(r): r["value"] for r in fresh}
    mismatches = []
    for k in sorted(set(have) | set(want)):
        a, b = have.get(k), want.get(k)
        if a is None or b is None or abs(a - b) > METRIC_TOL:
            mismatches.append(f"{'/'.join(k)}: stored {a}, recomputed {b}")
    lines = [f"scenario {stored['scenario_id']} ({task}), subjects: {', '.join(stored['subjects'])}"]
    by = {}
    for r in fresh:
        by.setdefault((r["task"], r["algorithm"], r["metric"]), []).append(r["value"])
    for (tk, alg, met), vals in sorted(by.items()):
        lines.append(f"  {tk:32s} {alg:12s} {met:10s} mean {np.mean(vals):.4f}  min {np.min(vals):.4f}"
                     f"  (n={len(vals)})")
    lines.append("metrics match stored report" if not mismatches else f"MISMATCH in {len(mismatches)} metric(s)")
    lines += [f"  {m}" for m in mismatches]
    text = "\n".join(lines)
    (run / "summary.txt").write_text(text + "\n")
    _write_metrics(run / "report_metrics.csv", fresh)
    return Report(text, fresh, mismatches)


# --------------------------------------------------------------------------- record / serve

def serve_session(cfg: ScenarioConfig, session: SessionData, *, host: str = "127.0.0.1", ports=None,
                  chunk_seconds: float = 0.125, speed: float = 0.0, wait_clients: int = 0,
                  timeout: float = 10.0) -> list[StreamOutlet]:
    """Start one outlet per stream; returns them once the push thread is running.

    ``speed`` 0 pushes as fast as possible; 1 paces at real time.
    """
    outlets = []
    for i, s in enumerate(cfg.streams):
        port = 0 if ports is None else ports[i]
        outlets.append(StreamOutlet(s.name, s.kind, s.channels, s.srate, s.units, host, port))

    def pump():
        if wait_clients:
            for o in outlets:
                o.wait_for_clients(wait_clients, timeout)
        pieces = []
        for o, s in zip(outlets, cfg.streams):
            c = session.streams[s.name]
            step = max(int(round(chunk_seconds * s.srate)), 1)
            for a in range(0, c.n_samples, step):
                pieces.append((float(c.t[min(a + step, c.n_samples) - 1]), 1, s.name, o, c.t[a:a + step],
                               c.values[a:a + step]))
        for ev in session.events:
            pieces.append((ev.t, 0, "", outlets[0], ev, None))
        pieces.sort(key=lambda p: (p[0], p[1], p[2]))
        t_wall = time.perf_counter()
        for t, kind, _, o, a, b in pieces:
            if speed > 0:
                delay = t / speed - (time.perf_counter() - t_wall)
                if delay > 0:
                    time.sleep(delay)
            if kind == 0:
                o.push_event(a.t, a.tag, a.payload)
            else:
                o.push_chunk(a, b)
        for o in outlets:
            o.close()

    th = threading.Thread(target=pump, daemon=True)
    th.start()
    for o in outlets:
        o.thread = th
    return outlets


def cmd_record(scenario, out, *, session: str = "recording", timeout: float = 5.0) -> Path:
    """Capture every declared socket stream until the producers close, then save a session directory."""
    cfg = scenario if isinstance(scenario, ScenarioConfig) else load_scenario(scenario)
    chunks: dict[str, list[SampleChunk]] = {}
    events: list[StreamEvent] = []
    with stage("stream-acquisition", "open_stream"):
        handles = [open_stream(replace(d, source="socket"), timeout=timeout) for d in cfg.streams]
    with stage("stream-acquisition", "read_stream"):
        for h in handles:
            chunks[h.desc.name] = h.read_all()
            events.extend(h.events)
            h.close()
    streams = {n: concat_chunks(c, n, len(cfg.stream(n).channels)) for n, c in chunks.items()}
    events.sort(key=lambda e: e.t)
    end = max((c.t[-1] for c in streams.values() if c.n_samples), default=0.0)
    rec = write_session_csv(Path(out), session, streams, {s.name: s.channels for s in cfg.streams}, events,
                            cfg.scenario_id, {s.name: s.srate for s in cfg.streams},
                            {s.name: s.kind for s in cfg.streams}, 0.0, float(end), {"source": "socket"})
    return Path(rec.directory)
