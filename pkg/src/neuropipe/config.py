"""Scenario documents: parsing, rendering, validation and pipeline resolution.

A scenario is a YAML document (``*.scenario.yaml``, top-level ``version: 1``)
naming the streams to acquire, how to fuse them, the ordered processing
stages, features, selection, detection models and the action rules.
Parsing is strict: unknown keys are errors.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from . import NeuropipeError
from .acquisition.sync import SyncPolicy, choose_master
from .features.assemble import FEATURE_KINDS, FeatureSpec
from .features.spectral import resolve_band

SCHEMA_VERSION = 1
STREAM_KINDS = ("eeg", "eog", "eye_tracking", "telemetry")
SOURCES = ("socket", "csv_replay", "synthetic")
STAGES = ("notch", "bandpass", "resample", "ica", "epoch_fixed", "epoch_event")
EPOCH_STAGES = ("epoch_fixed", "epoch_event")
TASKS = ("classification", "regression")
CLASSIFIERS = ("knn", "logistic", "lda", "qda", "dtree", "rforest")
REGRESSORS = ("linreg", "rforest_reg")
TARGET_SOURCES = ("block", "stimulus", "perclos", "subject")

DEFAULT_NOTCH_Q = 30.0
DEFAULT_BANDPASS_ORDER = 4
DEFAULT_PCA_VARIANCE = 0.95
DEFAULT_CORRELATION_THRESHOLD = 0.9
DEFAULT_HOLDOUT = 0.8
DEFAULT_DROWSY_THRESHOLD = 0.15
DEFAULT_ICA_MAX_SAMPLES = 60000

ENV_SCENARIO = "NEUROPIPE_SCENARIO"


class ScenarioError(NeuropipeError, ValueError):
    pass


class PlanError(NeuropipeError, ValueError):
    pass


@dataclass(frozen=True)
class StreamDescriptor:
    name: str
    kind: str
    channels: tuple[str, ...]
    srate: float
    units: str = ""
    source: str = "synthetic"
    address: str | None = None
    chunk_size: int | None = None


@dataclass(frozen=True)
class ProcessingStageSpec:
    stage: str
    params: dict[str, Any] = field(default_factory=dict)
    streams: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SelectionSpec:
    correlation_threshold: float | None = None
    pca_variance: float | None = None


@dataclass(frozen=True)
class TargetSpec:
    name: str
    source: str
    classes: dict[str, str] | None = None      # raw label -> class name; unmapped labels dropped
    positive: str | None = None
    mode: str = "per_subject"                   # per_subject | cross_subject | one_vs_rest
    epochs: str | None = None                   # restrict to epochs with this raw label (e.g. "target")
    stream: str | None = None                   # perclos source stream
    threshold: float | None = None              # perclos discretisation (classification)


@dataclass(frozen=True)
class DetectionSpec:
    task: str
    algorithms: tuple[str, ...]
    targets: tuple[TargetSpec, ...]
    hyperparameters: dict[str, dict[str, Any]] = field(default_factory=dict)
    split: dict[str, Any] = field(default_factory=lambda: {"holdout": DEFAULT_HOLDOUT})


@dataclass(frozen=True)
class ActionRule:
    action: str
    label: str | None = None
    min_confidence: float = 0.0
    min_score: float | None = None
    debounce: float = 0.0
    payload: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    streams: tuple[StreamDescriptor, ...]
    sync: SyncPolicy
    processing: tuple[ProcessingStageSpec, ...]
    features: tuple[FeatureSpec, ...]
    selection: SelectionSpec
    detection: DetectionSpec
    actions: tuple[ActionRule, ...] = ()
    seed: int = 0
    events: tuple[str, ...] = ()
    usecase: str | None = None
    version: int = SCHEMA_VERSION

    def stream(self, name: str) -> StreamDescriptor:
        for s in self.streams:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def stream_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.streams)


# --------------------------------------------------------------------------- parsing

_REQUIRED_STAGE_PARAMS = {
    "notch": ("freq",),
    "bandpass": ("low", "high"),
    "resample": ("rate",),
    "ica": (),
    "epoch_fixed": ("duration",),
    "epoch_event": ("pre", "post"),
}
_OPTIONAL_STAGE_PARAMS = {
    "notch": {"q": DEFAULT_NOTCH_Q},
    "bandpass": {"order": DEFAULT_BANDPASS_ORDER},
    "resample": {},
    "ica": {"n_components": None, "reject": "auto", "reference": None, "threshold": 0.7,
            "max_samples": DEFAULT_ICA_MAX_SAMPLES},
    "epoch_fixed": {},
    "epoch_event": {"tag": "stimulus", "n_samples": None},
}


def _expect_map(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{path}: expected a mapping, got {type(obj).__name__}")
    return obj


def _expect_list(obj, path: str) -> list:
    if not isinstance(obj, list):
        raise ScenarioError(f"{path}: expected a list, got {type(obj).__name__}")
    return obj


def _check_keys(d: dict, allowed, required, path: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ScenarioError(f"{path}: unknown key(s) {unknown}")
    for k in required:
        if k not in d or d[k] is None:
            raise ScenarioError(f"{path}: missing required field {k!r}")


def _num(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{path}: expected a number, got {v!r}")
    return float(v)


def _parse_stream(d, path) -> StreamDescriptor:
    d = _expect_map(d, path)
    _check_keys(d, ("name", "kind", "channels", "srate", "units", "source", "address", "chunk_size"),
                ("name", "kind", "channels", "srate"), path)
    if d["kind"] not in STREAM_KINDS:
        raise ScenarioError(f"{path}.kind: unknown stream kind {d['kind']!r}; expected one of {STREAM_KINDS}")
    source = d.get("source", "synthetic")
    if source not in SOURCES:
        raise ScenarioError(f"{path}.source: unknown source {source!r}; expected one of {SOURCES}")
    channels = tuple(str(c) for c in _expect_list(d["channels"], f"{path}.channels"))
    if not channels:
        raise ScenarioError(f"{path}.channels: no channels declared")
    if len(set(channels)) != len(channels):
        raise ScenarioError(f"{path}.channels: channel labels must be unique")
    srate = _num(d["srate"], f"{path}.srate")
    if srate <= 0:
        raise ScenarioError(f"{path}.srate: must be > 0")
    chunk = d.get("chunk_size")
    return StreamDescriptor(str(d["name"]), d["kind"], channels, srate, str(d.get("units", "")), source,
                            d.get("address"), None if chunk is None else int(chunk))


def _parse_sync(d, path) -> SyncPolicy:
    if d is None:
        return SyncPolicy()
    d = _expect_map(d, path)
    _check_keys(d, ("master", "tolerance", "max_gap", "queue_capacity"), (), path)
    return SyncPolicy(d.get("master"), None if d.get("tolerance") is None else _num(d["tolerance"], path),
                      _num(d.get("max_gap", 0.1), f"{path}.max_gap"), int(d.get("queue_capacity", 1024)))


def _parse_stage(d, path) -> ProcessingStageSpec:
    d = _expect_map(d, path)
    stage = d.get("stage")
    if stage not in STAGES:
        raise ScenarioError(f"{path}.stage: unknown stage {stage!r}; expected one of {STAGES}")
    allowed = ("stage", "streams") + _REQUIRED_STAGE_PARAMS[stage] + tuple(_OPTIONAL_STAGE_PARAMS[stage])
    _check_keys(d, allowed, _REQUIRED_STAGE_PARAMS[stage], path)
    params = dict(_OPTIONAL_STAGE_PARAMS[stage])
    for k in _REQUIRED_STAGE_PARAMS[stage] + tuple(_OPTIONAL_STAGE_PARAMS[stage]):
        if k in d:
            params[k] = d[k]
    for k in ("freq", "q", "low", "high", "rate", "duration", "pre", "post"):
        if k in params:
            params[k] = _num(params[k], f"{path}.{k}")
    if stage == "bandpass":
        if not 0 <= params["low"] < params["high"]:
            raise ScenarioError(f"{path}: invalid band edges ({params['low']}, {params['high']})")
        params["order"] = int(params["order"])
    if stage == "notch" and (params["freq"] <= 0 or params["q"] <= 0):
        raise ScenarioError(f"{path}: notch frequency and q must be positive")
    if stage == "resample" and params["rate"] <= 0:
        raise ScenarioError(f"{path}.rate: must be > 0")
    if stage == "epoch_fixed" and params["duration"] <= 0:
        raise ScenarioError(f"{path}.duration: must be > 0")
    if stage == "epoch_event" and (params["pre"] < 0 or params["post"] < 0 or params["pre"] + params["post"] <= 0):
        raise ScenarioError(f"{path}: need pre, post >= 0 and pre + post > 0")
    if stage == "ica":
        rej = params["reject"]
        if not (rej in ("auto", "none") or (isinstance(rej, list) and all(isinstance(i, int) for i in rej))):
            raise ScenarioError(f"{path}.reject: expected 'auto', 'none' or a list of component indices")
        ref = params["reference"]
        if isinstance(ref, list):
            params["reference"] = [str(r) for r in ref]
    streams = d.get("streams")
    if streams is not None:
        streams = tuple(str(s) for s in _expect_list(streams, f"{path}.streams"))
    return ProcessingStageSpec(stage, params, streams)


def _parse_feature(d, path) -> FeatureSpec:
    d = _expect_map(d, path)
    _check_keys(d, ("kind", "stream", "channels", "params"), ("kind", "stream"), path)
    if d["kind"] not in FEATURE_KINDS:
        raise ScenarioError(f"{path}.kind: unknown feature {d['kind']!r}; expected one of {FEATURE_KINDS}")
    ch = d.get("channels")
    params = dict(_expect_map(d.get("params") or {}, f"{path}.params"))
    for b in params.get("bands", []):
        try:
            resolve_band(b)
        except Exception as exc:
            raise ScenarioError(f"{path}.params.bands: {exc}") from None
    return FeatureSpec(d["kind"], str(d["stream"]), None if ch is None else tuple(str(c) for c in ch), params)


def _parse_selection(d, path) -> SelectionSpec:
    if d is None:
        return SelectionSpec()
    d = _expect_map(d, path)
    _check_keys(d, ("methods", "correlation_threshold", "pca_variance"), (), path)
    methods = _expect_list(d.get("methods", []), f"{path}.methods")
    for m in methods:
        if m not in ("correlation", "pca"):
            raise ScenarioError(f"{path}.methods: unknown selection method {m!r}")
    corr = pca = None
    if "correlation" in methods:
        corr = _num(d.get("correlation_threshold", DEFAULT_CORRELATION_THRESHOLD), f"{path}.correlation_threshold")
    if "pca" in methods:
        pca = _num(d.get("pca_variance", DEFAULT_PCA_VARIANCE), f"{path}.pca_variance")
        if not 0 < pca <= 1:
            raise ScenarioError(f"{path}.pca_variance: must be in (0, 1]")
    return SelectionSpec(corr, pca)


def _parse_target(d, path) -> TargetSpec:
    d = _expect_map(d, path)
    _check_keys(d, ("name", "source", "classes", "positive", "mode", "epochs", "stream", "threshold"),
                ("name", "source"), path)
    if d["source"] not in TARGET_SOURCES:
        raise ScenarioError(f"{path}.source: unknown target source {d['source']!r}; expected one of {TARGET_SOURCES}")
    mode = d.get("mode", "per_subject")
    if mode not in ("per_subject", "cross_subject", "one_vs_rest"):
        raise ScenarioError(f"{path}.mode: unknown mode {mode!r}")
    classes = d.get("classes")
    if classes is not None:
        classes = {str(k): str(v) for k, v in _expect_map(classes, f"{path}.classes").items()}
    thr = d.get("threshold")
    return TargetSpec(str(d["name"]), d["source"], classes, d.get("positive"), mode, d.get("epochs"),
                      d.get("stream"), None if thr is None else _num(thr, f"{path}.threshold"))


def _parse_detection(d, path) -> DetectionSpec:
    d = _expect_map(d, path)
    _check_keys(d, ("task", "algorithms", "targets", "hyperparameters", "split"), ("task", "algorithms", "targets"), path)
    if d["task"] not in TASKS:
        raise ScenarioError(f"{path}.task: expected exactly one of {TASKS}, got {d['task']!r}")
    valid = CLASSIFIERS if d["task"] == "classification" else REGRESSORS
    algos = tuple(str(a) for a in _expect_list(d["algorithms"], f"{path}.algorithms"))
    for a in algos:
        if a not in valid:
            raise ScenarioError(f"{path}.algorithms: unknown model {a!r} for {d['task']}; valid: {valid}")
    if not algos:
        raise ScenarioError(f"{path}.algorithms: no models requested")
    targets = tuple(_parse_target(t, f"{path}.targets[{i}]")
                    for i, t in enumerate(_expect_list(d["targets"], f"{path}.targets")))
    if not targets:
        raise ScenarioError(f"{path}.targets: no targets declared")
    hp = {str(k): dict(_expect_map(v, f"{path}.hyperparameters.{k}"))
          for k, v in _expect_map(d.get("hyperparameters") or {}, f"{path}.hyperparameters").items()}
    split = dict(_expect_map(d.get("split") or {"holdout": DEFAULT_HOLDOUT}, f"{path}.split"))
    _check_keys(split, ("holdout", "kfold"), (), f"{path}.split")
    if len(split) != 1:
        raise ScenarioError(f"{path}.split: give exactly one of holdout / kfold")
    return DetectionSpec(d["task"], algos, targets, hp, split)


def _parse_action(d, path) -> ActionRule:
    d = _expect_map(d, path)
    _check_keys(d, ("action", "label", "min_confidence", "min_score", "debounce", "payload"), ("action",), path)
    ms = d.get("min_score")
    return ActionRule(str(d["action"]), d.get("label"), _num(d.get("min_confidence", 0.0), path),
                      None if ms is None else _num(ms, path), _num(d.get("debounce", 0.0), path),
                      dict(d.get("payload") or {}))


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse and structurally check a scenario document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError(f"syntax error{where}: {getattr(exc, 'problem', exc)}") from None
    doc = _expect_map(doc, "scenario")
    _check_keys(doc, ("version", "scenario_id", "usecase", "seed", "streams", "sync", "events", "processing",
                      "features", "selection", "detection", "actions"),
                ("version", "scenario_id", "detection"), "scenario")
    if doc["version"] != SCHEMA_VERSION:
        raise ScenarioError(f"version: unsupported schema version {doc['version']!r}")
    streams = tuple(_parse_stream(s, f"streams[{i}]") for i, s in enumerate(_expect_list(doc.get("streams") or [], "streams")))
    if not streams:
        raise ScenarioError("no streams declared")
    names = [s.name for s in streams]
    if len(set(names)) != len(names):
        raise ScenarioError("streams: stream names must be unique")
    processing = tuple(_parse_stage(s, f"processing[{i}]")
                       for i, s in enumerate(_expect_list(doc.get("processing") or [], "processing")))
    features = tuple(_parse_feature(f, f"features[{i}]")
                     for i, f in enumerate(_expect_list(doc.get("features") or [], "features")))
    actions = tuple(_parse_action(a, f"actions[{i}]") for i, a in enumerate(_expect_list(doc.get("actions") or [], "actions")))
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("seed: expected an unsigned integer")
    usecase = doc.get("usecase")
    if usecase is not None and usecase not in ("UC1", "UC2", "UC3", "UC4"):
        raise ScenarioError(f"usecase: unknown use case {usecase!r}")
    return ScenarioConfig(
        scenario_id=str(doc["scenario_id"]),
        streams=streams,
        sync=_parse_sync(doc.get("sync"), "sync"),
        processing=processing,
        features=features,
        selection=_parse_selection(doc.get("selection"), "selection"),
        detection=_parse_detection(doc["detection"], "detection"),
        actions=actions,
        seed=seed,
        events=tuple(str(e) for e in _expect_list(doc.get("events") or [], "events")),
        usecase=usecase,
        version=doc["version"],
    )


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Plain-data form with every default spelled out."""
    sel_methods = [m for m, v in (("correlation", cfg.selection.correlation_threshold),
                                  ("pca", cfg.selection.pca_variance)) if v is not None]
    sel: dict[str, Any] = {"methods": sel_methods}
    if cfg.selection.correlation_threshold is not None:
        sel["correlation_threshold"] = cfg.selection.correlation_threshold
    if cfg.selection.pca_variance is not None:
        sel["pca_variance"] = cfg.selection.pca_variance

    def stream(s: StreamDescriptor) -> dict:
        d = asdict(s)
        d["channels"] = list(s.channels)
        return d

    def stage(p: ProcessingStageSpec) -> dict:
        d = {"stage": p.stage, **copy.deepcopy(p.params)}
        if p.streams is not None:
            d["streams"] = list(p.streams)
        return d

    def feature(f: FeatureSpec) -> dict:
        d = {"kind": f.kind, "stream": f.stream, "params": copy.deepcopy(f.params)}
        if f.channels is not None:
            d["channels"] = list(f.channels)
        return d

    return {
        "version": cfg.version,
        "scenario_id": cfg.scenario_id,
        "usecase": cfg.usecase,
        "seed": cfg.seed,
        "streams": [stream(s) for s in cfg.streams],
        "sync": asdict(cfg.sync),
        "events": list(cfg.events),
        "processing": [stage(p) for p in cfg.processing],
        "features": [feature(f) for f in cfg.features],
        "selection": sel,
        "detection": {
            "task": cfg.detection.task,
            "algorithms": list(cfg.detection.algorithms),
            "targets": [asdict(t) for t in cfg.detection.targets],
            "hyperparameters": copy.deepcopy(cfg.detection.hyperparameters),
            "split": dict(cfg.detection.split),
        },
        "actions": [asdict(a) for a in cfg.actions],
    }


def render_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False, default_flow_style=None)


def scenario_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(json.dumps(scenario_to_dict(cfg), sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------- validation

@dataclass(frozen=True)
class Finding:
    severity: str      # "error" | "warning"
    path: str
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def add(self, severity: str, path: str, message: str) -> None:
        self.findings.append(Finding(severity, path, message))


def default_stage_streams(cfg: ScenarioConfig, stage: ProcessingStageSpec) -> tuple[str, ...]:
    if stage.streams is not None:
        return stage.streams
    if stage.stage in EPOCH_STAGES:
        return cfg.stream_names
    return tuple(s.name for s in cfg.streams if s.kind == "eeg")


def primary_stream(cfg: ScenarioConfig) -> str:
    for s in cfg.streams:
        if s.kind == "eeg":
            return s.name
    return cfg.streams[0].name


def fused_rate(cfg: ScenarioConfig) -> float:
    """Rate of every stream after synchronisation: the master stream's rate."""
    srates = {s.name: s.srate for s in cfg.streams}
    try:
        return srates[choose_master(srates, cfg.sync)]
    except Exception:
        return max(srates.values())


def validate_scenario(cfg: ScenarioConfig) -> ValidationReport:
    """Cross-reference checks; problems are reported as findings, never raised.

    Stages see every stream at the fused (master) rate.
    """
    rep = ValidationReport()
    declared = set(cfg.stream_names)
    if cfg.sync.master is not None and cfg.sync.master not in declared:
        rep.add("error", "sync.master", f"undeclared master stream {cfg.sync.master!r}")
    rates = {s.name: fused_rate(cfg) for s in cfg.streams}
    epoch_seen = False
    for i, st in enumerate(cfg.processing):
        path = f"processing[{i}]"
        if epoch_seen:
            rep.add("error", path, f"stage {st.stage!r} follows epoching; epoching must be the last stage")
        targets = default_stage_streams(cfg, st)
        for s in targets:
            if s not in declared:
                rep.add("error", f"{path}.streams", f"undeclared stream {s!r}")
        targets = [s for s in targets if s in declared]
        if not targets and st.stage not in EPOCH_STAGES:
            rep.add("warning", path, f"stage {st.stage!r} applies to no stream")
        p = st.params
        for s in targets:
            r = rates[s]
            if st.stage == "notch" and not p["freq"] < r / 2:
                rep.add("error", f"{path}.freq", f"notch {p['freq']} Hz at/above Nyquist of {s!r} ({r / 2} Hz)")
            elif st.stage == "bandpass" and not p["high"] < r / 2:
                rep.add("error", f"{path}.high", f"invalid band edges: high {p['high']} Hz at/above Nyquist of {s!r} ({r / 2} Hz)")
            elif st.stage == "resample":
                if p["rate"] > r / 2:
                    rep.add("warning", f"{path}.rate",
                            f"upsampling declared for {s!r}: target {p['rate']} Hz above half the source rate {r} Hz")
                rates[s] = p["rate"]
        if st.stage == "ica":
            ref = p.get("reference")
            if isinstance(ref, str) and ref not in declared:
                rep.add("error", f"{path}.reference", f"undeclared reference stream {ref!r}")
            elif isinstance(ref, list):
                pool = {c for s in targets for c in cfg.stream(s).channels}
                for c in ref:
                    if c not in pool:
                        rep.add("error", f"{path}.reference", f"reference channel {c!r} not in processed streams")
            if p.get("reject") == "auto" and ref is None:
                rep.add("warning", f"{path}.reference", "automatic rejection without an EOG reference rejects nothing")
        if st.stage == "epoch_event" and p["tag"] not in cfg.events:
            rep.add("error", f"{path}.tag", f"event epoching on {p['tag']!r} but no such event source is declared")
        if st.stage in EPOCH_STAGES:
            if epoch_seen:
                rep.add("error", path, "more than one epoching stage")
            epoch_seen = True
    for i, f in enumerate(cfg.features):
        path = f"features[{i}]"
        if f.stream not in declared:
            rep.add("error", f"{path}.stream", f"feature references undeclared stream {f.stream!r}")
            continue
        desc = cfg.stream(f.stream)
        for c in f.channels or ():
            if c not in desc.channels:
                rep.add("error", f"{path}.channels", f"channel {c!r} not in stream {f.stream!r}")
        nyq = rates[f.stream] / 2
        for b in f.params.get("bands", []):
            low, high = resolve_band(b)
            if low >= nyq:
                rep.add("error", f"{path}.params.bands", f"band {b!r} lies above Nyquist ({nyq} Hz) of {f.stream!r}")
            elif high > nyq:
                rep.add("warning", f"{path}.params.bands", f"band {b!r} clipped at Nyquist ({nyq} Hz)")
    if cfg.features and not epoch_seen:
        rep.add("warning", "processing", "features declared but no epoching stage")
    for i, t in enumerate(cfg.detection.targets):
        path = f"detection.targets[{i}]"
        if t.source == "perclos":
            if t.stream is None or t.stream not in declared:
                rep.add("error", f"{path}.stream", "perclos target needs a declared eye-tracking stream")
            if cfg.detection.task == "classification" and t.threshold is None:
                rep.add("warning", f"{path}.threshold", f"no drowsy threshold; default {DEFAULT_DROWSY_THRESHOLD}")
        if cfg.detection.task == "classification" and t.source in ("block", "stimulus") and not t.classes:
            rep.add("error", f"{path}.classes", "classification target needs a class mapping")
        if t.positive is not None and t.classes and t.positive not in t.classes.values():
            rep.add("error", f"{path}.positive", f"positive class {t.positive!r} is not a target class")
    return rep


# --------------------------------------------------------------------------- planning

@dataclass(frozen=True)
class PlanStage:
    stage: str
    params: dict[str, Any]
    streams: tuple[str, ...]
    rates_in: dict[str, float]
    rates_out: dict[str, float]
    epoch_samples: dict[str, int] | None = None


@dataclass(frozen=True)
class PipelinePlan:
    scenario_id: str
    primary: str
    stages: tuple[PlanStage, ...]
    input_rates: dict[str, float]      # declared
    final_rates: dict[str, float]      # after fusion and every stage

    @property
    def output_rates(self) -> list[float]:
        """Primary-stream rate after each stage."""
        return [s.rates_out[self.primary] for s in self.stages]

    @property
    def epoch_stage(self) -> PlanStage | None:
        return self.stages[-1] if self.stages and self.stages[-1].stage in EPOCH_STAGES else None

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "primary": self.primary,
            "input_rates": self.input_rates,
            "final_rates": self.final_rates,
            "stages": [asdict(s) for s in self.stages],
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def resolve_pipeline(cfg: ScenarioConfig) -> PipelinePlan:
    """Concrete ordered stage list with per-stage sample rates."""
    rep = validate_scenario(cfg)
    if rep.errors:
        raise PlanError("; ".join(f"{f.path}: {f.message}" for f in rep.errors))
    inputs = {s.name: s.srate for s in cfg.streams}
    rates = {s.name: fused_rate(cfg) for s in cfg.streams}
    stages = []
    for st in cfg.processing:
        targets = default_stage_streams(cfg, st)
        rin = dict(rates)
        epoch_n = None
        if st.stage == "resample":
            for s in targets:
                rates[s] = float(st.params["rate"])
        elif st.stage == "epoch_fixed":
            epoch_n = {s: int(round(st.params["duration"] * rates[s])) for s in targets}
        elif st.stage == "epoch_event":
            if not cfg.events:
                raise PlanError("event epoching requested but the scenario declares no event source")
            dur = st.params["pre"] + st.params["post"]
            override = st.params.get("n_samples")
            epoch_n = {s: int(override) if override and s == primary_stream(cfg) else int(round(dur * rates[s]))
                       for s in targets}
        stages.append(PlanStage(st.stage, copy.deepcopy(st.params), tuple(targets), rin, dict(rates), epoch_n))
    return PipelinePlan(cfg.scenario_id, primary_stream(cfg), tuple(stages), inputs, dict(rates))


# --------------------------------------------------------------------------- loading

BUILTIN = ("uc1", "uc2", "uc3_regression", "uc3_classification", "uc4")


def builtin_scenario_text(name: str) -> str:
    return resources.files("neuropipe").joinpath("scenarios", f"{name}.scenario.yaml").read_text()


def load_scenario(ref: str | os.PathLike | None = None) -> ScenarioConfig:
    """Load from a path, a built-in name (``uc1`` ...), or ``$NEUROPIPE_SCENARIO``."""
    if ref is None:
        ref = os.environ.get(ENV_SCENARIO)
        if not ref:
            raise ScenarioError(f"no scenario given and {ENV_SCENARIO} is not set")
    p = Path(ref)
    if p.exists():
        return parse_scenario(p.read_text())
    name = str(ref).removesuffix(".scenario.yaml")
    if name in BUILTIN:
        return parse_scenario(builtin_scenario_text(name))
    raise ScenarioError(f"scenario {str(ref)!r} not found (built-ins: {', '.join(BUILTIN)})")
