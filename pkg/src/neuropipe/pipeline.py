"""Scenario execution: fuse streams, run the stage chain, cut epochs, extract features.

One streaming engine serves both batch and online use.  Batch processing of
a recorded session pushes every stream as a single chunk; online processing
pushes whatever the sources deliver.  Every stage carries its own state
across chunks, so both paths yield the same epochs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import NeuropipeError
from .acquisition.session import SessionRecord, read_session_csv
from .acquisition.sync import FusedFrames, Synchronizer
from .acquisition.types import SampleChunk, StreamEvent
from .config import EPOCH_STAGES, PipelinePlan, ScenarioConfig, TargetSpec, DEFAULT_DROWSY_THRESHOLD, resolve_pipeline
from .dsp.epochs import Block, Epoch
from .dsp.filters import CausalFilter, design_bandpass, design_notch
from .dsp.ica import IcaModel, eog_artifact_components, fast_ica
from .dsp.resample import StreamingResampler
from .features.assemble import FeatureVector, assemble_features
from .features.temporal import DEFAULT_CLOSED_THRESHOLD, perclos
from .seeds import derive_seed

log = logging.getLogger(__name__)


class PipelineError(NeuropipeError):
    pass


# --------------------------------------------------------------------------- session data

@dataclass
class SessionData:
    """Streams, event log and metadata of one recording, whatever its origin."""
    scenario_id: str
    streams: dict[str, SampleChunk]
    events: list[StreamEvent]
    meta: dict = field(default_factory=dict)
    name: str = ""

    @classmethod
    def from_record(cls, record) -> "SessionData":
        if not isinstance(record, SessionRecord):
            record = SessionRecord.load(record)
        streams, events = read_session_csv(record)
        return cls(record.scenario_id, streams, events, dict(record.meta), record.directory)

    @classmethod
    def from_synthetic(cls, syn, name: str = "") -> "SessionData":
        return cls(syn.scenario_id, dict(syn.streams), list(syn.events), dict(syn.meta),
                   name or f"{syn.meta.get('subject', '')}_day{syn.meta.get('day', 1)}")

    @property
    def subject(self) -> str:
        return str(self.meta.get("subject", "s01"))


def blocks_from_events(events: Sequence[StreamEvent]) -> list[Block]:
    """Pair ``block_start`` / ``block_end`` events into condition blocks."""
    out, open_ = [], {}
    for ev in events:
        if ev.tag == "block_start":
            open_[ev.payload.get("label")] = ev
        elif ev.tag == "block_end":
            st = open_.pop(ev.payload.get("label"), None)
            if st is not None:
                payload = {k: v for k, v in st.payload.items() if k != "label"}
                out.append(Block(st.t, ev.t, str(st.payload.get("label")), payload))
    return sorted(out, key=lambda b: b.start)


# --------------------------------------------------------------------------- stage chain

class IcaProjection:
    """Fixed linear artifact removal fitted offline; applied sample by sample online."""

    def __init__(self, model: IcaModel | None, rejected: Sequence[int]):
        self.model = model
        self.rejected = sorted(int(i) for i in rejected)
        if model is not None and self.rejected:
            w = model.filters[self.rejected]                    # (r, c)
            a = model.mixing[:, self.rejected]                  # (c, r)
            self._proj = w.T @ a.T                              # (c, c)
            self._mean = model.mean
        else:
            self._proj = None

    def process(self, x: np.ndarray) -> np.ndarray:
        if self._proj is None or x.shape[0] == 0:
            return x
        # row-wise product instead of BLAS: a one-row matmul rounds differently from a
        # block, which would let the chunking of an online stream change the output
        xc = x - self._mean
        out = np.empty_like(xc)
        for a in range(0, xc.shape[0], 4096):
            out[a:a + 4096] = (xc[a:a + 4096, :, None] * self._proj[None]).sum(axis=1)
        return x - out

    def to_dict(self) -> dict:
        return {"model": None if self.model is None else self.model.to_dict(), "rejected": self.rejected}

    @classmethod
    def from_dict(cls, d: dict) -> "IcaProjection":
        return cls(None if d.get("model") is None else IcaModel.from_dict(d["model"]), d.get("rejected", []))


def _stage_processor(stage, rate_in: float, n_channels: int, ica: IcaProjection | None):
    p = stage.params
    if stage.stage == "notch":
        return CausalFilter(design_notch(p["freq"], rate_in, p["q"]), n_channels)
    if stage.stage == "bandpass":
        return CausalFilter(design_bandpass(p["low"], p["high"], p["order"], rate_in), n_channels)
    if stage.stage == "resample":
        return StreamingResampler(rate_in, p["rate"], n_channels)
    if stage.stage == "ica":
        return ica if ica is not None else IcaProjection(None, [])
    raise PipelineError(f"no processor for stage {stage.stage!r}")


class StreamChain:
    """Signal stages (everything before epoching) for one stream."""

    def __init__(self, plan: PipelinePlan, stream: str, n_channels: int,
                 ica: Mapping[str, IcaProjection] | None = None, stop_before_ica: bool = False):
        self.stream = stream
        self.procs = []
        for st in plan.stages:
            if st.stage in EPOCH_STAGES or stream not in st.streams:
                continue
            if st.stage == "ica" and stop_before_ica:
                break
            self.procs.append(_stage_processor(st, st.rates_in[stream], n_channels, (ica or {}).get(stream)))

    def process(self, x: np.ndarray) -> np.ndarray:
        for p in self.procs:
            x = p.process(x)
        return x


# --------------------------------------------------------------------------- epoching

@dataclass
class EpochBundle:
    """Same time window cut from every stream."""
    index: int
    t0: float
    epochs: dict[str, Epoch]
    event: StreamEvent | None = None


class _Buffer:
    def __init__(self, n_channels: int):
        self.parts: list[np.ndarray] = []
        self.data = np.zeros((0, n_channels))
        self.start = 0          # absolute index of data[0]
        self.total = 0          # samples received

    def append(self, x: np.ndarray) -> None:
        if x.shape[0]:
            self.parts.append(x)
            self.total += x.shape[0]

    def take(self, a: int, b: int) -> np.ndarray:
        if self.parts:
            self.data = np.concatenate([self.data] + self.parts)
            self.parts = []
        return self.data[a - self.start:b - self.start].copy()

    def trim(self, keep_from: int) -> None:
        if keep_from <= self.start:
            return
        if self.parts:
            self.data = np.concatenate([self.data] + self.parts)
            self.parts = []
        drop = min(keep_from - self.start, self.data.shape[0])
        self.data = self.data[drop:]
        self.start += drop


class OnlineRunner:
    """Push chunks and events in; pop completed epoch bundles out."""

    def __init__(self, pipeline: "Pipeline"):
        self.pl = pipeline
        cfg, plan = pipeline.cfg, pipeline.plan
        self.channels = {s.name: len(s.channels) for s in cfg.streams}
        self.labels = {s.name: tuple(s.channels) for s in cfg.streams}
        self.sync = Synchronizer({s.name: s.srate for s in cfg.streams}, self.channels, cfg.sync)
        self.chains = {name: StreamChain(plan, name, n, pipeline.ica) for name, n in self.channels.items()}
        self.rates = dict(plan.final_rates)
        self.buffers = {name: _Buffer(n) for name, n in self.channels.items()}
        self.epoch_stage = plan.epoch_stage
        self.t0: float | None = None
        self.events: list[StreamEvent] = []
        self.gaps = []
        self._next_fixed = 0
        self._pending: list[StreamEvent] = []
        self._n_events = 0
        self.skipped = 0
        self.closed = False

    # inputs
    def push(self, chunk: SampleChunk) -> None:
        self.sync.push(chunk)

    def push_event(self, event: StreamEvent) -> None:
        self.events.append(event)
        st = self.epoch_stage
        if st is not None and st.stage == "epoch_event" and event.tag == st.params["tag"]:
            self._pending.append(event)

    def close(self) -> list[EpochBundle]:
        self.sync.close()
        out = self.pop()
        self.closed = True
        if self.epoch_stage is not None and self.epoch_stage.stage == "epoch_event":
            if self._pending:
                log.info("dropping %d events whose window extends past the end of the stream", len(self._pending))
                self.skipped += len(self._pending)
                self._pending = []
        elif self.epoch_stage is not None:
            have = min(self.buffers[s].total for s in self.epoch_stage.streams)
            n = self.epoch_stage.epoch_samples[self.pl.plan.primary] if self.pl.plan.primary in self.epoch_stage.streams \
                else next(iter(self.epoch_stage.epoch_samples.values()))
            if have % max(n, 1):
                log.info("final partial epoch dropped")
        return out

    # processing
    def _absorb(self, frames: FusedFrames) -> None:
        if len(frames) == 0:
            return
        if self.t0 is None:
            self.t0 = float(frames.t[0])
        self.gaps.extend(frames.gaps)
        for name, chain in self.chains.items():
            self.buffers[name].append(chain.process(frames.values[name]))

    def pop(self) -> list[EpochBundle]:
        self._absorb(self.sync.pop())
        st = self.epoch_stage
        if st is None or self.t0 is None:
            return []
        if st.stage == "epoch_fixed":
            return self._pop_fixed(st)
        return self._pop_events(st)

    def _pop_fixed(self, st) -> list[EpochBundle]:
        d = st.params["duration"]
        out = []
        while True:
            k = self._next_fixed
            bounds = {}
            for s in st.streams:
                a = int(round(k * d * self.rates[s]))
                b = a + st.epoch_samples[s]
                if self.buffers[s].total < b:
                    return out
                bounds[s] = (a, b)
            epochs = {s: Epoch(self.buffers[s].take(a, b), self.rates[s], self.t0 + a / self.rates[s],
                               self.labels[s], None, None, {"index": k}) for s, (a, b) in bounds.items()}
            out.append(EpochBundle(k, self.t0 + k * d, epochs))
            self._next_fixed += 1
            for s, (a, b) in bounds.items():
                self.buffers[s].trim(b)

    def _pop_events(self, st) -> list[EpochBundle]:
        pre, post = st.params["pre"], st.params["post"]
        out = []
        self._pending.sort(key=lambda e: e.t)
        keep = []
        for ev in self._pending:
            bounds = {}
            ready, skip = True, False
            for s in st.streams:
                a = int(round((ev.t - pre - self.t0) * self.rates[s]))
                b = a + st.epoch_samples[s]
                if a < self.buffers[s].start:
                    skip = True
                    break
                if self.buffers[s].total < b:
                    ready = False
                bounds[s] = (a, b)
            if skip:
                self.skipped += 1
                continue
            if not ready:
                keep.append(ev)
                continue
            epochs = {s: Epoch(self.buffers[s].take(a, b), self.rates[s], self.t0 + a / self.rates[s],
                               self.labels[s], ev.payload.get("label"), pre, {"event_t": ev.t, **ev.payload})
                      for s, (a, b) in bounds.items()}
            out.append(EpochBundle(self._n_events, ev.t, epochs, ev))
            self._n_events += 1
        self._pending = keep
        # retain enough history for events that may still arrive (ordered, up to 1 s late)
        for s in st.streams:
            r = self.rates[s]
            lo = [int(round((e.t - pre - self.t0) * r)) for e in keep]
            horizon = self.buffers[s].total - int(math.ceil((pre + 1.0) * r))
            self.buffers[s].trim(max(min(lo + [horizon]), 0))
        return out


# --------------------------------------------------------------------------- pipeline

class Pipeline:
    """A resolved scenario plus any fitted ICA projections."""

    def __init__(self, cfg: ScenarioConfig, plan: PipelinePlan | None = None,
                 ica: Mapping[str, IcaProjection] | None = None):
        self.cfg = cfg
        self.plan = plan or resolve_pipeline(cfg)
        self.ica = dict(ica or {})

    # ICA ---------------------------------------------------------------
    def ica_stage(self):
        for st in self.plan.stages:
            if st.stage == "ica":
                return st
        return None

    def needs_ica_fit(self) -> bool:
        st = self.ica_stage()
        if st is None:
            return False
        rej = st.params["reject"]
        return not (rej == "none" or (rej == "auto" and st.params.get("reference") is None))

    def fit_ica(self, sessions: Sequence[SessionData], seed: int = 0) -> dict[str, IcaProjection]:
        """Fit one projection per ICA-processed stream on the given sessions."""
        st = self.ica_stage()
        if st is None:
            return {}
        if sum(s.stage == "ica" for s in self.plan.stages) > 1:
            raise PipelineError("more than one ICA stage is not supported")
        if not self.needs_ica_fit():
            self.ica = {s: IcaProjection(None, []) for s in st.streams}
            return self.ica
        p = st.params
        collected: dict[str, list[np.ndarray]] = {s: [] for s in self.cfg.stream_names}
        for sess in sessions:
            sync = Synchronizer({s.name: s.srate for s in self.cfg.streams},
                                {s.name: len(s.channels) for s in self.cfg.streams}, self.cfg.sync)
            for c in sess.streams.values():
                sync.push(c)
            sync.close()
            frames = sync.pop()
            for s in self.cfg.streams:
                chain = StreamChain(self.plan, s.name, len(s.channels), stop_before_ica=True)
                collected[s.name].append(chain.process(frames.values[s.name]))
        out = {}
        for s in st.streams:
            x = np.concatenate(collected[s])
            step = max(1, math.ceil(x.shape[0] / int(p["max_samples"])))
            xs = x[::step]
            model = fast_ica(xs, p.get("n_components"), seed=derive_seed(seed, f"ica:{s}") % (2**31))
            rej = p["reject"]
            if rej == "auto":
                ref = p["reference"]
                if isinstance(ref, str):
                    refx = np.concatenate(collected[ref])[::step]
                    if refx.shape[0] != xs.shape[0]:
                        raise PipelineError(f"ICA reference stream {ref!r} does not align with {s!r}")
                else:
                    labels = list(self.cfg.stream(s).channels)
                    refx = xs[:, [labels.index(c) for c in ref]]
                rejected = eog_artifact_components(model, xs, refx, p["threshold"])
                if len(rejected) >= model.n_components:
                    raise PipelineError(f"ICA on {s!r}: every component matches the EOG reference")
            else:
                rejected = list(rej)
            log.info("ICA on %s: rejected components %s (converged=%s)", s, rejected, model.converged)
            out[s] = IcaProjection(model, rejected)
        self.ica = out
        return out

    def ica_dict(self) -> dict:
        return {k: v.to_dict() for k, v in self.ica.items()}

    # running -------------------------------------------------------------
    def runner(self) -> OnlineRunner:
        if self.needs_ica_fit() and not self.ica:
            raise PipelineError("ICA stage declared but not fitted; call fit_ica first")
        return OnlineRunner(self)

    def epochs(self, session: SessionData) -> list[EpochBundle]:
        """Batch path: whole session pushed at once."""
        r = self.runner()
        for ev in session.events:
            r.push_event(ev)
        for name in self.cfg.stream_names:
            if name not in session.streams:
                raise PipelineError(f"session {session.name!r} lacks stream {name!r}")
            r.push(session.streams[name])
        out = r.pop()
        out.extend(r.close())
        return out

    def features(self, bundle: EpochBundle) -> FeatureVector:
        fv = assemble_features(bundle.epochs, self.cfg.features)
        fv.t0 = bundle.t0
        return fv


def replay(pipeline: Pipeline, session: SessionData, chunk_seconds: float = 0.125) -> Iterable[EpochBundle]:
    """Online path: interleave chunks of every stream and events in time order."""
    r = pipeline.runner()
    cfg = pipeline.cfg
    pieces = []
    for s in cfg.streams:
        c = session.streams[s.name]
        step = max(int(round(chunk_seconds * s.srate)), 1)
        for a in range(0, c.n_samples, step):
            pieces.append((float(c.t[min(a + step, c.n_samples) - 1]), 1, s.name,
                           SampleChunk(s.name, c.t[a:a + step], c.values[a:a + step])))
    for i, ev in enumerate(session.events):
        pieces.append((ev.t, 0, f"event{i:09d}", ev))
    pieces.sort(key=lambda p: (p[0], p[1], p[2]))
    for _, kind, _, item in pieces:
        if kind == 0:
            r.push_event(item)
        else:
            r.push(item)
            yield from r.pop()
    yield from r.close()


# --------------------------------------------------------------------------- labels

def discretize_perclos(values, drowsy_threshold: float = DEFAULT_DROWSY_THRESHOLD) -> list[str]:
    """``drowsy`` iff value >= threshold (inclusive), else ``awake``."""
    v = np.asarray(values, dtype=float)
    return ["drowsy" if x >= drowsy_threshold else "awake" for x in v.ravel()]


def ground_truth_perclos(session: SessionData, stream: str, t0: float, duration: float,
                         closed_threshold: float = DEFAULT_CLOSED_THRESHOLD) -> float:
    """PERCLOS of the native eye-tracking samples in ``[t0, t0 + duration)``."""
    c = session.streams[stream]
    m = (c.t >= t0 - 1e-9) & (c.t < t0 + duration - 1e-9)
    if not np.any(m):
        raise PipelineError(f"no {stream!r} samples in [{t0}, {t0 + duration})")
    return perclos(c.values[m, 0], closed_threshold)


def epoch_label(bundle: EpochBundle, session: SessionData, target: TargetSpec, plan: PipelinePlan,
                blocks: Sequence[Block] | None = None) -> Any:
    """Raw ground-truth label of a bundle for ``target``; ``None`` when the epoch is not used."""
    st = plan.epoch_stage
    if target.epochs is not None:
        if bundle.event is None or bundle.event.payload.get("label") != target.epochs:
            return None
    if target.source == "subject":
        raw = session.subject
        return target.classes.get(raw) if target.classes else raw
    if target.source == "stimulus":
        raw = None if bundle.event is None else bundle.event.payload.get("label")
        return target.classes.get(str(raw)) if target.classes else raw
    if target.source == "block":
        if blocks is None:
            blocks = blocks_from_events(session.events)
        dur = st.params["duration"] if st.stage == "epoch_fixed" else st.params["pre"] + st.params["post"]
        mid = bundle.t0 + dur / 2
        blk = next((b for b in blocks if b.start <= mid < b.end), None)
        if blk is None:
            return None
        return target.classes.get(blk.label) if target.classes else blk.label
    if target.source == "perclos":
        dur = st.params["duration"] if st.stage == "epoch_fixed" else st.params["pre"] + st.params["post"]
        t0 = bundle.epochs[target.stream].t0 if target.stream in bundle.epochs else bundle.t0
        return ground_truth_perclos(session, target.stream, t0, dur)
    raise PipelineError(f"unknown target source {target.source!r}")


def classification_label(raw, target: TargetSpec) -> Any:
    if target.source == "perclos":
        thr = DEFAULT_DROWSY_THRESHOLD if target.threshold is None else target.threshold
        return discretize_perclos([raw], thr)[0]
    return raw
