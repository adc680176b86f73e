"""Command-line entry point: ``neuropipe <command> [options]``.

Exit status is 0 when every stage succeeds, 2 on a stage error (the message
names the module and operation) and 1 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import NeuropipeError
from .config import BUILTIN, load_scenario, resolve_pipeline, validate_scenario
from .dsp.filters import design_bandpass, design_notch
from .harness import (StageError, cmd_evaluate, cmd_record, cmd_report, cmd_run, cmd_synth, cmd_train, load_sessions,
                      serve_session, stage)

log = logging.getLogger("neuropipe")

# built-in scenario used by ``synth --usecase``; both UC3 scenarios share one session layout
USECASE_SCENARIO = {"UC1": "uc1", "UC2": "uc2", "UC3": "uc3_classification", "UC4": "uc4"}


def _setup_logging() -> None:
    level = os.environ.get("NEUROPIPE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _subjects(text: str | None):
    if text is None:
        return 1
    return int(text) if text.isdigit() else [s for s in text.split(",") if s]


def _list(text: str | None):
    return None if text is None else [s for s in text.split(",") if s]


def _scenario(args):
    with stage("scenario-config", "load_scenario"):
        cfg = load_scenario(args.scenario)
        rep = validate_scenario(cfg)
    for w in rep.warnings:
        log.warning("%s: %s", w.path, w.message)
    if not rep.ok:
        raise StageError("scenario-config", "validate_scenario", "; ".join(f"{e.path}: {e.message}" for e in rep.errors))
    return cfg


def run_synth(args) -> int:
    if args.usecase is not None:
        if args.scenario is not None:
            raise StageError("cli-harness", "synth", "give --usecase or --scenario, not both")
        args.scenario = USECASE_SCENARIO[args.usecase.upper()]
    cfg = _scenario(args)
    dirs = cmd_synth(cfg, args.out, subjects=_subjects(args.subjects), seed=args.seed, duration=args.duration,
                     effect=args.effect, days=args.days, tests=args.tests)
    for d in dirs:
        print(d)
    return 0


def run_train(args) -> int:
    cfg = _scenario(args)
    split = {"kfold": args.kfold} if args.kfold else None
    res = cmd_train(cfg, args.source, args.out, algorithms=_list(args.algorithms), seed=args.seed,
                    targets=_list(args.targets), split=split)
    print(cmd_report(res.out).text)
    return 0


def run_evaluate(args) -> int:
    cfg = _scenario(args)
    res = cmd_evaluate(cfg, args.models, args.source, args.out, seed=args.seed)
    for r in res["metrics"]:
        print(f"{r['subject']},{r['algorithm']},{r['task']},{r['metric']},{r['value']:.6f}")
    return 0


def run_run(args) -> int:
    cfg = _scenario(args)
    subj = None if args.subjects is None else args.subjects
    if args.source == "socket":
        res = cmd_run(cfg, args.models, args.out, source="socket", subject=subj, sinks=args.sink.split(","),
                      seed=args.seed, timeout=args.timeout)
    else:
        res = cmd_run(cfg, args.models, args.out, source="replay", sessions=args.source, subject=subj,
                      sinks=args.sink.split(","), seed=args.seed)
    print(f"epochs {res.epochs}, detections {len(res.events)}, actions {len(res.actions)}")
    print(f"real-time factor {res.rtf:.1f}, latency p50 {res.latency_ms['p50']:.2f} ms, "
          f"p95 {res.latency_ms['p95']:.2f} ms")
    return 0


def run_report(args) -> int:
    rep = cmd_report(args.run_dir)
    print(rep.text)
    return 0 if rep.ok else 3


def run_record(args) -> int:
    cfg = _scenario(args)
    print(cmd_record(cfg, args.out, session=args.session, timeout=args.timeout))
    return 0


def run_replay(args) -> int:
    cfg = _scenario(args)
    sess = load_sessions([args.source])
    if len(sess) != 1:
        raise StageError("cli-harness", "replay", "give exactly one session directory")
    ports = None if args.ports is None else [int(p) for p in args.ports.split(",")]
    outlets = serve_session(cfg, sess[0], host=args.host, ports=ports, speed=args.speed,
                            wait_clients=args.wait, timeout=args.timeout)
    for o in outlets:
        print(f"{o.meta.name} {o.address}", flush=True)
    outlets[0].thread.join()
    return 0


def run_inspect_filter(args) -> int:
    with stage("dsp-processing", "design_filter"):
        if args.scenario and args.kind is None:
            cfg = load_scenario(args.scenario)
            plan = resolve_pipeline(cfg)
            out = []
            for st in plan.stages:
                if st.stage not in ("notch", "bandpass"):
                    continue
                for s in st.streams:
                    rate = st.rates_in[s]
                    if st.stage == "notch":
                        c = design_notch(st.params["freq"], rate, st.params.get("q", 30.0))
                    else:
                        c = design_bandpass(st.params["low"], st.params["high"], st.params.get("order", 4), rate)
                    out.append({"stream": s, **c.to_dict()})
        elif args.kind == "notch":
            out = [design_notch(args.freq, args.srate, args.q).to_dict()]
        elif args.kind == "bandpass":
            out = [design_bandpass(args.low, args.high, args.order, args.srate).to_dict()]
        else:
            raise StageError("dsp-processing", "design_filter", "give --scenario or --kind notch|bandpass")
    print(json.dumps(out, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neuropipe", description="Multi-sensor biosignal pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--scenario", default=None,
                        help=f"scenario file or built-in name ({', '.join(BUILTIN)}); default from NEUROPIPE_SCENARIO")
        sp.add_argument("--seed", type=int, default=0)
        if out:
            sp.add_argument("--out", required=True, help="run directory")

    sp = sub.add_parser("synth", help="generate synthetic sessions")
    common(sp)
    sp.add_argument("--usecase", type=str.upper, choices=tuple(USECASE_SCENARIO), default=None,
                    help="use the built-in scenario of a use case instead of --scenario")
    sp.add_argument("--subjects", default="1", help="count or comma-separated ids")
    sp.add_argument("--duration", type=float, default=None, help="session length in s (UC4: sets the test count)")
    sp.add_argument("--effect", default="high", help="none, mid, high or a number")
    sp.add_argument("--days", type=int, default=None)
    sp.add_argument("--tests", type=int, default=None, help="UC4 tests per day")
    sp.set_defaults(func=run_synth)

    sp = sub.add_parser("record", help="capture socket streams into a session directory")
    common(sp)
    sp.add_argument("--session", default="recording")
    sp.add_argument("--timeout", type=float, default=5.0)
    sp.set_defaults(func=run_record)

    sp = sub.add_parser("replay", help="serve a recorded session over NBS1 sockets")
    common(sp, out=False)
    sp.add_argument("--source", required=True, help="session directory")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--ports", default=None, help="comma-separated port per stream (default: ephemeral)")
    sp.add_argument("--speed", type=float, default=1.0, help="1 = real time, 0 = as fast as possible")
    sp.add_argument("--wait", type=int, default=1, help="clients to wait for before streaming")
    sp.add_argument("--timeout", type=float, default=60.0)
    sp.set_defaults(func=run_replay)

    sp = sub.add_parser("train", help="train and evaluate models on session directories")
    common(sp)
    sp.add_argument("--source", nargs="+", required=True, help="session directories or their parent")
    sp.add_argument("--algorithms", default=None, help="comma-separated algorithm ids")
    sp.add_argument("--targets", default=None, help="comma-separated target names")
    sp.add_argument("--kfold", type=int, default=None, help="k-fold instead of the scenario's split")
    sp.set_defaults(func=run_train)

    sp = sub.add_parser("evaluate", help="score trained models on other sessions")
    common(sp)
    sp.add_argument("--models", required=True, help="training run directory or model file")
    sp.add_argument("--source", nargs="+", required=True)
    sp.set_defaults(func=run_evaluate)

    sp = sub.add_parser("run", help="online inference with action output")
    common(sp)
    sp.add_argument("--models", required=True)
    sp.add_argument("--source", required=True, help="session directory/parent to replay, or 'socket'")
    sp.add_argument("--subjects", default=None, help="model-set subject to use")
    sp.add_argument("--sink", default="csv", help="comma-separated: csv, stdout")
    sp.add_argument("--timeout", type=float, default=5.0)
    sp.set_defaults(func=run_run)

    sp = sub.add_parser("report", help="recompute metrics of a training run")
    sp.add_argument("run_dir")
    sp.set_defaults(func=run_report)

    sp = sub.add_parser("inspect-filter", help="print filter designs as JSON")
    sp.add_argument("--scenario", default=None)
    sp.add_argument("--kind", choices=("notch", "bandpass"), default=None)
    sp.add_argument("--freq", type=float, default=50.0)
    sp.add_argument("--q", type=float, default=30.0)
    sp.add_argument("--low", type=float, default=1.0)
    sp.add_argument("--high", type=float, default=30.0)
    sp.add_argument("--order", type=int, default=4)
    sp.add_argument("--srate", type=float, default=250.0)
    sp.set_defaults(func=run_inspect_filter)
    return p


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:     # argparse uses 2, which is reserved for stage errors here
        return 0 if exc.code in (0, None) else 1
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NeuropipeError as exc:
        print(f"error: cli-harness.{args.command}: {exc}", file=sys.stderr)
        return 2
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
