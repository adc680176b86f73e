"""End-to-end acceptance run: one test and one PASS/FAIL line per criterion."""
import csv
import time
from statistics import mean

import numpy as np
import pytest
from scipy.signal import sawtooth

from conftest import ACCEPTANCE_LINES, tone
from dsp_oracles import (blink_removal_stats, butter_bandpass_magnitude, match_sources, notch_magnitude,
                         steady_state_gain)
from test_protocol import random_message
from neuropipe.acquisition.protocol import decode_frame, encode_frame
from neuropipe.acquisition.session import read_session_csv, write_session_csv
from neuropipe.config import BUILTIN, CLASSIFIERS, builtin_scenario_text, load_scenario, parse_scenario, render_scenario
from neuropipe.detection import Dataset, f1_score, split_indices, train_classifier
from neuropipe.dsp.filters import apply_filter, design_bandpass, design_notch, freq_response
from neuropipe.dsp.ica import fast_ica
from neuropipe.features.spectral import band_power, spectral_entropy, welch_psd
from neuropipe.features.temporal import hjorth, perclos
from neuropipe.harness import (batch_predictions, cmd_run, cmd_synth, cmd_train, load_model_sets, load_sessions,
                               online_predictions)
from neuropipe.synth import synthesize, uc4_script

SEEDS = range(5)


class Criterion:
    """Collects named checks and reports them as a single line."""

    def __init__(self, number, title, budget=None):
        self.number, self.title, self.budget = number, title, budget
        self.failed = []
        self.notes = []
        self.t0 = time.perf_counter()

    def check(self, ok, what):
        self.notes.append(what)
        if not ok:
            self.failed.append(what)

    def finish(self):
        took = time.perf_counter() - self.t0
        if self.budget is not None:
            self.check(took < self.budget, f"runtime {took:.1f}s < {self.budget}s")
        status = "PASS" if not self.failed else "FAIL"
        if self.failed:
            detail = "; ".join(self.failed)
        elif len(self.notes) <= 4:
            detail = "; ".join(self.notes)
        else:
            detail = f"{len(self.notes)} checks, {took:.1f}s"
        line = f"criterion {self.number} {status}: {self.title} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        for note in self.notes:
            print("    " + note)
        assert not self.failed, line


def test_criterion_1_dsp_filters():
    c = Criterion(1, "notch and band-pass match their analytic responses", budget=1.0)
    notch = design_notch(50, 250, 30)
    bp = design_bandpass(1, 30, 4, 250)
    run = lambda coef: (lambda x: apply_filter(coef, x, mode="causal"))
    g50 = steady_state_gain(run(notch), 50, 250)
    g10 = steady_state_gain(run(notch), 10, 250)
    c.check(20 * np.log10(g50) <= -30, f"notch 50 Hz {20 * np.log10(g50):.1f} dB <= -30")
    c.check(abs(20 * np.log10(g10)) <= 1, f"notch 10 Hz {20 * np.log10(g10):.2f} dB within 1")
    probes = np.linspace(2, 120, 20)
    # probes close to the notch centre are compared where the reference is above -60 dB
    ref = notch_magnitude(probes, 50, 250, 30)
    got = np.abs(freq_response(notch, probes))
    keep = ref > 1e-3
    err = np.max(np.abs(20 * np.log10(got[keep] / ref[keep])))
    c.check(err <= 0.5, f"notch analytic error {err:.3g} dB at {keep.sum()} probes")
    ref = butter_bandpass_magnitude(probes, 1, 30, 4, 250)
    got = np.abs(freq_response(bp, probes))
    keep = ref > 1e-3
    err = np.max(np.abs(20 * np.log10(got[keep] / ref[keep])))
    c.check(err <= 0.5, f"band-pass analytic error {err:.3g} dB")
    b50 = steady_state_gain(run(bp), 50, 250)
    c.check(20 * np.log10(b50) <= -20, f"band-pass 50 Hz {20 * np.log10(b50):.1f} dB <= -20")
    c.finish()


def test_criterion_2_parseval():
    c = Criterion(2, "Welch PSD integral equals signal variance", budget=5.0)
    total = lambda psd: band_power(psd, (0, psd.freqs[-1] + 1))[0]
    for f, fs, amp in [(10, 250, 1.0), (6, 125, 3.0), (20, 250, 0.5)]:
        x = tone(f, fs, fs * 20, amp)
        v = total(welch_psd(x, fs))
        c.check(abs(v / np.var(x) - 1) <= 0.02, f"tone {f} Hz ratio {v / np.var(x):.4f}")
    for s in range(20):
        x = np.random.default_rng(s).standard_normal(5000)
        v = total(welch_psd(x, 250))
        c.check(abs(v / np.var(x) - 1) <= 0.05, f"white seed {s} ratio {v / np.var(x):.4f}")
    c.finish()


def random_sources(rng, k, n=5000):
    t = np.linspace(0, 10, n)
    pool = [lambda: np.sin(2 * np.pi * rng.uniform(0.5, 3) * t + rng.uniform(0, 6)),
            lambda: sawtooth(2 * np.pi * rng.uniform(0.5, 3) * t),
            lambda: np.sign(np.sin(2 * np.pi * rng.uniform(0.3, 2) * t)),
            lambda: rng.laplace(size=n),
            lambda: rng.uniform(-1, 1, n)]
    picks = rng.choice(len(pool), k, replace=False)
    return np.column_stack([pool[i]() for i in picks])


def test_criterion_3_ica():
    c = Criterion(3, "ICA source recovery and blink removal", budget=60.0)
    rng = np.random.default_rng(2024)
    good = 0
    for case in range(50):
        k = 2 + case % 2
        s = random_sources(rng, k)
        a = rng.normal(size=(k, k))
        while abs(np.linalg.det(a)) < 0.2:
            a = rng.normal(size=(k, k))
        x = s @ a.T
        est = fast_ica(x, seed=case).sources(x)
        good += bool(np.all(match_sources(s, est) >= 0.95))
    c.check(good >= 48, f"{good}/50 mixtures recovered")
    for seed in (0, 1):
        ratio, change = blink_removal_stats(seed)
        c.check(ratio <= 0.3, f"seed {seed} blink RMS drop {100 * (1 - ratio):.0f}% >= 70%")
        c.check(change <= 0.1, f"seed {seed} clean RMS change {100 * change:.1f}% <= 10%")
    c.finish()


def test_criterion_4_feature_oracles():
    c = Criterion(4, "PERCLOS, Hjorth and entropy oracles", budget=10.0)
    c.check(perclos([1, 1, 0.1, 0.1, 1], 0.2) == 0.4, "perclos mixed = 0.4")
    c.check(perclos(np.ones(20), 0.2) == 0.0, "perclos open = 0")
    c.check(perclos(np.full(20, 0.1), 0.2) == 1.0, "perclos closed = 1")
    for f, fs in [(5, 250), (10, 250), (12, 60), (3, 32), (30, 125)]:
        mob = hjorth(tone(f, fs, fs * 20))[1][0]
        want = 2 * np.sin(np.pi * f / fs)
        c.check(abs(mob / want - 1) <= 0.01, f"mobility {f}/{fs} Hz rel err {abs(mob / want - 1):.2e}")
    rng = np.random.default_rng(7)
    inside = 0
    for _ in range(100):
        n = int(rng.integers(64, 2048))
        x = rng.standard_normal(n) * rng.uniform(0, 3, n) + rng.uniform(-1, 1) * tone(rng.uniform(1, 100), 250, n)
        h = spectral_entropy(welch_psd(x, 250))[0]
        inside += 0.0 <= h <= 1.0
    c.check(inside == 100, f"entropy in [0, 1] for {inside}/100 signals")
    c.finish()


def blobs(seed, k=3, d=4, n=300, sep=10.0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % k
    centers = np.zeros((k, d))
    centers[np.arange(k), np.arange(k) % d] = sep * np.arange(k)
    return Dataset.from_labels(centers[y] + rng.standard_normal((n, d)), [f"c{v}" for v in y],
                               [f"f{j}" for j in range(d)])


def test_criterion_5_classifier_sanity():
    c = Criterion(5, "classifier sanity on separated blobs", budget=60.0)
    ds = blobs(0)
    tr, te = split_indices(ds, 0.8, seed=0)
    truth = [ds.class_names[i] for i in ds.y[te]]
    probe = np.random.default_rng(1).normal(scale=8, size=(200, 4))
    for alg in CLASSIFIERS:
        m = train_classifier(alg, None, ds.subset(tr), seed=3)
        score = f1_score(m.predict_matrix(ds.x[te])[0], truth)
        c.check(score >= 0.99, f"{alg} held-out F1 {score:.3f}")
        again = train_classifier(alg, None, ds.subset(tr), seed=3)
        a, b = m.predict_matrix(probe), again.predict_matrix(probe)
        c.check(a[0] == b[0] and np.array_equal(a[1], b[1]), f"{alg} deterministic")
    rng = np.random.default_rng(5)
    noisy = Dataset.from_labels(rng.normal(size=(200, 6)), rng.choice(["a", "b", "c"], 200).tolist(),
                                [f"f{j}" for j in range(6)])
    knn = train_classifier("knn", {"k": 1}, noisy)
    score = f1_score(knn.predict_matrix(noisy.x)[0], [noisy.class_names[i] for i in noisy.y])
    c.check(score == 1.0, f"knn k=1 training F1 {score}")
    c.finish()


# Scaled protocols: UC1 and UC2 sessions of 480 s, UC4 with ten subjects, two tests of 200 stimuli, one day.
# UC3 epochs last 8 s, so its session runs 2400 s to hold out 60 epochs per seed.
UC_RUNS = {
    "uc1": dict(scenario="uc1", synth=dict(duration=480), targets=None,
                checks=[("distracted", "f1_binary", ">=", 0.90), ("distraction_kind", "f1_macro", ">=", 0.80)]),
    "uc2": dict(scenario="uc2", synth=dict(duration=480), targets=["emotions2", "emotions4"],
                checks=[("emotions2", "f1_binary", ">=", 0.95), ("emotions4", "f1_macro", ">=", 0.75)]),
    "uc3": dict(scenario="uc3_classification", synth=dict(duration=2400), targets=None,
                checks=[("drowsy", "f1_binary", ">=", 0.85)]),
    "uc4": dict(scenario="uc4", synth=dict(subjects=10, tests=2, days=1), targets=["auth_binary", "auth_multiclass"],
                checks=[("auth_binary", "f1_binary", ">=", 0.90), ("auth_multiclass", "f1_macro", ">=", 0.90)]),
}
ALGORITHM = "rforest"


def permutation_baseline(pred_path, target, metric, positive, n_perm=200, seed=0):
    """Mean F1 when the held-out predictions are shuffled against the truth, averaged over subjects."""
    rows = {}
    with open(pred_path, newline="") as fh:
        for r in csv.DictReader(fh):
            if r["target"] == target and r["algorithm"] == ALGORITHM:
                rows.setdefault(r["subject"], []).append((r["prediction"], r["truth"]))
    rng = np.random.default_rng(seed)
    per_subject = []
    for pairs in rows.values():
        pred, truth = map(np.array, zip(*pairs))
        if metric == "f1_binary":
            score = lambda p: f1_score(p, truth, "binary", positive=positive)
        else:
            score = lambda p: f1_score(p, truth, "macro")
        per_subject.append(mean(score(rng.permutation(pred)) for _ in range(n_perm)))
    return float(np.mean(per_subject))


def harness_run(tmp, uc, seed, effect):
    spec = UC_RUNS[uc]
    data = tmp / f"{uc}_{effect}_{seed}"
    cmd_synth(spec["scenario"], data / "sessions", seed=seed, effect=effect, **spec["synth"])
    res = cmd_train(spec["scenario"], [data / "sessions"], data / "train", algorithms=[ALGORITHM], seed=seed,
                    targets=spec["targets"])
    out = {}
    for target, metric, _, _ in spec["checks"]:
        out[(target, metric)] = res.metric(target, ALGORITHM, metric)
        positive = "legitimate" if target == "auth_binary" else next(
            (t.positive for t in load_scenario(spec["scenario"]).detection.targets if t.name == target), None)
        out[(target, metric, "chance")] = permutation_baseline(data / "train" / "predictions.csv", target, metric,
                                                               positive, seed=seed)
    if uc == "uc3" and effect == "high":
        reg = cmd_train("uc3_regression", [data / "sessions"], data / "train_reg", algorithms=["rforest_reg"],
                        seed=seed)
        out[("perclos", "rmse")] = reg.metric("perclos", "rforest_reg", "rmse")
    return out


def test_criterion_6_use_case_harnesses(tmp_path):
    c = Criterion(6, "use-case harnesses, seeds 0-4, plus effect 0 at chance", budget=600.0)
    for uc, spec in UC_RUNS.items():
        high = [harness_run(tmp_path, uc, s, "high") for s in SEEDS]
        null = [harness_run(tmp_path, uc, s, 0) for s in SEEDS]
        for target, metric, _, floor in spec["checks"]:
            vals = [r[(target, metric)] for r in high]
            c.check(min(vals) >= floor, f"{uc} {target} {metric} min over seeds {min(vals):.3f} >= {floor}")
            got = mean(r[(target, metric)] for r in null)
            chance = mean(r[(target, metric, "chance")] for r in null)
            c.check(abs(got - chance) <= 0.1, f"{uc} {target} effect 0 {metric} {got:.3f} vs chance {chance:.3f}")
        if uc == "uc3":
            worst = max(r[("perclos", "rmse")] for r in high)
            c.check(worst <= 0.10, f"uc3 perclos RMSE max over seeds {worst:.3f} <= 0.10")
    c.finish()


EQUIV_RUNS = {"uc1": dict(duration=240), "uc2": dict(duration=240), "uc3_classification": dict(duration=256),
              "uc3_regression": dict(duration=256), "uc4": dict(subjects=2, tests=1, days=1)}


def test_criterion_7_online_offline_equivalence(tmp_path):
    c = Criterion(7, "online replay equals batch processing", budget=120.0)
    for name, synth in EQUIV_RUNS.items():
        cfg = load_scenario(name)
        dirs = cmd_synth(cfg, tmp_path / name / "s", seed=3, **synth)
        cmd_train(cfg, dirs, tmp_path / name / "t", seed=3)
        sets = {ms.subject: ms for ms in load_model_sets(tmp_path / name / "t")}
        session = load_sessions(dirs[:1])[0]
        ms = sets.get(session.subject) or sets["all"]
        batch = [e.to_dict() for e in batch_predictions(cfg, ms, session)]
        online = [e.to_dict() for e in online_predictions(cfg, ms, session, chunk_seconds=0.1)]
        c.check(len(batch) > 0 and batch == online, f"{name}: {len(online)} online vs {len(batch)} batch events")
    c.finish()


def uc3_fast_scenario():
    """UC3 with the 16-channel board sampled at 250 Hz."""
    return parse_scenario(builtin_scenario_text("uc3_classification").replace("srate: 125", "srate: 250"))


def test_criterion_8_streaming_performance(tmp_path):
    c = Criterion(8, "16-channel 250 Hz UC3 replay in real time")
    cfg = uc3_fast_scenario()
    c.check(cfg.stream("eeg").srate == 250 and len(cfg.stream("eeg").channels) == 16, "eeg 16 ch at 250 Hz")
    train = cmd_synth(cfg, tmp_path / "train", seed=0, duration=256)
    live = cmd_synth(cfg, tmp_path / "live", seed=1, duration=320)
    cmd_train(cfg, train, tmp_path / "models", seed=0)
    res = cmd_run(cfg, tmp_path / "models", tmp_path / "run", sessions=live)
    c.check(res.rtf >= 5, f"real-time factor {res.rtf:.1f} >= 5")
    c.check(res.latency_ms["p95"] < 50, f"latency p95 {res.latency_ms['p95']:.2f} ms < 50")
    c.check(res.epochs > 0, f"{res.epochs} epochs")
    c.finish()


def test_criterion_9_protocol_and_persistence(tmp_path):
    c = Criterion(9, "protocol, session CSV and scenario round-trips")
    rng = np.random.default_rng(99)
    bad = 0
    for _ in range(10_000):
        m = random_message(rng)
        frame = encode_frame(m)
        back = decode_frame(frame)
        bad += not (back == m and encode_frame(back) == frame)
    c.check(bad == 0, f"{10_000 - bad}/10000 frames round-trip")
    cfg = load_scenario("uc4")
    sim = synthesize(uc4_script(n_tests=1, seed=4, subject="s01", trait_seed=4), cfg)
    rec = write_session_csv(tmp_path, "sess", sim.streams, sim.channels, sim.events, cfg.scenario_id)
    streams, events = read_session_csv(rec.directory)
    same = all(np.array_equal(streams[k].values, np.round(v.values, 6)) and np.array_equal(streams[k].t, np.round(v.t, 6))
               for k, v in sim.streams.items())
    c.check(same, "session samples equal at 6 decimals")
    c.check([e.tag for e in events] == [e.tag for e in sim.events], f"{len(events)} events preserved")
    for name in BUILTIN:
        cfg = load_scenario(name)
        c.check(parse_scenario(render_scenario(cfg)) == cfg, f"{name} parse/render round-trip")
    c.finish()


@pytest.fixture(autouse=True, scope="module")
def _acceptance_header():
    ACCEPTANCE_LINES.clear()
    yield
