import csv
import hashlib
import json

import pytest

from neuropipe.acquisition.session import read_events_csv
from neuropipe.cli import main
from neuropipe.config import builtin_scenario_text, load_scenario, parse_scenario
from neuropipe.detection import f1_score
from neuropipe.harness import StageError, cmd_report, cmd_run, cmd_synth, cmd_train
from neuropipe.synth import simulate_session, uc4_script


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.csv")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def uc1_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("uc1")
    cmd_synth("uc1", base / "train_data", subjects=1, seed=0, duration=240)
    cmd_synth("uc1", base / "live_data", subjects=1, seed=1, duration=60)
    res = cmd_train("uc1", [base / "train_data"], base / "train", algorithms=["knn", "rforest"], seed=0)
    return base, res


def test_synth_is_reproducible(tmp_path):
    cmd_synth("uc3_classification", tmp_path / "a", seed=5, duration=30)
    cmd_synth("uc3_classification", tmp_path / "b", seed=5, duration=30)
    cmd_synth("uc3_classification", tmp_path / "c", seed=6, duration=30)
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")


def test_cli_synth_usecase(tmp_path, capsys):
    assert main(["synth", "--usecase", "UC1", "--duration", "40", "--seed", "2", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "s01_day1" / "eeg.csv").is_file()
    assert (tmp_path / "manifest.json").is_file()
    assert main(["synth", "--usecase", "UC1", "--scenario", "uc1", "--out", str(tmp_path)]) == 2
    assert "give --usecase or --scenario" in capsys.readouterr().err


def test_train_outputs(uc1_run):
    base, res = uc1_run
    out = base / "train"
    assert [p.name for p in res.model_paths] == ["model.uc1.s01.json"]
    with open(out / "metrics.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    assert reader.fieldnames == ["subject", "algorithm", "task", "metric", "value"]
    assert {r["task"] for r in rows} == {"classification/distracted", "classification/distraction_kind"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert "metrics.csv" in json.dumps(manifest)
    assert cmd_report(out).ok


def test_train_is_reproducible(uc1_run, tmp_path):
    base, res = uc1_run
    again = cmd_train("uc1", [base / "train_data"], tmp_path, algorithms=["knn", "rforest"], seed=0)
    assert again.metrics == res.metrics
    assert (tmp_path / "predictions.csv").read_bytes() == (base / "train" / "predictions.csv").read_bytes()


def test_unknown_algorithm_lists_valid_ids(uc1_run, capsys):
    base, _ = uc1_run
    with pytest.raises(StageError, match="valid: knn"):
        cmd_train("uc1", [base / "train_data"], base / "bad", algorithms=["svm"])
    code = main(["train", "--scenario", "uc1", "--source", str(base / "train_data"), "--out", str(base / "bad"),
                 "--algorithms", "svm"])
    assert code == 2
    assert "detection.train" in capsys.readouterr().err


def test_online_run_emits_one_event_per_epoch(uc1_run):
    base, _ = uc1_run
    res = cmd_run("uc1", base / "train", base / "live", sessions=[base / "live_data"])
    assert res.epochs == 60
    assert len(res.events) == 60 * 4                 # two targets times two algorithms
    assert [e.t for e in res.events[::4]] == [float(i) for i in range(60)]
    assert res.rtf > 1
    lines = (base / "live" / "detections.csv").read_text().splitlines()
    assert len(lines) == 1 + 240
    assert (base / "live" / "actions.csv").read_text().startswith("t,tag,payload")


def test_report_detects_tampering(uc1_run, tmp_path, capsys):
    base, _ = uc1_run
    run = tmp_path / "copy"
    run.mkdir()
    for p in (base / "train").iterdir():
        if p.is_file():
            (run / p.name).write_bytes(p.read_bytes())
    assert main(["report", str(run)]) == 0
    rows = (run / "metrics.csv").read_text().splitlines()
    head, first = rows[0], rows[1].split(",")
    first[-1] = "%.6f" % (float(first[-1]) - 0.05)
    (run / "metrics.csv").write_text("\n".join([head, ",".join(first)] + rows[2:]) + "\n")
    assert main(["report", str(run)]) == 3
    assert "MISMATCH" in capsys.readouterr().out
    (run / "predictions.csv").unlink()
    assert main(["report", str(run)]) == 2


def test_lineage_mismatch_is_refused(uc1_run, tmp_path):
    base, _ = uc1_run
    text = builtin_scenario_text("uc1").replace("{stage: notch, freq: 50}", "{stage: notch, freq: 50, q: 20}")
    changed = parse_scenario(text)
    with pytest.raises(StageError, match="lineage hash mismatch"):
        cmd_run(changed, base / "train", tmp_path, sessions=[base / "live_data"])
    path = tmp_path / "changed.scenario.yaml"
    path.write_text(text)
    code = main(["run", "--scenario", str(path), "--models", str(base / "train"),
                 "--source", str(base / "live_data"), "--out", str(tmp_path / "r")])
    assert code == 2
    with pytest.raises(StageError, match="not 'uc2'"):
        cmd_run("uc2", base / "train", tmp_path, sessions=[base / "live_data"])


def test_missing_models_and_sessions(tmp_path, uc1_run):
    base, _ = uc1_run
    with pytest.raises(StageError, match="no model files"):
        cmd_run("uc1", tmp_path, tmp_path / "o", sessions=[base / "live_data"])
    with pytest.raises(StageError):
        cmd_train("uc1", [tmp_path / "nothing"], tmp_path / "o")


def test_usage_errors_exit_1(capsys):
    assert main([]) == 1
    assert main(["synth", "--usecase", "UC9", "--out", "x"]) == 1
    assert main(["--help"]) == 0
    capsys.readouterr()


def test_missing_scenario_is_a_stage_error(monkeypatch, tmp_path, capsys):
    monkeypatch.delenv("NEUROPIPE_SCENARIO", raising=False)
    assert main(["synth", "--out", str(tmp_path)]) == 2
    assert "scenario-config.load_scenario" in capsys.readouterr().err


def test_inspect_filter_json(capsys):
    assert main(["inspect-filter", "--kind", "notch", "--freq", "50", "--srate", "250"]) == 0
    (design,) = json.loads(capsys.readouterr().out)
    assert design["kind"] == "notch" and design["stable"]
    assert main(["inspect-filter", "--scenario", "uc1"]) == 0
    designs = json.loads(capsys.readouterr().out)
    assert len(designs) == 2 and all(d["stream"] == "eeg" for d in designs)


def test_separable_uc4_replay_matches_stimulus_log(tmp_path):
    cfg = load_scenario("uc4")
    strong = dict(subject="s01", trait_seed=1, erp_amplitude=40.0)
    simulate_session(uc4_script(n_tests=2, seed=11, **strong), cfg, tmp_path / "train")
    live = simulate_session(uc4_script(n_tests=1, seed=12, day=2, **strong), cfg, tmp_path / "live")
    cmd_train(cfg, [tmp_path / "train"], tmp_path / "models", algorithms=["rforest"], targets=["p300"])
    res = cmd_run(cfg, tmp_path / "models", tmp_path / "run", sessions=[tmp_path / "live"])
    log = {round(e.t, 3): e.payload["label"] for e in read_events_csv(live.events_path) if e.tag == "stimulus"}
    assert len(res.events) == len(log) == 200
    pred = [e.label for e in res.events]
    truth = [log[round(e.t, 3)] for e in res.events]
    assert f1_score(pred, truth, "binary", positive="target") >= 0.9
