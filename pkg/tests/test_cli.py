import json

import numpy as np
import pytest

from motion_ae.cli import main
from motion_ae.evaluation import GroundTruthClip
from motion_ae.io import Dataset, load_checkpoint, save_dataset, save_scores
from motion_ae.pipeline import BoundingBox, ClipScore, MotionClip
from motion_ae.stack import StackConfig, init_stack

SYNTH = {"n_objects": 4, "frames": 400, "segment_length": [40, 60]}
STACK = {"hidden_dims": [8, 4], "epochs_offline": 2}


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "synth.json").write_text(json.dumps(SYNTH))
    (tmp_path / "stack.json").write_text(json.dumps(STACK))
    return tmp_path


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture
def trained(workdir):
    assert run("synth", "--config", workdir / "synth.json", "--out", workdir / "ds.json") == 0
    assert run("train", workdir / "ds.json", "--config", workdir / "stack.json", "--out", workdir / "ck.json") == 0
    return workdir


# -- synth ---------------------------------------------------------------------


def test_synth_is_deterministic(workdir):
    for name in ("a.json", "b.json"):
        assert run("synth", "--config", workdir / "synth.json", "--seed", 5, "--out", workdir / name) == 0
    assert (workdir / "a.json").read_bytes() == (workdir / "b.json").read_bytes()


def test_synth_zero_anomalies(workdir):
    (workdir / "c.json").write_text(json.dumps({**SYNTH, "anomaly_fraction": 0.0}))
    assert run("synth", "--config", workdir / "c.json", "--out", workdir / "ds.json") == 0
    assert json.loads((workdir / "ds.json").read_text())["ground_truth"] == []


def test_synth_invalid_probabilities(workdir, capsys):
    (workdir / "c.json").write_text(json.dumps({"regime_mix": {"waiting": 0.9, "slow": 0.9}}))
    assert run("synth", "--config", workdir / "c.json", "--out", workdir / "ds.json") != 0
    assert "sum to 1" in capsys.readouterr().err
    assert not (workdir / "ds.json").exists()


def test_sectioned_config(workdir):
    (workdir / "all.json").write_text(json.dumps({"synth": SYNTH, "stack": STACK}))
    assert run("synth", "--config", workdir / "all.json", "--out", workdir / "ds.json") == 0
    assert run("train", workdir / "ds.json", "--config", workdir / "all.json", "--out", workdir / "ck.json") == 0
    assert load_checkpoint(workdir / "ck.json").config.hidden_dims == (8, 4)


# -- train ---------------------------------------------------------------------


def test_train_prints_per_layer_epoch_losses(trained, capsys):
    run("train", trained / "ds.json", "--config", trained / "stack.json", "--out", trained / "ck2.json")
    out = capsys.readouterr().out
    for layer in (0, 1):
        for epoch in (1, 2):
            assert f"layer {layer} epoch {epoch} loss" in out


def test_train_twice_identical(trained):
    run("train", trained / "ds.json", "--config", trained / "stack.json", "--out", trained / "ck2.json")
    assert (trained / "ck.json").read_bytes() == (trained / "ck2.json").read_bytes()


def test_train_zero_epochs_equals_init(trained):
    (trained / "z.json").write_text(json.dumps({**STACK, "epochs_offline": 0}))
    assert run("train", trained / "ds.json", "--config", trained / "z.json", "--seed", 3, "--out", trained / "z.ck") == 0
    model = load_checkpoint(trained / "z.ck")
    assert model.equals(init_stack(StackConfig(hidden_dims=(8, 4), epochs_offline=0, seed=3)))


def test_train_dim_mismatch_names_field(trained, capsys):
    (trained / "bad.json").write_text(json.dumps({**STACK, "input_dim": 32}))
    assert run("train", trained / "ds.json", "--config", trained / "bad.json", "--out", trained / "bad.ck") != 0
    assert "input_dim" in capsys.readouterr().err
    assert not (trained / "bad.ck").exists()


def test_train_missing_dataset(workdir, capsys):
    assert run("train", workdir / "nope.json", "--out", workdir / "ck.json") != 0
    assert "nope.json" in capsys.readouterr().err


def test_unknown_config_field(trained, capsys):
    (trained / "bad.json").write_text(json.dumps({"hidden_size": 3}))
    assert run("train", trained / "ds.json", "--config", trained / "bad.json", "--out", trained / "x") != 0
    assert "hidden_size" in capsys.readouterr().err


# -- summarize -----------------------------------------------------------------


def test_summarize_writes_clip_and_frame_scores(trained):
    assert run("summarize", trained / "ds.json", "--checkpoint", trained / "ck.json", "--out", trained / "s.json") == 0
    doc = json.loads((trained / "s.json").read_text())
    assert doc["clips"]
    assert all(0.0 <= c["score"] <= 1.0 and c["raw_error"] >= 0 for c in doc["clips"])
    assert set(doc["clips"][0]) >= {"object_id", "frames", "box_start", "box_end", "raw_error", "score"}
    assert len(doc["frame_scores"]) == 400
    run("summarize", trained / "ds.json", "--checkpoint", trained / "ck.json", "--out", trained / "s2.json")
    assert (trained / "s.json").read_bytes() == (trained / "s2.json").read_bytes()


def test_summarize_empty_dataset(trained):
    save_dataset(Dataset(64, 100, []), trained / "empty.json")
    assert run("summarize", trained / "empty.json", "--checkpoint", trained / "ck.json", "--out", trained / "s.json") == 0
    doc = json.loads((trained / "s.json").read_text())
    assert doc["clips"] == [] and doc["frame_scores"] == [0.0] * 100


def test_summarize_dim_mismatch(trained, capsys):
    rng = np.random.default_rng(0)
    from motion_ae.pipeline import Trajectory

    traj = Trajectory(0, 0, np.tile([0.0, 0.0, 5.0, 5.0], (10, 1)), rng.normal(size=(10, 8)))
    save_dataset(Dataset(8, 20, [traj]), trained / "d8.json")
    assert run("summarize", trained / "d8.json", "--checkpoint", trained / "ck.json", "--out", trained / "s.json") != 0
    assert "feature_dim" in capsys.readouterr().err
    assert not (trained / "s.json").exists()


# -- eval ----------------------------------------------------------------------


def _gt_dataset(path):
    boxes = [BoundingBox(0, 0, 10, 10), BoundingBox(50, 50, 10, 10)]
    gts = [GroundTruthClip(0, 9, boxes[0], boxes[0]), GroundTruthClip(20, 29, boxes[1], boxes[1])]
    save_dataset(Dataset(4, 40, [], gts), path)
    return gts


def _scores_file(path, items):
    scores = [
        ClipScore(MotionClip(k, s, e, b0, b1, np.zeros((3, 4))), raw_error=score, score=score)
        for k, (s, e, b0, b1, score) in enumerate(items)
    ]
    save_scores(scores, np.zeros(40), 40, path)


def test_eval_perfect_predictions(tmp_path, capsys):
    gts = _gt_dataset(tmp_path / "d.json")
    _scores_file(tmp_path / "s.json", [(g.start, g.end, g.b_start, g.b_end, 1.0) for g in gts])
    assert run("eval", tmp_path / "s.json", tmp_path / "d.json", "--out", tmp_path / "r.json") == 0
    printed = json.loads(capsys.readouterr().out)
    saved = json.loads((tmp_path / "r.json").read_text())
    assert printed == saved
    assert (saved["precision"], saved["recall"], saved["f_measure"], saved["ap"]) == (1.0, 1.0, 1.0, 1.0)


def test_eval_empty_predictions(tmp_path, capsys):
    _gt_dataset(tmp_path / "d.json")
    _scores_file(tmp_path / "s.json", [])
    assert run("eval", tmp_path / "s.json", tmp_path / "d.json") == 0
    rep = json.loads(capsys.readouterr().out)
    assert (rep["precision"], rep["recall"], rep["f_measure"]) == (0.0, 0.0, 0.0)


def test_eval_no_positives_reports_null_ap(tmp_path, capsys, caplog):
    _gt_dataset(tmp_path / "d.json")
    far = BoundingBox(200, 200, 5, 5)
    _scores_file(tmp_path / "s.json", [(35, 39, far, far, 0.9), (30, 33, far, far, 0.1)])
    assert run("eval", tmp_path / "s.json", tmp_path / "d.json") == 0
    captured = capsys.readouterr()
    rep = json.loads(captured.out)
    assert rep["ap"] is None and rep["precision"] == 0.0
    assert "AP reported as null" in caplog.text


def test_eval_inconsistent_frames(tmp_path, capsys):
    _gt_dataset(tmp_path / "d.json")
    b = BoundingBox(0, 0, 1, 1)
    scores = [ClipScore(MotionClip(0, 0, 5, b, b, np.zeros((3, 4))), 1.0, 1.0)]
    save_scores(scores, np.zeros(80), 80, tmp_path / "s.json")
    assert run("eval", tmp_path / "s.json", tmp_path / "d.json", "--out", tmp_path / "r.json") != 0
    assert "total_frames" in capsys.readouterr().err
    assert not (tmp_path / "r.json").exists()


# -- gradcheck -----------------------------------------------------------------


def test_gradcheck_small_passes(tmp_path, capsys):
    assert run("gradcheck", "--max-dim", 4, "--max-steps", 3, "--out", tmp_path / "g.json") == 0
    report = json.loads((tmp_path / "g.json").read_text())
    assert report["passed"] and len(report["cases"]) == 40
    assert {c["beta"] for c in report["cases"]} == {0.0, 0.1}
    assert "PASS" in capsys.readouterr().out


def test_gradcheck_detects_corrupted_gradient(capsys):
    assert run("gradcheck", "--max-dim", 4, "--corrupt-gradient") == 1
    assert "FAIL" in capsys.readouterr().out


def test_gradcheck_needs_twenty_seeds(capsys):
    assert run("gradcheck", "--seeds", 5) != 0
    assert "20" in capsys.readouterr().err
