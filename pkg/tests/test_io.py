import json
import os

import numpy as np
import pytest

from motion_ae.evaluation import GroundTruthClip
from motion_ae.io import (
    Dataset,
    FormatError,
    atomic_write_text,
    decode_array,
    encode_array,
    load_checkpoint,
    load_dataset,
    load_scores,
    predictions_from_scores,
    save_checkpoint,
    save_dataset,
    save_scores,
)
from motion_ae.pipeline import BoundingBox, Trajectory, frame_level_scores, summarize_stream
from motion_ae.stack import StackConfig, greedy_train, init_stack

CFG = StackConfig(input_dim=4, hidden_dims=(3, 2), epochs_offline=2, batch_offline=5)


def tiny_dataset():
    rng = np.random.default_rng(0)
    boxes = np.column_stack([np.arange(30.0), np.zeros(30), np.full(30, 10.0), np.full(30, 12.0)])
    trajs = [Trajectory(0, 5, boxes, rng.normal(size=(30, 4))), Trajectory(3, 40, boxes[:8], rng.normal(size=(8, 4)))]
    gts = [GroundTruthClip(5, 14, BoundingBox(0, 0, 10, 12), BoundingBox(9, 0, 10, 12), 0)]
    return Dataset(4, 60, trajs, gts, fps=25.0)


@pytest.mark.parametrize("shape", [(3, 4), (5,), (0, 2), ()])
def test_array_encoding_is_bitwise(shape):
    arr = np.random.default_rng(1).normal(size=shape)
    if arr.size:
        arr.flat[0] = np.nextafter(1.0, 2.0)
    back = decode_array(encode_array(arr))
    assert back.shape == arr.shape and back.tobytes() == arr.tobytes()


def test_array_payload_size_checked():
    rec = encode_array(np.zeros(3))
    rec["shape"] = [4]
    with pytest.raises(FormatError):
        decode_array(rec)


def test_checkpoint_round_trip_bitwise(tmp_path):
    model = greedy_train(init_stack(CFG), np.random.default_rng(2).normal(size=(12, 3, 4)))
    save_checkpoint(model, tmp_path / "ck.json")
    back = load_checkpoint(tmp_path / "ck.json")
    assert back.equals(model)
    assert back.config == model.config
    doc = json.loads((tmp_path / "ck.json").read_text())
    assert doc["seed"] == CFG.seed and doc["version"] == 1


def test_same_seed_gives_identical_checkpoint_bytes(tmp_path):
    data = np.random.default_rng(3).normal(size=(12, 3, 4))
    for name in ("a", "b"):
        save_checkpoint(greedy_train(init_stack(CFG), data), tmp_path / name)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_dataset_round_trip(tmp_path):
    ds = tiny_dataset()
    save_dataset(ds, tmp_path / "d.json")
    back = load_dataset(tmp_path / "d.json")
    assert back.fps == 25.0 and back.total_frames == 60
    assert [t.object_id for t in back.trajectories] == [0, 3]
    for a, b in zip(ds.trajectories, back.trajectories):
        assert a.boxes.tobytes() == b.boxes.tobytes()
        assert a.features.tobytes() == b.features.tobytes()
    assert back.ground_truth == ds.ground_truth


def test_dataset_validation(tmp_path):
    ds = tiny_dataset()
    ds.feature_dim = 5
    with pytest.raises(FormatError, match="feature_dim"):
        save_dataset(ds, tmp_path / "bad.json")
    assert not (tmp_path / "bad.json").exists()
    ds = tiny_dataset()
    ds.total_frames = 30
    with pytest.raises(FormatError, match="total_frames"):
        ds.validate()


def test_load_rejects_wrong_format(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "something-else", "version": 1}')
    with pytest.raises(FormatError):
        load_dataset(path)
    path.write_text("not json")
    with pytest.raises(FormatError):
        load_checkpoint(path)
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing.json")


def test_scores_round_trip_and_predictions(tmp_path):
    ds = tiny_dataset()
    scores, _ = summarize_stream(init_stack(CFG), ds.trajectories, ds.total_frames, chunk_size=20)
    frames = frame_level_scores([s.score for s in scores], [(s.clip.start, s.clip.end) for s in scores], 60)
    save_scores(scores, frames, 60, tmp_path / "s.json")
    doc = load_scores(tmp_path / "s.json")
    assert len(doc["clips"]) == len(scores)
    assert doc["frame_scores"] == [float(v) for v in frames]
    preds = predictions_from_scores(doc)
    assert [p.score for p in preds] == [s.score for s in scores]
    assert all(0.0 <= p.score <= 1.0 for p in preds)


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "out.json"
    with pytest.raises(TypeError):
        atomic_write_text(target, 12345)
    assert not target.exists()
    assert os.listdir(tmp_path) == []
    atomic_write_text(target, "ok\n")
    assert target.read_text() == "ok\n"
