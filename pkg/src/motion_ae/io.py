"""File formats: dataset, checkpoint, score and report documents.

Everything is UTF-8 JSON. Checkpoint arrays are base64 little-endian float64
with explicit shapes so a save/load round trip is bitwise exact. Writes go to
a temporary file that is renamed into place, so a failed command never leaves
a partial output behind.
"""

from __future__ import annotations

import base64
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .evaluation import GroundTruthClip, PredictedClip
from .model import AutoEncoderParams
from .pipeline import BoundingBox, ClipScore, Trajectory
from .stack import StackConfig, StackedModel

DATASET_FORMAT = "motion-ae-dataset"
CHECKPOINT_FORMAT = "motion-ae-checkpoint"
SCORES_FORMAT = "motion-ae-scores"
REPORT_FORMAT = "motion-ae-report"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """A file does not follow the expected document layout."""


@dataclass
class RegimeSegment:
    start: int
    end: int
    regime: str


@dataclass
class Dataset:
    feature_dim: int
    total_frames: int
    trajectories: list[Trajectory]
    ground_truth: list[GroundTruthClip] = field(default_factory=list)
    fps: Optional[float] = None
    regimes: dict[int, list[RegimeSegment]] = field(default_factory=dict)

    def validate(self) -> None:
        seen = set()
        for t in self.trajectories:
            if t.object_id in seen:
                raise FormatError(f"duplicate object_id {t.object_id}")
            seen.add(t.object_id)
            if t.feature_dim != self.feature_dim:
                raise FormatError(
                    f"trajectory {t.object_id}: feature_dim {t.feature_dim} != metadata feature_dim {self.feature_dim}"
                )
            if t.end_frame >= self.total_frames:
                raise FormatError(
                    f"trajectory {t.object_id}: frames [{t.start_frame}, {t.end_frame}] exceed total_frames {self.total_frames}"
                )
        for g in self.ground_truth:
            if g.start < 0 or g.end >= self.total_frames:
                raise FormatError(f"ground-truth clip [{g.start}, {g.end}] outside [0, {self.total_frames})")


def dumps(doc) -> str:
    return json.dumps(doc, indent=None, separators=(",", ":"), sort_keys=False, allow_nan=False) + "\n"


def _default_mode() -> int:
    umask = os.umask(0)
    os.umask(umask)
    return 0o666 & ~umask


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, _default_mode())  # mkstemp creates files as 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_json(path, expected_format: str):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != expected_format:
        raise FormatError(f"{path}: expected a '{expected_format}' document")
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {doc.get('version')!r}")
    return doc


# ---------------------------------------------------------------------------
# Dataset


def _box_list(b: BoundingBox) -> list[float]:
    return [float(v) for v in b.as_list()]


def dataset_to_doc(ds: Dataset) -> dict:
    meta = {"feature_dim": ds.feature_dim, "total_frames": ds.total_frames}
    if ds.fps is not None:
        meta["fps"] = ds.fps
    trajs = []
    for t in ds.trajectories:
        rec = {
            "object_id": int(t.object_id),
            "start_frame": int(t.start_frame),
            "boxes": t.boxes.tolist(),
            "features": t.features.tolist(),
        }
        if t.object_id in ds.regimes:
            rec["regimes"] = [
                {"start": s.start, "end": s.end, "regime": s.regime} for s in ds.regimes[t.object_id]
            ]
        trajs.append(rec)
    gts = []
    for g in ds.ground_truth:
        rec = {"frames": [g.start, g.end], "box_start": _box_list(g.b_start), "box_end": _box_list(g.b_end)}
        if g.object_id is not None:
            rec["object_id"] = g.object_id
        gts.append(rec)
    return {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "metadata": meta,
        "trajectories": trajs,
        "ground_truth": gts,
    }


def dataset_from_doc(doc: dict) -> Dataset:
    try:
        meta = doc["metadata"]
        feature_dim = int(meta["feature_dim"])
        total_frames = int(meta["total_frames"])
        trajs, regimes = [], {}
        for rec in doc.get("trajectories", []):
            feats = np.asarray(rec["features"], dtype=np.float64)
            if feats.size == 0:
                feats = feats.reshape(0, feature_dim)
            t = Trajectory(int(rec["object_id"]), int(rec["start_frame"]), rec["boxes"], feats)
            trajs.append(t)
            if "regimes" in rec:
                regimes[t.object_id] = [
                    RegimeSegment(int(r["start"]), int(r["end"]), str(r["regime"])) for r in rec["regimes"]
                ]
        gts = [
            GroundTruthClip(
                int(rec["frames"][0]), int(rec["frames"][1]),
                BoundingBox.from_seq(rec["box_start"]), BoundingBox.from_seq(rec["box_end"]),
                rec.get("object_id"),
            )
            for rec in doc.get("ground_truth", [])
        ]
    except (KeyError, TypeError, IndexError) as exc:
        raise FormatError(f"malformed dataset document: missing or invalid field {exc}") from exc
    ds = Dataset(feature_dim, total_frames, trajs, gts, meta.get("fps"), regimes)
    ds.validate()
    return ds


def save_dataset(ds: Dataset, path) -> None:
    ds.validate()
    atomic_write_text(path, dumps(dataset_to_doc(ds)))


def load_dataset(path) -> Dataset:
    return dataset_from_doc(_read_json(path, DATASET_FORMAT))


# ---------------------------------------------------------------------------
# Checkpoint


def encode_array(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return {"shape": list(arr.shape), "dtype": "<f8", "data": base64.b64encode(data).decode("ascii")}


def decode_array(rec: dict) -> np.ndarray:
    if rec.get("dtype", "<f8") != "<f8":
        raise FormatError(f"unsupported array dtype {rec.get('dtype')!r}")
    shape = tuple(int(s) for s in rec["shape"])
    raw = base64.b64decode(rec["data"])
    arr = np.frombuffer(raw, dtype="<f8")
    if arr.size != int(np.prod(shape)):
        raise FormatError(f"array payload has {arr.size} values, shape {shape} needs {int(np.prod(shape))}")
    return arr.reshape(shape).astype(np.float64)


def checkpoint_to_doc(model: StackedModel) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": FORMAT_VERSION,
        "seed": model.config.seed,
        "config": model.config.to_dict(),
        "layers": [{name: encode_array(a) for name, a in layer.named_arrays()} for layer in model.layers],
    }


def checkpoint_from_doc(doc: dict) -> StackedModel:
    try:
        config = StackConfig.from_dict(doc["config"])
        layers = [
            AutoEncoderParams.from_named_arrays({name: decode_array(rec) for name, rec in layer.items()})
            for layer in doc["layers"]
        ]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed checkpoint: missing or invalid field {exc}") from exc
    return StackedModel(layers, config)


def save_checkpoint(model: StackedModel, path) -> None:
    atomic_write_text(path, dumps(checkpoint_to_doc(model)))


def load_checkpoint(path) -> StackedModel:
    return checkpoint_from_doc(_read_json(path, CHECKPOINT_FORMAT))


# ---------------------------------------------------------------------------
# Scores and reports


def scores_to_doc(scores: list[ClipScore], frame_scores: np.ndarray, total_frames: int) -> dict:
    clips = [
        {
            "object_id": int(s.clip.object_id),
            "frames": [int(s.clip.start), int(s.clip.end)],
            "box_start": _box_list(s.clip.b_start),
            "box_end": _box_list(s.clip.b_end),
            "chunk": int(s.chunk),
            "raw_error": float(s.raw_error),
            "score": float(s.score),
        }
        for s in scores
    ]
    return {
        "format": SCORES_FORMAT,
        "version": FORMAT_VERSION,
        "total_frames": int(total_frames),
        "clips": clips,
        "frame_scores": [float(v) for v in frame_scores],
    }


def save_scores(scores: list[ClipScore], frame_scores, total_frames: int, path) -> None:
    atomic_write_text(path, dumps(scores_to_doc(scores, frame_scores, total_frames)))


def load_scores(path) -> dict:
    return _read_json(path, SCORES_FORMAT)


def predictions_from_scores(doc: dict) -> list[PredictedClip]:
    try:
        return [
            PredictedClip(
                int(rec["frames"][0]), int(rec["frames"][1]),
                BoundingBox.from_seq(rec["box_start"]), BoundingBox.from_seq(rec["box_end"]),
                float(rec["score"]), rec.get("object_id"),
            )
            for rec in doc["clips"]
        ]
    except (KeyError, TypeError, IndexError) as exc:
        raise FormatError(f"malformed score document: missing or invalid field {exc}") from exc


def report_to_doc(report_fields: dict) -> dict:
    return {"format": REPORT_FORMAT, "version": FORMAT_VERSION, **report_fields}
