"""End-to-end runs on the synthetic benchmark.

An offline video (same scene, different seed) supplies still sequences for
pre-training; the test video is then summarised online and scored against its
regime labels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .evaluation import PredictedClip, evaluate, frame_metrics, roc_auc
from .io import Dataset
from .pipeline import ClipScore, frame_level_scores, still_sequences_from_trajectories, summarize_stream
from .segment import SegmentConfig
from .stack import StackConfig, StackedModel, greedy_train, init_stack
from .synth import SynthConfig, clip_is_anomalous, frame_labels, generate

OFFLINE_SEED_OFFSET = 1000
# the offline video is busier than the test video so that still sequences
# cover most of the scene; a random subset keeps pre-training cheap
OFFLINE_OBJECTS = 200
OFFLINE_MAX_SEQUENCES = 4000


@dataclass
class BenchmarkResult:
    clip_auc: float
    frame_precision: float
    frame_recall: float
    frame_fpr: float
    frame_f: float
    scores: list[ClipScore]
    clip_labels: np.ndarray
    frame_scores: np.ndarray
    dataset: Dataset
    model: StackedModel
    report: object = None


def offline_dataset(synth: SynthConfig, n_objects: int = OFFLINE_OBJECTS) -> Dataset:
    return generate(replace(synth, seed=synth.seed + OFFLINE_SEED_OFFSET, n_objects=n_objects))


def pretrain(
    stack: StackConfig,
    synth: SynthConfig,
    max_sequences: Optional[int] = OFFLINE_MAX_SEQUENCES,
    boxes_per_frame: int = 30,
    n_objects: int = OFFLINE_OBJECTS,
) -> StackedModel:
    off = offline_dataset(synth, n_objects)
    seqs = still_sequences_from_trajectories(
        off.trajectories, off.total_frames, boxes_per_frame=boxes_per_frame, seed=stack.seed, copies=stack.seq_len
    )
    if max_sequences is not None and len(seqs) > max_sequences:
        rng = np.random.default_rng([stack.seed, 1])
        seqs = seqs[np.sort(rng.choice(len(seqs), size=max_sequences, replace=False))]
    return greedy_train(init_stack(stack), seqs, stack)


def clip_labels(ds: Dataset, scores: list[ClipScore]) -> np.ndarray:
    return np.array(
        [clip_is_anomalous(ds.regimes[s.clip.object_id], s.clip.start, s.clip.end) for s in scores], dtype=bool
    )


def run_benchmark(
    stack: StackConfig = StackConfig(),
    synth: SynthConfig = SynthConfig(),
    model: Optional[StackedModel] = None,
    chunk_size: int = 1000,
    segment_config: SegmentConfig = SegmentConfig(),
    max_offline_sequences: Optional[int] = OFFLINE_MAX_SEQUENCES,
    tau: float = 0.5,
) -> BenchmarkResult:
    if model is None:
        model = pretrain(stack, synth, max_offline_sequences)
    ds = generate(synth)
    scores, final = summarize_stream(model, ds.trajectories, ds.total_frames, chunk_size, segment_config)
    labels = clip_labels(ds, scores)
    raw = np.array([s.raw_error for s in scores])
    auc = roc_auc(raw, labels)
    fscores = frame_level_scores([s.score for s in scores], [(s.clip.start, s.clip.end) for s in scores], ds.total_frames)
    pre, rec, fpr, f = frame_metrics(fscores, frame_labels(ds), tau)
    preds = [PredictedClip(s.clip.start, s.clip.end, s.clip.b_start, s.clip.b_end, s.score, s.clip.object_id) for s in scores]
    report = evaluate(preds, ds.ground_truth)
    return BenchmarkResult(auc, pre, rec, fpr, f, scores, labels, fscores, ds, final, report)
