"""Online summarization over a chunked stream of object motion clips.

Trajectories are segmented into clips; each clip is summarised by the features
at its start, middle and end frames. The stream is read in fixed-size frame
chunks: every chunk's clips are scored with the current model and only then
used to update it, so a clip is never scored by a model that has seen it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .segment import SegmentConfig, motion_profile, segment_trajectory
from .stack import StackedModel, online_update, stack_scores

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box width and height must be positive, got w={self.w}, h={self.h}")

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_seq(cls, values) -> "BoundingBox":
        x, y, w, h = (float(v) for v in values)
        return cls(x, y, w, h)


@dataclass
class Trajectory:
    """One tracked object: a box and a feature vector for every frame it is visible."""

    object_id: int
    start_frame: int
    boxes: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError(f"trajectory {self.object_id}: features must be 2-D, got shape {self.features.shape}")
        if len(self.boxes) == 0 or len(self.boxes) != len(self.features):
            raise ValueError(
                f"trajectory {self.object_id}: {len(self.boxes)} boxes vs {len(self.features)} feature rows"
            )
        if np.any(self.boxes[:, 2:] <= 0):
            raise ValueError(f"trajectory {self.object_id}: box sizes must be positive")
        if self.start_frame < 0:
            raise ValueError(f"trajectory {self.object_id}: start_frame must be >= 0")

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.boxes) - 1

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def box(self, frame: int) -> BoundingBox:
        return BoundingBox.from_seq(self.boxes[frame - self.start_frame])

    def feature(self, frame: int) -> np.ndarray:
        return self.features[frame - self.start_frame]


@dataclass
class MotionClip:
    object_id: int
    start: int
    end: int
    b_start: BoundingBox
    b_end: BoundingBox
    sampled_features: np.ndarray

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"clip range [{self.start}, {self.end}] is empty")
        self.sampled_features = np.asarray(self.sampled_features, dtype=np.float64)
        if self.sampled_features.ndim != 2 or len(self.sampled_features) != 3:
            raise ValueError(f"a clip carries exactly 3 sampled feature vectors, got shape {self.sampled_features.shape}")

    @property
    def midpoint(self) -> int:
        return (self.start + self.end) // 2


@dataclass
class ClipScore:
    clip: MotionClip
    raw_error: float
    score: float = 0.0
    chunk: int = 0


def sample_regions(start: int, end: int) -> tuple[int, int, int]:
    """Start, floor-midpoint and end frame of an inclusive range."""
    if start > end:
        raise ValueError(f"range [{start}, {end}] is empty")
    return start, (start + end) // 2, end


def build_clip(trajectory: Trajectory, start: int, end: int) -> MotionClip:
    if not trajectory.start_frame <= start <= end <= trajectory.end_frame:
        raise ValueError(
            f"segment [{start}, {end}] outside trajectory {trajectory.object_id} "
            f"frames [{trajectory.start_frame}, {trajectory.end_frame}]"
        )
    frames = sample_regions(start, end)
    return MotionClip(
        object_id=trajectory.object_id,
        start=start,
        end=end,
        b_start=trajectory.box(start),
        b_end=trajectory.box(end),
        sampled_features=np.stack([trajectory.feature(f) for f in frames]),
    )


def clips_from_trajectories(trajectories: Sequence[Trajectory], config: SegmentConfig = SegmentConfig()) -> list[MotionClip]:
    clips = []
    for traj in trajectories:
        profile = motion_profile(traj.boxes, config.smooth_window)
        for s, e in segment_trajectory(profile, config):
            clips.append(build_clip(traj, traj.start_frame + s, traj.start_frame + e))
    return clips


def make_still_sequences(frame_features, copies: int = 3) -> np.ndarray:
    """One constant sequence per box feature: the vector repeated ``copies`` times."""
    feats = np.asarray(frame_features, dtype=np.float64)
    if feats.ndim != 2 or len(feats) == 0:
        raise ValueError("need a non-empty list of feature vectors")
    if copies < 1:
        raise ValueError(f"copies must be >= 1, got {copies}")
    return np.repeat(feats[:, None, :], copies, axis=1)


def still_sequences_from_trajectories(
    trajectories: Sequence[Trajectory],
    total_frames: int,
    boxes_per_frame: int = 30,
    seed: int = 0,
    copies: int = 3,
    frame_stride: int = 1,
) -> np.ndarray:
    """Offline training data: up to ``boxes_per_frame`` random boxes from each frame.

    Frames with fewer boxes contribute all of them; frames with none are skipped.
    """
    rng = np.random.default_rng(seed)
    per_frame: list[list[np.ndarray]] = [[] for _ in range(total_frames)]
    for traj in trajectories:
        for k, frame in enumerate(range(traj.start_frame, traj.end_frame + 1)):
            if 0 <= frame < total_frames:
                per_frame[frame].append(traj.features[k])
    batches = []
    for frame in range(0, total_frames, frame_stride):
        feats = per_frame[frame]
        if not feats:
            continue
        if len(feats) > boxes_per_frame:
            pick = np.sort(rng.choice(len(feats), size=boxes_per_frame, replace=False))
            feats = [feats[i] for i in pick]
        batches.append(make_still_sequences(feats, copies))
    if not batches:
        raise ValueError("no boxes found in any frame")
    return np.concatenate(batches)


def chunk_stream(total_frames: int, chunk_size: int = 1000) -> list[tuple[int, int]]:
    """Half-open frame ranges [a, b) of length ``chunk_size`` (last may be shorter)."""
    if total_frames < 1:
        raise ValueError(f"total_frames must be >= 1, got {total_frames}")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    return [(a, min(a + chunk_size, total_frames)) for a in range(0, total_frames, chunk_size)]


def normalize_scores(raw_errors) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant list maps to all zeros."""
    raw = np.asarray(raw_errors, dtype=np.float64)
    if raw.size == 0:
        raise ValueError("cannot normalize an empty score list")
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.zeros_like(raw)
    return np.clip((raw - lo) / (hi - lo), 0.0, 1.0)


def frame_level_scores(scores, ranges, total_frames: int) -> np.ndarray:
    """Mean score of the clips covering each frame; uncovered frames get 0."""
    total = np.zeros(total_frames)
    count = np.zeros(total_frames)
    for score, (s, e) in zip(scores, ranges):
        if not 0 <= s <= e < total_frames:
            raise ValueError(f"clip range [{s}, {e}] outside [0, {total_frames})")
        total[s:e + 1] += score
        count[s:e + 1] += 1
    out = np.zeros(total_frames)
    covered = count > 0
    out[covered] = total[covered] / count[covered]
    return out


def assign_chunks(clips: Sequence[MotionClip], total_frames: int, chunk_size: int = 1000) -> list[list[MotionClip]]:
    """Group clips by the chunk holding their midpoint frame, ordered by (start, object_id)."""
    chunks = chunk_stream(total_frames, chunk_size)
    groups: list[list[MotionClip]] = [[] for _ in chunks]
    for clip in clips:
        k = clip.midpoint // chunk_size
        if clip.start < 0 or clip.end >= total_frames:
            raise ValueError(f"clip of object {clip.object_id} at [{clip.start}, {clip.end}] lies outside the stream")
        groups[k].append(clip)
    for g in groups:
        g.sort(key=lambda c: (c.start, c.object_id, c.end))
    return groups


def summarize_clips(
    model: StackedModel,
    clips: Sequence[MotionClip],
    total_frames: int,
    chunk_size: int = 1000,
) -> tuple[list[ClipScore], StackedModel]:
    """Score-then-update over pre-built clips, chunk by chunk."""
    results: list[ClipScore] = []
    for k, group in enumerate(assign_chunks(clips, total_frames, chunk_size)):
        if not group:
            continue
        batch = np.stack([c.sampled_features for c in group])
        raw = stack_scores(model, batch)
        results.extend(ClipScore(clip=c, raw_error=float(r), chunk=k) for c, r in zip(group, raw))
        model = online_update(model, batch)
        logger.debug("chunk %d: %d clips, mean raw error %.6g", k, len(group), float(raw.mean()))
    if results:
        for item, s in zip(results, normalize_scores([r.raw_error for r in results])):
            item.score = float(s)
    return results, model


def summarize_stream(
    model: StackedModel,
    trajectories: Sequence[Trajectory],
    total_frames: Optional[int] = None,
    chunk_size: int = 1000,
    segment_config: SegmentConfig = SegmentConfig(),
) -> tuple[list[ClipScore], StackedModel]:
    """Segment every trajectory, then run the chunked score-then-update loop.

    Scores are min-max normalised over the whole video after the last chunk.
    """
    if total_frames is None:
        total_frames = max((t.end_frame + 1 for t in trajectories), default=0)
    if not trajectories:
        return [], model
    clips = clips_from_trajectories(trajectories, segment_config)
    return summarize_clips(model, clips, total_frames, chunk_size)
