"""Seeded synthetic surveillance scenes.

Each object follows a chain of motion regimes (waiting, slow, fast, turning).
Per-frame features concatenate an appearance block, which is the prototype
vector of the current regime, and a context block, a smooth random-Fourier
encoding of the box centre in [0, 1], plus Gaussian noise. Fast and turning segments are
the anomalous ones and become ground-truth clips.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .evaluation import GroundTruthClip
from .io import Dataset, RegimeSegment
from .pipeline import Trajectory

REGIMES = ("waiting", "slow", "fast", "turning")
ANOMALOUS = ("fast", "turning")
COMMON = ("waiting", "slow")

# px/frame; slow and fast bands are disjoint, turning sits between them
SPEED_BANDS = {"waiting": (0.0, 0.0), "slow": (0.3, 1.0), "fast": (5.0, 9.0), "turning": (2.0, 3.5)}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_objects: int = 20
    frames: int = 3000
    regime_mix: dict = field(default_factory=lambda: {"waiting": 0.35, "slow": 0.35, "fast": 0.15, "turning": 0.15})
    anomaly_fraction: float = 0.25
    feature_dim: int = 64
    noise_sigma: float = 0.05
    segments_per_object: tuple[int, int] = (1, 3)
    segment_length: tuple[int, int] = (40, 120)
    scene_size: tuple[int, int] = (640, 480)
    box_size: tuple[int, int] = (30, 80)
    context_length_scale: float = 40.0
    context_amplitude: float = 2.0
    appearance_scale: float = 1.0
    # seeds the feature extractor; videos sharing it share one feature space
    scene_seed: int = 0

    def __post_init__(self):
        mix = dict(self.regime_mix)
        unknown = set(mix) - set(REGIMES)
        if unknown:
            raise ValueError(f"unknown regime(s) in regime_mix: {sorted(unknown)}")
        probs = [float(mix.get(r, 0.0)) for r in REGIMES]
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"regime probabilities must be non-negative and sum to 1, got {mix}")
        if not 0.0 <= self.anomaly_fraction <= 1.0:
            raise ValueError(f"anomaly_fraction must lie in [0, 1], got {self.anomaly_fraction}")
        if self.anomaly_fraction > 0 and sum(mix.get(r, 0.0) for r in ANOMALOUS) == 0:
            raise ValueError("anomaly_fraction > 0 but fast/turning have zero probability")
        if self.anomaly_fraction < 1 and sum(mix.get(r, 0.0) for r in COMMON) == 0:
            raise ValueError("anomaly_fraction < 1 but waiting/slow have zero probability")
        if self.feature_dim < 2 or self.feature_dim % 2:
            raise ValueError(f"feature_dim must be an even number >= 2, got {self.feature_dim}")
        if self.n_objects < 0 or self.frames < 1:
            raise ValueError("n_objects must be >= 0 and frames >= 1")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        lo, hi = self.segments_per_object
        if not 1 <= lo <= hi:
            raise ValueError(f"invalid segments_per_object {self.segments_per_object}")
        lo, hi = self.segment_length
        if not 2 <= lo <= hi:
            raise ValueError(f"invalid segment_length {self.segment_length}")
        if self.segments_per_object[1] * hi > self.frames:
            raise ValueError("the longest possible trajectory does not fit in the video")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("segments_per_object", "segment_length", "scene_size", "box_size"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown SynthConfig field(s): {sorted(unknown)}")
        data = dict(data)
        for key in ("segments_per_object", "segment_length", "scene_size", "box_size"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


class FeatureModel:
    """Maps (regime, box) to a feature vector: appearance prototype ++ context code."""

    def __init__(self, feature_dim: int, length_scale: float, seed: int, amplitude: float = 1.0, appearance_scale: float = 1.0):
        self.amplitude = amplitude
        rng = np.random.default_rng([seed, 7])
        self.d_app = feature_dim // 2
        self.d_ctx = feature_dim - self.d_app
        # non-negative like post-ReLU detector activations
        self.prototypes = {r: np.abs(rng.normal(0.0, appearance_scale, self.d_app)) for r in REGIMES}
        self.freqs = rng.normal(0.0, 1.0 / length_scale, size=(self.d_ctx, 2))
        self.phases = rng.uniform(0.0, 2 * np.pi, size=self.d_ctx)

    def context(self, centers: np.ndarray) -> np.ndarray:
        return 0.5 * self.amplitude * (1.0 + np.cos(centers @ self.freqs.T + self.phases))

    def features(self, regimes: list[str], boxes: np.ndarray) -> np.ndarray:
        centers = boxes[:, :2] + boxes[:, 2:] / 2.0
        app = np.stack([self.prototypes[r] for r in regimes])
        return np.concatenate([app, self.context(centers)], axis=1)


def simulate_segment(rng: np.random.Generator, regime: str, start_xy, length: int) -> np.ndarray:
    """Box top-left positions for ``length`` frames starting one step after ``start_xy``."""
    lo, hi = SPEED_BANDS[regime]
    speed = rng.uniform(lo, hi) if hi > 0 else 0.0
    angle = rng.uniform(0.0, 2 * np.pi)
    vel = np.full((length, 2), [speed * np.cos(angle), speed * np.sin(angle)])
    if regime == "turning":
        turn = rng.uniform(np.pi / 2, np.pi) * rng.choice([-1.0, 1.0])
        rot = np.array([[np.cos(turn), -np.sin(turn)], [np.sin(turn), np.cos(turn)]])
        vel[length // 2:] = vel[length // 2:] @ rot.T
    return np.asarray(start_xy, dtype=np.float64) + np.cumsum(vel, axis=0)


def build_trajectory(
    rng: np.random.Generator,
    feature_model: FeatureModel,
    object_id: int,
    start_frame: int,
    regimes: list[str],
    lengths: list[int],
    scene_size=(640, 480),
    box_size=(30, 80),
    noise_sigma: float = 0.05,
) -> tuple[Trajectory, list[RegimeSegment]]:
    """One object moving through ``regimes`` with the given per-segment lengths."""
    w, h = rng.uniform(box_size[0], box_size[1], size=2)
    pos = np.array([rng.uniform(0, scene_size[0] - w), rng.uniform(0, scene_size[1] - h)])
    xy = [pos[None]]
    per_frame_regime = [regimes[0]]
    segments = []
    frame = start_frame
    for k, (regime, length) in enumerate(zip(regimes, lengths)):
        # the first frame of the trajectory belongs to the first segment
        n_new = length - 1 if k == 0 else length
        path = simulate_segment(rng, regime, xy[-1][-1], n_new) if n_new else np.empty((0, 2))
        xy.append(path)
        per_frame_regime.extend([regime] * n_new)
        segments.append(RegimeSegment(frame, frame + length - 1, regime))
        frame += length
    xy = np.concatenate(xy)
    boxes = np.column_stack([xy, np.full(len(xy), w), np.full(len(xy), h)])
    feats = feature_model.features(per_frame_regime, boxes)
    feats = feats + rng.normal(0.0, noise_sigma, size=feats.shape)
    return Trajectory(object_id, start_frame, boxes, feats), segments


def generate(config: SynthConfig) -> Dataset:
    rng = np.random.default_rng(config.seed)
    fm = FeatureModel(config.feature_dim, config.context_length_scale, config.scene_seed, config.context_amplitude, config.appearance_scale)

    seg_counts = rng.integers(config.segments_per_object[0], config.segments_per_object[1] + 1, size=config.n_objects)
    n_segments = int(seg_counts.sum())
    n_anom = int(round(config.anomaly_fraction * n_segments))
    anomalous = np.zeros(n_segments, dtype=bool)
    anomalous[rng.choice(n_segments, size=n_anom, replace=False)] = True

    mix = config.regime_mix

    def draw(pool):
        p = np.array([mix.get(r, 0.0) for r in pool], dtype=np.float64)
        return pool[int(rng.choice(len(pool), p=p / p.sum()))]

    trajectories, gts, regimes = [], [], {}
    pos = 0
    for obj in range(config.n_objects):
        n = int(seg_counts[obj])
        labels = [draw(ANOMALOUS) if anomalous[pos + k] else draw(COMMON) for k in range(n)]
        pos += n
        lengths = [int(v) for v in rng.integers(config.segment_length[0], config.segment_length[1] + 1, size=n)]
        start = int(rng.integers(0, config.frames - sum(lengths) + 1))
        traj, segs = build_trajectory(
            rng, fm, obj, start, labels, lengths,
            config.scene_size, config.box_size, config.noise_sigma,
        )
        trajectories.append(traj)
        regimes[obj] = segs
        for seg in segs:
            if seg.regime in ANOMALOUS:
                gts.append(GroundTruthClip(seg.start, seg.end, traj.box(seg.start), traj.box(seg.end), obj))
    return Dataset(config.feature_dim, config.frames, trajectories, gts, None, regimes)


def clip_is_anomalous(regime_segments: list[RegimeSegment], start: int, end: int) -> bool:
    """True when at least half the clip's frames lie in fast or turning segments."""
    covered = 0
    for seg in regime_segments:
        if seg.regime in ANOMALOUS:
            covered += max(0, min(end, seg.end) - max(start, seg.start) + 1)
    return 2 * covered >= end - start + 1


def frame_labels(ds: Dataset) -> np.ndarray:
    """Per-frame ground truth: frames inside any ground-truth clip."""
    labels = np.zeros(ds.total_frames, dtype=bool)
    for g in ds.ground_truth:
        labels[g.start:g.end + 1] = True
    return labels
