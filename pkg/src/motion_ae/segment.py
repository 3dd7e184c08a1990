"""Cut object trajectories into motion clips.

A trajectory's per-frame motion magnitude is the centre displacement relative
to box size. Clips are cut at prominent local minima of the smoothed profile,
i.e. where motion changes least, then short pieces are merged and long pieces
split so that every clip length falls inside [min_len, max_len].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks


@dataclass(frozen=True)
class SegmentConfig:
    smooth_window: int = 5
    min_len: int = 5
    max_len: int = 60
    boundary_threshold: float = 0.2

    def __post_init__(self):
        if self.smooth_window < 1 or self.smooth_window % 2 == 0:
            raise ValueError(f"smooth_window must be a positive odd integer, got {self.smooth_window}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError(f"need 1 <= min_len <= max_len, got {self.min_len}, {self.max_len}")
        # Splitting an over-long piece in two must not produce a piece shorter than min_len.
        if self.max_len + 1 < 2 * self.min_len:
            raise ValueError(f"max_len ({self.max_len}) must be at least 2 * min_len - 1 ({2 * self.min_len - 1})")
        if not 0.0 <= self.boundary_threshold <= 1.0:
            raise ValueError(f"boundary_threshold must lie in [0, 1], got {self.boundary_threshold}")


def motion_profile(boxes, smooth_window: int = 5) -> np.ndarray:
    """Smoothed per-frame motion magnitude for boxes given as rows (x, y, w, h)."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    n = len(boxes)
    if n == 0:
        raise ValueError("trajectory must have at least one box")
    if smooth_window < 1 or smooth_window % 2 == 0:
        raise ValueError(f"smooth_window must be a positive odd integer, got {smooth_window}")
    centers = boxes[:, :2] + boxes[:, 2:] / 2.0
    mag = np.zeros(n)
    if n > 1:
        step = np.linalg.norm(np.diff(centers, axis=0), axis=1)
        mag[1:] = step / np.sqrt(boxes[1:, 2] * boxes[1:, 3])
    if smooth_window == 1:
        return mag
    # centred moving average; windows shrink at the edges
    half = smooth_window // 2
    csum = np.concatenate([[0.0], np.cumsum(mag)])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def _merge_short(ranges, min_len):
    ranges = [list(r) for r in ranges]
    while len(ranges) > 1:
        short = [i for i, (s, e) in enumerate(ranges) if e - s + 1 < min_len]
        if not short:
            break
        i = short[0]
        left = ranges[i - 1] if i > 0 else None
        right = ranges[i + 1] if i + 1 < len(ranges) else None
        left_len = left[1] - left[0] + 1 if left else None
        right_len = right[1] - right[0] + 1 if right else None
        if right is None or (left is not None and left_len <= right_len):
            left[1] = ranges[i][1]
        else:
            right[0] = ranges[i][0]
        del ranges[i]
    return [tuple(r) for r in ranges]


def _split_long(ranges, max_len):
    out = []
    for s, e in ranges:
        length = e - s + 1
        pieces = -(-length // max_len)
        for chunk in np.array_split(np.arange(s, e + 1), pieces):
            out.append((int(chunk[0]), int(chunk[-1])))
    return out


def segment_trajectory(profile, config: SegmentConfig = SegmentConfig()) -> list[tuple[int, int]]:
    """Partition frame indices 0..len(profile)-1 into inclusive clip ranges.

    A boundary (new clip start) is placed at every local minimum whose
    prominence is at least ``boundary_threshold`` times the profile's range.
    Pieces shorter than ``min_len`` are folded into their shorter neighbour
    (the left one on ties); pieces longer than ``max_len`` are then split into
    near-equal parts.
    """
    profile = np.asarray(profile, dtype=np.float64)
    n = len(profile)
    if n == 0:
        raise ValueError("profile must be non-empty")
    spread = float(profile.max() - profile.min())
    cuts: list[int] = []
    if spread > 0:
        minima, _ = find_peaks(-profile, prominence=config.boundary_threshold * spread)
        cuts = [int(i) for i in minima if 0 < i < n]
    starts = [0] + cuts
    ends = [c - 1 for c in cuts] + [n - 1]
    ranges = _merge_short(list(zip(starts, ends)), config.min_len)
    return _split_long(ranges, config.max_len)
