"""Per-frame gesture features: 18 joints x (3 position + 9 rotation-matrix
entries) = 216 columns, with standard normalization and training-window
extraction."""

from dataclasses import dataclass

import numpy as np

from . import bvh
from .errors import ConfigError, DataError, DimensionError

FEATURE_JOINTS = 18
FEATURE_WIDTH = FEATURE_JOINTS * 12  # 216
STD_FLOOR = 1e-6


@dataclass
class GestureFeatureSeq:
    frames: np.ndarray  # T x 216
    fps: float
    normalized: bool

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != FEATURE_WIDTH:
            raise DimensionError(f"gesture features must be T x {FEATURE_WIDTH}, got {self.frames.shape}")


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DimensionError("norm stats mean/std must be equal-length vectors")
        if (self.std < STD_FLOOR).any():
            raise DataError(f"norm stats std below floor {STD_FLOOR}")

    def save_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(repr(float(v)) for v in self.mean) + "\n")
            fh.write(",".join(repr(float(v)) for v in self.std) + "\n")

    @classmethod
    def load_csv(cls, path):
        with open(path) as fh:
            rows = [line.strip() for line in fh if line.strip()]
        if len(rows) != 2:
            raise DataError(f"{path}: expected 2 rows (mean, std), got {len(rows)}")
        mean = np.array([float(v) for v in rows[0].split(",")])
        std = np.array([float(v) for v in rows[1].split(",")])
        return cls(mean, std)


def gesture_features(clip, stats=None, root_relative=False, expected_joints=FEATURE_JOINTS):
    """Concatenate per-joint world position and world rotation-matrix rows.

    The clip must already be restricted to the configured joint set. With
    stats given, applies (x - mean) / std per column.
    """
    j = clip.skeleton.joint_count
    if j != expected_joints:
        raise ConfigError(f"expected {expected_joints} joints for gesture features, clip has {j}")
    positions, rotations = bvh.forward_kinematics(clip, return_rotations=True)
    t = positions.shape[0]
    if root_relative:
        positions = positions - positions[:, :1]
    blocks = np.concatenate([positions, rotations.reshape(t, j, 9)], axis=2)
    frames = blocks.reshape(t, j * 12)
    if stats is not None:
        frames = normalize(frames, stats)
    return GestureFeatureSeq(frames, clip.fps, normalized=stats is not None)


def normalize(frames, stats):
    return (frames - stats.mean) / stats.std


def denormalize(frames, stats):
    return frames * stats.std + stats.mean


def fit_norm_stats(seqs, floor=STD_FLOOR):
    """Per-column mean and std over all frames of all clips, std floored."""
    if not seqs:
        raise DataError("fit_norm_stats: no input sequences")
    for s in seqs:
        if s.normalized:
            raise DataError("fit_norm_stats: inputs must be unnormalized")
    pooled = np.concatenate([s.frames for s in seqs], axis=0)
    if pooled.shape[0] < 2:
        raise DataError("fit_norm_stats: need at least 2 total frames")
    mean = pooled.mean(axis=0)
    std = np.maximum(pooled.std(axis=0), floor)
    return NormStats(mean, std)


def rotation_blocks(frames):
    """View the 9-entry rotation blocks of a T x 216-style matrix as T x J x 3 x 3."""
    t, width = frames.shape
    j = width // 12
    return frames.reshape(t, j, 12)[:, :, 3:].reshape(t, j, 3, 3)


def features_to_clip(frames, skeleton, fps):
    """Rebuild a MotionClip from unnormalized gesture features.

    World rotation blocks are projected to the nearest proper rotation, then
    converted to per-joint local rotations; joint positions in the features
    are diagnostic except for the root, which sets the root translation.
    """
    frames = np.asarray(frames, dtype=np.float64)
    j = skeleton.joint_count
    if frames.shape[1] != j * 12:
        raise DimensionError(f"feature width {frames.shape[1]} does not match {j} joints")
    t = frames.shape[0]
    blocks = frames.reshape(t, j, 12)
    world_r = bvh.nearest_rotation(blocks[:, :, 3:].reshape(t, j, 3, 3))
    root_positions = blocks[:, 0, :3] - skeleton.offsets[0]
    local_rotations = np.empty((t, j, 3))
    for k in range(j):
        p = skeleton.parents[k]
        local = world_r[:, k] if p is None else np.swapaxes(world_r[:, p], 1, 2) @ world_r[:, k]
        local_rotations[:, k] = bvh.rotmat_to_euler(local, skeleton.orders[k])
    return bvh.MotionClip(skeleton, fps, root_positions, local_rotations)


# ---------------------------------------------------------------------------
# training windows

@dataclass
class TrainWindow:
    clip_id: str
    start: int
    seed_len: int
    gesture: np.ndarray  # win x 216 (normalized)
    text: np.ndarray  # win x 300
    logmel: np.ndarray  # win x 80
    rhythm: np.ndarray  # win x 3

    @property
    def length(self):
        return self.gesture.shape[0]


def window_samples(clip_id, gesture, text, logmel, rhythm, win=100, stride=10, seed_len=10):
    """Cut aligned modality sequences into overlapping training windows.

    Windows start at 0, stride, 2*stride, ...; each carries `win` frames of
    every modality with the first `seed_len` gesture frames acting as seed.
    Sequences shorter than `win` yield an empty list.
    """
    if win <= seed_len:
        raise ConfigError(f"window length {win} must exceed seed length {seed_len}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    t = gesture.shape[0]
    for name, arr in (("text", text), ("logmel", logmel), ("rhythm", rhythm)):
        if arr.shape[0] != t:
            raise DataError(f"{clip_id}: {name} has {arr.shape[0]} frames, gesture has {t}")
    windows = []
    for start in range(0, t - win + 1, stride):
        stop = start + win
        windows.append(
            TrainWindow(
                clip_id,
                start,
                seed_len,
                gesture[start:stop].copy(),
                text[start:stop].copy(),
                logmel[start:stop].copy(),
                rhythm[start:stop].copy(),
            )
        )
    return windows
