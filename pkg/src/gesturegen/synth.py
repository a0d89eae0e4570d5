"""Procedural test data: a full-body skeleton with smooth sinusoidal motion,
amplitude-modulated tone audio, two-word transcripts, and a word-vector file.
Everything is seeded, so generated datasets are byte-reproducible."""

import csv
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import bvh

# the 18 upper-body joints the feature pipeline keeps (legs are dropped)
UPPER_BODY_JOINTS = [
    "Hips", "Spine", "Spine1", "Spine2", "Spine3", "Neck", "Neck1", "Head",
    "RightShoulder", "RightArm", "RightForeArm", "RightHand", "RightHandEnd",
    "LeftShoulder", "LeftArm", "LeftForeArm", "LeftHand", "LeftHandEnd",
]

LEFT_FACING_JOINT = "LeftArm"
RIGHT_FACING_JOINT = "RightArm"

_JOINTS = [
    # name, parent name, offset
    ("Hips", None, (0.0, 100.0, 0.0)),
    ("Spine", "Hips", (0.0, 10.0, 0.0)),
    ("Spine1", "Spine", (0.0, 10.0, 0.0)),
    ("Spine2", "Spine1", (0.0, 10.0, 0.0)),
    ("Spine3", "Spine2", (0.0, 10.0, 0.0)),
    ("Neck", "Spine3", (0.0, 10.0, 0.0)),
    ("Neck1", "Neck", (0.0, 5.0, 0.0)),
    ("Head", "Neck1", (0.0, 5.0, 0.0)),
    ("RightShoulder", "Spine3", (-5.0, 8.0, 0.0)),
    ("RightArm", "RightShoulder", (-10.0, 0.0, 0.0)),
    ("RightForeArm", "RightArm", (-25.0, 0.0, 0.0)),
    ("RightHand", "RightForeArm", (-25.0, 0.0, 0.0)),
    ("RightHandEnd", "RightHand", (-10.0, 0.0, 0.0)),
    ("LeftShoulder", "Spine3", (5.0, 8.0, 0.0)),
    ("LeftArm", "LeftShoulder", (10.0, 0.0, 0.0)),
    ("LeftForeArm", "LeftArm", (25.0, 0.0, 0.0)),
    ("LeftHand", "LeftForeArm", (25.0, 0.0, 0.0)),
    ("LeftHandEnd", "LeftHand", (5.0, 0.0, 0.0)),
    ("RightUpLeg", "Hips", (-9.0, -5.0, 0.0)),
    ("RightLeg", "RightUpLeg", (0.0, -40.0, 0.0)),
    ("RightFoot", "RightLeg", (0.0, -40.0, 0.0)),
    ("LeftUpLeg", "Hips", (9.0, -5.0, 0.0)),
    ("LeftLeg", "LeftUpLeg", (0.0, -40.0, 0.0)),
    ("LeftFoot", "LeftLeg", (0.0, -40.0, 0.0)),
]

_END_SITES = {
    "Head": (0.0, 10.0, 0.0),
    "RightHandEnd": (-5.0, 0.0, 0.0),
    "LeftHandEnd": (2.0, 0.0, 0.0),
    "RightFoot": (0.0, -10.0, 15.0),
    "LeftFoot": (0.0, -10.0, 15.0),
}

# joints that move; everything else stays at rest pose
_ANIMATED = [
    "Spine", "Spine1", "Spine2", "Spine3", "Neck", "Head",
    "RightShoulder", "RightArm", "RightForeArm", "RightHand",
    "LeftShoulder", "LeftArm", "LeftForeArm", "LeftHand",
]


def make_skeleton():
    names = [j[0] for j in _JOINTS]
    index = {n: i for i, n in enumerate(names)}
    parents = [None if j[1] is None else index[j[1]] for j in _JOINTS]
    offsets = np.array([j[2] for j in _JOINTS])
    orders = ["ZXY"] * len(names)
    ends = [(index[n], np.array(off)) for n, off in _END_SITES.items()]
    return bvh.Skeleton(names, parents, offsets, orders, ends)


def make_motion(rng, frames, fps=30.0, yaw_deg=0.0, position=(0.0, 0.0)):
    """Smooth sinusoidal gesturing on the upper body, facing `yaw_deg` away
    from +Z and standing at the given horizontal position."""
    skeleton = make_skeleton()
    index = {n: i for i, n in enumerate(skeleton.names)}
    t = np.arange(frames) / fps
    rotations = np.zeros((frames, skeleton.joint_count, 3))
    for name in _ANIMATED:
        j = index[name]
        for axis in range(3):
            amp = rng.uniform(4.0, 28.0)
            freq = rng.uniform(0.25, 1.2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            rotations[:, j, axis] = amp * np.sin(2.0 * np.pi * freq * t + phase)

    # root: fixed yaw composed with a gentle sway
    sway = 2.0 * np.sin(2.0 * np.pi * 0.2 * t + rng.uniform(0, 2 * np.pi))
    base = np.stack([sway, np.zeros(frames), np.zeros(frames)], axis=1)  # ZXY euler
    yaw = bvh.euler_to_rotmat(np.array([0.0, 0.0, yaw_deg]), "ZXY")  # Y-rotation only
    composed = yaw[None] @ bvh.euler_to_rotmat(base, "ZXY")
    rotations[:, 0] = bvh.rotmat_to_euler(composed, "ZXY")

    root_positions = np.zeros((frames, 3))
    root_positions[:, 0] = position[0] + 1.5 * np.sin(2.0 * np.pi * 0.15 * t)
    root_positions[:, 2] = position[1] + 1.0 * np.sin(2.0 * np.pi * 0.11 * t + 1.0)
    return bvh.MotionClip(skeleton, fps, root_positions, rotations)


def make_audio(rng, duration, sample_rate=48000, tone_hz=220.0):
    """Amplitude-modulated tone; int16 mono samples."""
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    envelope = 0.35 + 0.3 * np.sin(2.0 * np.pi * 1.3 * t + rng.uniform(0, 2 * np.pi))
    wave = envelope * np.sin(2.0 * np.pi * tone_hz * t + rng.uniform(0, 2 * np.pi))
    return (wave * 32767.0).astype(np.int16)


def make_transcript(duration, words=("hello", "world")):
    """Word timings covering two stretches of the clip."""
    spans = [(0.10, 0.42), (0.55, 0.88)]
    return [(duration * a, duration * b, w) for (a, b), w in zip(spans, words)]


def write_word_vectors(path, rng, vocab=("hello", "world", "again", "friend"), dim=300):
    with open(path, "w") as fh:
        fh.write(f"{len(vocab)} {dim}\n")
        for word in vocab:
            vec = rng.normal(scale=0.3, size=dim)
            fh.write(word + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")


def make_dataset(root, n_clips=4, frames=200, seed=0, fps=30.0, off_speaker_clips=1):
    """Write a complete miniature dataset under `root`; returns manifest path.

    Clips face different directions and stand at different spots so root
    normalization has work to do. The last `off_speaker_clips` clips belong
    to speaker "7" (everything else is speaker "1") and the final speaker-1
    clip is held out as the test split.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    duration = frames / fps
    rows = []
    n_total = n_clips + off_speaker_clips
    for k in range(n_total):
        clip_id = f"clip{k:02d}"
        yaw = rng.uniform(-150.0, 150.0)
        pos = (rng.uniform(-30, 30), rng.uniform(-30, 30))
        clip = make_motion(rng, frames, fps=fps, yaw_deg=yaw, position=pos)
        (root / f"{clip_id}.bvh").write_text(bvh.write_bvh(clip))
        wavfile.write(root / f"{clip_id}.wav", 48000, make_audio(rng, duration))
        with open(root / f"{clip_id}.tsv", "w") as fh:
            for start, end, word in make_transcript(duration):
                fh.write(f"{start:.3f}\t{end:.3f}\t{word}\n")
        speaker = "7" if k >= n_clips else "1"
        split = "test" if k == n_clips - 1 else "train"
        rows.append((clip_id, f"{clip_id}.bvh", f"{clip_id}.wav", f"{clip_id}.tsv", speaker, split))

    write_word_vectors(root / "wordvecs.txt", rng)
    manifest = root / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "motion", "audio", "transcript", "speaker", "split"])
        writer.writerows(rows)
    return manifest
