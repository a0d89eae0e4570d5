"""BVH motion-capture files: parsing, writing, and rigid-body kinematics.

Rotations follow the file's channel order as intrinsic right-handed
rotations in degrees; world transforms compose parent-to-child in skeleton
(file) order, so parents always precede children.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ConfigError, DataError, ParseError

_AXES = {"X": 0, "Y": 1, "Z": 2}


@dataclass
class Skeleton:
    names: list
    parents: list  # parent joint index, None for the root
    offsets: np.ndarray  # J x 3, dataset length units
    orders: list  # rotation channel order per joint, e.g. "ZXY"
    end_sites: list = field(default_factory=list)  # (parent index, offset 3-vector)

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.float64)
        if sum(1 for p in self.parents if p is None) != 1 or self.parents[0] is not None:
            raise DataError("skeleton must have exactly one root, at index 0")
        for j, p in enumerate(self.parents[1:], start=1):
            if p is None or p >= j:
                raise DataError(f"skeleton parents must be topologically ordered (joint {j})")
        if not np.isfinite(self.offsets).all():
            raise DataError("skeleton offsets must be finite")

    @property
    def joint_count(self):
        return len(self.names)

    def children(self, j):
        return [k for k, p in enumerate(self.parents) if p == j]


@dataclass
class MotionClip:
    skeleton: Skeleton
    fps: float
    root_positions: np.ndarray  # T x 3
    local_rotations: np.ndarray  # T x J x 3 Euler degrees in per-joint channel order

    def __post_init__(self):
        self.root_positions = np.asarray(self.root_positions, dtype=np.float64)
        self.local_rotations = np.asarray(self.local_rotations, dtype=np.float64)
        if self.fps <= 0:
            raise DataError(f"fps must be positive, got {self.fps}")
        t, j = self.local_rotations.shape[:2]
        if t < 1 or j != self.skeleton.joint_count or self.root_positions.shape != (t, 3):
            raise DataError("motion arrays inconsistent with skeleton")
        if not (np.isfinite(self.root_positions).all() and np.isfinite(self.local_rotations).all()):
            raise DataError("motion channels must be finite")

    @property
    def frame_count(self):
        return self.local_rotations.shape[0]


# ---------------------------------------------------------------------------
# parsing

class _LineReader:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self):
        while self.pos < len(self.lines):
            self.pos += 1
            toks = self.lines[self.pos - 1].split()
            if toks:
                return toks
        return None

    @property
    def line(self):
        return self.pos


def parse_bvh(source):
    """Parse BVH text (string or file-like) into a MotionClip."""
    text = source.read() if hasattr(source, "read") else source
    rd = _LineReader(text)

    toks = rd.next()
    if toks is None or toks[0] != "HIERARCHY":
        raise ParseError("expected HIERARCHY", rd.line)
    toks = rd.next()
    if toks is None or toks[0] != "ROOT" or len(toks) < 2:
        raise ParseError("expected ROOT <name>", rd.line)

    names, parents, offsets, orders = [], [], [], []
    channel_lists = []
    end_sites = []
    names.append(toks[1])
    parents.append(None)
    offsets.append(None)
    orders.append(None)
    channel_lists.append(None)

    stack = []
    current = 0
    toks = rd.next()
    if toks is None or toks[0] != "{":
        raise ParseError("expected '{' after ROOT", rd.line)
    stack.append(current)

    def parse_floats(parts, n):
        if len(parts) != n:
            raise ParseError(f"expected {n} numbers, got {len(parts)}", rd.line)
        try:
            return [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(f"non-numeric token: {exc}", rd.line) from None

    while stack:
        toks = rd.next()
        if toks is None:
            raise ParseError("unexpected end of file inside HIERARCHY", rd.line)
        key = toks[0]
        if key == "OFFSET":
            offsets[current] = parse_floats(toks[1:], 3)
        elif key == "CHANNELS":
            try:
                n = int(toks[1])
            except (IndexError, ValueError):
                raise ParseError("bad CHANNELS count", rd.line) from None
            chans = toks[2:]
            if len(chans) != n:
                raise ParseError(f"CHANNELS lists {len(chans)} names for count {n}", rd.line)
            rot = [c[0] for c in chans if c.endswith("rotation")]
            pos = [c for c in chans if c.endswith("position")]
            if len(rot) != 3 or sorted(rot) != ["X", "Y", "Z"]:
                raise ParseError(f"joint '{names[current]}' needs exactly one rotation per axis", rd.line)
            if pos and current != 0:
                raise ParseError(f"position channels only supported on the root, found on '{names[current]}'", rd.line)
            if pos and sorted(c[0] for c in pos) != ["X", "Y", "Z"]:
                raise ParseError("root position channels must cover X, Y, Z", rd.line)
            orders[current] = "".join(rot)
            channel_lists[current] = chans
        elif key == "JOINT":
            if len(toks) < 2:
                raise ParseError("JOINT without a name", rd.line)
            names.append(toks[1])
            parents.append(current)
            offsets.append(None)
            orders.append(None)
            channel_lists.append(None)
            current = len(names) - 1
            toks = rd.next()
            if toks is None or toks[0] != "{":
                raise ParseError("expected '{' after JOINT", rd.line)
            stack.append(current)
        elif key == "End":
            toks = rd.next()
            if toks is None or toks[0] != "{":
                raise ParseError("expected '{' after End Site", rd.line)
            toks = rd.next()
            if toks is None or toks[0] != "OFFSET":
                raise ParseError("expected OFFSET inside End Site", rd.line)
            end_sites.append((current, np.array(parse_floats(toks[1:], 3))))
            toks = rd.next()
            if toks is None or toks[0] != "}":
                raise ParseError("expected '}' closing End Site", rd.line)
        elif key == "}":
            stack.pop()
            if stack:
                current = stack[-1]
        else:
            raise ParseError(f"unexpected token '{key}' in HIERARCHY", rd.line)

    for j, (off, order) in enumerate(zip(offsets, orders)):
        if off is None or order is None:
            raise ParseError(f"joint '{names[j]}' missing OFFSET or CHANNELS", rd.line)

    toks = rd.next()
    if toks is None or toks[0] != "MOTION":
        raise ParseError("expected MOTION section", rd.line)
    toks = rd.next()
    if toks is None or toks[0] != "Frames:" or len(toks) != 2:
        raise ParseError("expected 'Frames: <count>'", rd.line)
    try:
        n_frames = int(toks[1])
    except ValueError:
        raise ParseError("non-numeric frame count", rd.line) from None
    toks = rd.next()
    if toks is None or toks[:2] != ["Frame", "Time:"] or len(toks) != 3:
        raise ParseError("expected 'Frame Time: <seconds>'", rd.line)
    try:
        frame_time = float(toks[2])
    except ValueError:
        raise ParseError("non-numeric frame time", rd.line) from None
    if frame_time <= 0:
        raise ParseError("frame time must be positive", rd.line)

    total_channels = sum(len(ch) for ch in channel_lists)
    j_count = len(names)
    root_positions = np.zeros((n_frames, 3))
    local_rotations = np.zeros((n_frames, j_count, 3))
    for t in range(n_frames):
        toks = rd.next()
        if toks is None:
            raise ParseError(f"missing frame row {t}", rd.line)
        values = parse_floats(toks, total_channels)
        k = 0
        for j, chans in enumerate(channel_lists):
            rot_slot = 0
            for c in chans:
                v = values[k]
                k += 1
                if c.endswith("position"):
                    root_positions[t, _AXES[c[0]]] = v
                else:
                    local_rotations[t, j, rot_slot] = v
                    rot_slot += 1

    skeleton = Skeleton(names, parents, np.array(offsets), orders, end_sites)
    return MotionClip(skeleton, 1.0 / frame_time, root_positions, local_rotations)


# ---------------------------------------------------------------------------
# writing

def write_bvh(clip):
    """Serialize a MotionClip back to BVH text; reparses to an equal clip."""
    sk = clip.skeleton
    out = ["HIERARCHY"]

    def emit_joint(j, depth):
        pad = "  " * depth
        kind = "ROOT" if sk.parents[j] is None else "JOINT"
        out.append(f"{pad}{kind} {sk.names[j]}")
        out.append(pad + "{")
        inner = "  " * (depth + 1)
        ox, oy, oz = sk.offsets[j]
        out.append(f"{inner}OFFSET {ox:.6f} {oy:.6f} {oz:.6f}")
        rot = " ".join(f"{a}rotation" for a in sk.orders[j])
        if sk.parents[j] is None:
            out.append(f"{inner}CHANNELS 6 Xposition Yposition Zposition {rot}")
        else:
            out.append(f"{inner}CHANNELS 3 {rot}")
        for child in sk.children(j):
            emit_joint(child, depth + 1)
        for parent, offset in sk.end_sites:
            if parent == j:
                out.append(f"{inner}End Site")
                out.append(inner + "{")
                out.append(f"{inner}  OFFSET {offset[0]:.6f} {offset[1]:.6f} {offset[2]:.6f}")
                out.append(inner + "}")
        out.append(pad + "}")

    emit_joint(0, 0)
    out.append("MOTION")
    out.append(f"Frames: {clip.frame_count}")
    out.append(f"Frame Time: {1.0 / clip.fps:.9g}")
    for t in range(clip.frame_count):
        row = list(clip.root_positions[t]) + list(clip.local_rotations[t].reshape(-1))
        out.append(" ".join(f"{v:.6f}" for v in row))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# rotation math

def _axis_rotation(axis, degrees):
    """Stack of right-handed rotation matrices about a coordinate axis."""
    rad = np.deg2rad(np.asarray(degrees, dtype=np.float64))
    c, s = np.cos(rad), np.sin(rad)
    n = rad.shape if rad.ndim else ()
    m = np.zeros(n + (3, 3))
    i = _AXES[axis]
    j, k = (i + 1) % 3, (i + 2) % 3
    m[..., i, i] = 1.0
    m[..., j, j] = c
    m[..., j, k] = -s
    m[..., k, j] = s
    m[..., k, k] = c
    return m


def euler_to_rotmat(angles_deg, order):
    """Compose intrinsic axis rotations in channel order; works on stacks."""
    if sorted(order) != ["X", "Y", "Z"]:
        raise ConfigError(f"rotation order must permute XYZ, got '{order}'")
    angles = np.asarray(angles_deg, dtype=np.float64)
    r = _axis_rotation(order[0], angles[..., 0])
    r = r @ _axis_rotation(order[1], angles[..., 1])
    r = r @ _axis_rotation(order[2], angles[..., 2])
    return r


def rotmat_to_euler(matrices, order):
    """Inverse of euler_to_rotmat via scipy's intrinsic Euler extraction."""
    m = np.asarray(matrices, dtype=np.float64)
    flat = m.reshape(-1, 3, 3)
    angles = Rotation.from_matrix(flat).as_euler(order.upper(), degrees=True)
    return angles.reshape(m.shape[:-2] + (3,))


def nearest_rotation(matrices):
    """Project 3x3 blocks onto SO(3) (polar decomposition via SVD)."""
    m = np.asarray(matrices, dtype=np.float64)
    flat = m.reshape(-1, 3, 3)
    u, _, vt = np.linalg.svd(flat)
    det = np.linalg.det(u @ vt)
    u = u.copy()
    u[det < 0, :, -1] *= -1.0
    return (u @ vt).reshape(m.shape)


# ---------------------------------------------------------------------------
# kinematics

def local_rotation_matrices(clip):
    """T x J x 3 x 3 stack of per-joint local rotations."""
    t, j = clip.local_rotations.shape[:2]
    out = np.empty((t, j, 3, 3))
    for k in range(j):
        out[:, k] = euler_to_rotmat(clip.local_rotations[:, k], clip.skeleton.orders[k])
    return out


def forward_kinematics(clip, return_rotations=False):
    """World joint positions (T x J x 3); optionally world rotations too."""
    sk = clip.skeleton
    local = local_rotation_matrices(clip)
    t, j = local.shape[:2]
    world_r = np.empty_like(local)
    positions = np.empty((t, j, 3))
    world_r[:, 0] = local[:, 0]
    positions[:, 0] = sk.offsets[0] + clip.root_positions
    for k in range(1, j):
        p = sk.parents[k]
        world_r[:, k] = world_r[:, p] @ local[:, k]
        positions[:, k] = positions[:, p] + (world_r[:, p] @ sk.offsets[k])
    if return_rotations:
        return positions, world_r
    return positions


def select_joints(clip, names):
    """Restrict a clip to a rooted subtree of joints given by name.

    Every kept joint's parent must also be kept (whole limbs are dropped,
    never interior joints), so forward kinematics of the result matches the
    original exactly.
    """
    sk = clip.skeleton
    index = {n: i for i, n in enumerate(sk.names)}
    missing = [n for n in names if n not in index]
    if missing:
        raise ConfigError(f"joints not in skeleton: {missing}")
    keep = sorted(index[n] for n in names)
    if keep[0] != 0:
        raise ConfigError("joint selection must include the root")
    keep_set = set(keep)
    remap = {}
    for j in keep:
        p = sk.parents[j]
        if p is not None and p not in keep_set:
            raise ConfigError(
                f"joint '{sk.names[j]}' kept but its parent '{sk.names[p]}' dropped; "
                "selection must form a rooted subtree"
            )
        remap[j] = len(remap)
    new_parents = [None if sk.parents[j] is None else remap[sk.parents[j]] for j in keep]
    new_ends = [(remap[p], off.copy()) for p, off in sk.end_sites if p in keep_set]
    new_sk = Skeleton(
        [sk.names[j] for j in keep],
        new_parents,
        sk.offsets[keep].copy(),
        [sk.orders[j] for j in keep],
        new_ends,
    )
    return MotionClip(new_sk, clip.fps, clip.root_positions.copy(), clip.local_rotations[:, keep].copy())


# ---------------------------------------------------------------------------
# root normalization

def root_normalize(clip, left_joint, right_joint, min_facing_norm=1e-9):
    """Rotate a clip so its mean facing direction points along +Z and
    translate so the frame-0 root sits at the horizontal origin.

    Facing is the horizontal projection of (left shoulder - right shoulder)
    crossed with world up, averaged over frames. Returns (clip, degenerate):
    degenerate is True when the facing projection vanished and only the
    translation was applied.
    """
    sk = clip.skeleton
    index = {n: i for i, n in enumerate(sk.names)}
    for name in (left_joint, right_joint):
        if name not in index:
            raise ConfigError(f"facing joint '{name}' not in skeleton")
    positions = forward_kinematics(clip)
    shoulder = positions[:, index[left_joint]] - positions[:, index[right_joint]]
    up = np.array([0.0, 1.0, 0.0])
    facing = np.cross(shoulder, up).mean(axis=0)
    facing[1] = 0.0
    norm = np.linalg.norm(facing)
    degenerate = norm < min_facing_norm
    if degenerate:
        rot = np.eye(3)
    else:
        theta = np.arctan2(facing[0], facing[2])
        c, s = np.cos(-theta), np.sin(-theta)
        rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])

    world_root = sk.offsets[0] + clip.root_positions
    new_world_root = world_root @ rot.T
    shift = np.array([new_world_root[0, 0], 0.0, new_world_root[0, 2]])
    new_root_positions = new_world_root - shift - sk.offsets[0]

    new_rotations = clip.local_rotations.copy()
    root_world = euler_to_rotmat(clip.local_rotations[:, 0], sk.orders[0])
    new_rotations[:, 0] = rotmat_to_euler(rot[None] @ root_world, sk.orders[0])
    out = MotionClip(sk, clip.fps, new_root_positions, new_rotations)
    return out, degenerate
