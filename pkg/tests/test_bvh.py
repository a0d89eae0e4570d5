import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from gesturegen import bvh, synth
from gesturegen.errors import ConfigError, ParseError

TWO_JOINT_BVH = """\
HIERARCHY
ROOT Hips
{
  OFFSET 0.000000 90.000000 0.000000
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Spine
  {
    OFFSET 0.000000 10.500000 0.000000
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 0.000000 5.000000 0.000000
    }
  }
}
MOTION
Frames: 2
Frame Time: 0.0333333
1.000000 2.000000 3.000000 10.000000 20.000000 30.000000 -5.000000 0.000000 15.000000
1.100000 2.100000 3.100000 11.000000 21.000000 31.000000 -5.500000 0.500000 15.500000
"""


def clips_close(a, b, tol=1e-6):
    assert a.skeleton.names == b.skeleton.names
    assert a.skeleton.parents == b.skeleton.parents
    assert a.skeleton.orders == b.skeleton.orders
    assert np.allclose(a.skeleton.offsets, b.skeleton.offsets, atol=tol)
    assert abs(1.0 / a.fps - 1.0 / b.fps) < tol  # frame time is the stored value
    assert np.allclose(a.root_positions, b.root_positions, atol=tol)
    assert np.allclose(a.local_rotations, b.local_rotations, atol=tol)


# ---------------------------------------------------------------------------
# parsing

def test_parse_two_joint_fixture():
    clip = bvh.parse_bvh(TWO_JOINT_BVH)
    assert clip.frame_count == 2
    assert clip.skeleton.joint_count == 2
    assert clip.skeleton.names == ["Hips", "Spine"]
    assert clip.skeleton.parents == [None, 0]
    assert abs(clip.fps - 30.0) < 1e-3
    assert np.allclose(clip.root_positions[0], [1.0, 2.0, 3.0])
    assert np.allclose(clip.local_rotations[0, 0], [10.0, 20.0, 30.0])
    assert np.allclose(clip.local_rotations[1, 1], [-5.5, 0.5, 15.5])
    assert len(clip.skeleton.end_sites) == 1


def test_parse_reports_line_of_bad_row():
    broken = TWO_JOINT_BVH.replace(
        "1.100000 2.100000 3.100000 11.000000 21.000000 31.000000 -5.500000 0.500000 15.500000",
        "1.100000 2.100000",
    )
    with pytest.raises(ParseError, match="line 20"):
        bvh.parse_bvh(broken)


def test_parse_rejects_non_numeric_token():
    broken = TWO_JOINT_BVH.replace("20.000000", "twenty")
    with pytest.raises(ParseError, match="line"):
        bvh.parse_bvh(broken)


def test_parse_requires_motion_section():
    head = TWO_JOINT_BVH.split("MOTION")[0]
    with pytest.raises(ParseError, match="MOTION"):
        bvh.parse_bvh(head)


def test_parse_rejects_positions_off_root():
    broken = TWO_JOINT_BVH.replace(
        "CHANNELS 3 Zrotation Xrotation Yrotation",
        "CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation",
    )
    with pytest.raises(ParseError, match="root"):
        bvh.parse_bvh(broken)


# ---------------------------------------------------------------------------
# writing / round trip

def test_round_trip_fixture():
    first = bvh.parse_bvh(TWO_JOINT_BVH)
    second = bvh.parse_bvh(bvh.write_bvh(first))
    clips_close(first, second)


def test_round_trip_synthetic_clip():
    clip = synth.make_motion(np.random.default_rng(4), frames=37, yaw_deg=40.0)
    clips_close(clip, bvh.parse_bvh(bvh.write_bvh(clip)))


def test_single_frame_clip():
    clip = synth.make_motion(np.random.default_rng(0), frames=1)
    text = bvh.write_bvh(clip)
    assert "Frames: 1" in text
    clips_close(clip, bvh.parse_bvh(text))


def test_30fps_frame_time_string():
    clip = synth.make_motion(np.random.default_rng(1), frames=90, fps=30.0)
    assert "Frame Time: 0.0333333" in bvh.write_bvh(clip)


# ---------------------------------------------------------------------------
# rotation math

def test_zero_rotation_is_identity():
    for order in ("XYZ", "ZXY", "YZX", "ZYX"):
        assert np.allclose(bvh.euler_to_rotmat(np.zeros(3), order), np.eye(3))


def test_quarter_turn_about_z_maps_x_to_y():
    r = bvh.euler_to_rotmat(np.array([90.0, 0.0, 0.0]), "ZXY")
    assert np.allclose(r @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_rotation_inverse_is_transpose():
    rng = np.random.default_rng(8)
    for _ in range(100):
        angles = rng.uniform(-180, 180, size=3)
        r = bvh.euler_to_rotmat(angles, "ZXY")
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert abs(np.linalg.det(r) - 1.0) < 1e-12


@pytest.mark.parametrize("order", ["XYZ", "ZXY", "YXZ", "ZYX", "XZY", "YZX"])
def test_matches_scipy_intrinsic_convention(order):
    rng = np.random.default_rng(13)
    angles = rng.uniform(-170, 170, size=(20, 3))
    ours = bvh.euler_to_rotmat(angles, order)
    scipys = Rotation.from_euler(order.upper(), angles, degrees=True).as_matrix()
    assert np.allclose(ours, scipys, atol=1e-12)


def test_euler_round_trip():
    rng = np.random.default_rng(17)
    angles = rng.uniform(-80, 80, size=(50, 3))
    r = bvh.euler_to_rotmat(angles, "ZXY")
    back = bvh.euler_to_rotmat(bvh.rotmat_to_euler(r, "ZXY"), "ZXY")
    assert np.allclose(back, r, atol=1e-10)


def test_nearest_rotation_restores_noisy_blocks():
    rng = np.random.default_rng(19)
    r = bvh.euler_to_rotmat(rng.uniform(-90, 90, size=(8, 3)), "ZXY")
    noisy = r + rng.normal(scale=1e-4, size=r.shape)
    fixed = bvh.nearest_rotation(noisy)
    assert np.allclose(fixed @ np.swapaxes(fixed, 1, 2), np.eye(3), atol=1e-12)
    assert np.allclose(fixed, r, atol=1e-3)


# ---------------------------------------------------------------------------
# forward kinematics

def _toy_chain(rotations, root_positions=None):
    sk = bvh.Skeleton(
        ["a", "b", "c"],
        [None, 0, 1],
        np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]),
        ["ZXY"] * 3,
    )
    t = rotations.shape[0]
    if root_positions is None:
        root_positions = np.zeros((t, 3))
    return bvh.MotionClip(sk, 30.0, root_positions, rotations)


def test_fk_zero_rotations_sums_offsets():
    clip = _toy_chain(np.zeros((2, 3, 3)), root_positions=np.array([[1.0, 0, 0], [1.0, 0, 0]]))
    pos = bvh.forward_kinematics(clip)
    assert np.allclose(pos[0], [[1, 0, 0], [3, 0, 0], [6, 0, 0]])


def test_fk_root_rotation_rotates_world():
    rot = np.zeros((1, 3, 3))
    rot[0, 0] = [90.0, 0.0, 0.0]  # ZXY order: 90 degrees about Z
    pos = bvh.forward_kinematics(_toy_chain(rot))
    assert np.allclose(pos[0], [[0, 0, 0], [0, 2, 0], [0, 5, 0]], atol=1e-12)


def test_fk_bone_lengths_constant():
    clip = synth.make_motion(np.random.default_rng(23), frames=40, yaw_deg=-60.0)
    pos = bvh.forward_kinematics(clip)
    sk = clip.skeleton
    for j in range(1, sk.joint_count):
        lengths = np.linalg.norm(pos[:, j] - pos[:, sk.parents[j]], axis=1)
        assert np.allclose(lengths, np.linalg.norm(sk.offsets[j]), atol=1e-9)


# ---------------------------------------------------------------------------
# joint selection

def test_select_joints_preserves_fk():
    clip = synth.make_motion(np.random.default_rng(29), frames=10)
    sub = bvh.select_joints(clip, synth.UPPER_BODY_JOINTS)
    assert sub.skeleton.joint_count == 18
    full = bvh.forward_kinematics(clip)
    kept = [clip.skeleton.names.index(n) for n in sub.skeleton.names]
    assert np.allclose(bvh.forward_kinematics(sub), full[:, kept], atol=1e-12)


def test_select_joints_rejects_broken_subtree():
    clip = synth.make_motion(np.random.default_rng(31), frames=3)
    names = [n for n in synth.UPPER_BODY_JOINTS if n != "Spine1"]
    with pytest.raises(ConfigError, match="subtree"):
        bvh.select_joints(clip, names)


# ---------------------------------------------------------------------------
# root normalization

def _facing_direction(clip):
    pos = bvh.forward_kinematics(clip)
    names = clip.skeleton.names
    v = pos[:, names.index(synth.LEFT_FACING_JOINT)] - pos[:, names.index(synth.RIGHT_FACING_JOINT)]
    f = np.cross(v, [0.0, 1.0, 0.0]).mean(axis=0)
    f[1] = 0.0
    return f / np.linalg.norm(f)


def test_root_normalize_fixed_point():
    clip = synth.make_motion(np.random.default_rng(37), frames=20, yaw_deg=0.0, position=(0, 0))
    normed, warned = bvh.root_normalize(clip, synth.LEFT_FACING_JOINT, synth.RIGHT_FACING_JOINT)
    assert not warned
    twice, _ = bvh.root_normalize(normed, synth.LEFT_FACING_JOINT, synth.RIGHT_FACING_JOINT)
    assert np.allclose(twice.root_positions, normed.root_positions, atol=1e-9)
    assert np.allclose(twice.local_rotations, normed.local_rotations, atol=1e-9)


def test_root_normalize_aligns_facing_and_preserves_distances():
    clip = synth.make_motion(np.random.default_rng(41), frames=25, yaw_deg=90.0, position=(12, -4))
    normed, warned = bvh.root_normalize(clip, synth.LEFT_FACING_JOINT, synth.RIGHT_FACING_JOINT)
    assert not warned
    assert np.allclose(_facing_direction(normed), [0.0, 0.0, 1.0], atol=1e-9)

    before = bvh.forward_kinematics(clip)
    after = bvh.forward_kinematics(normed)
    d_before = np.linalg.norm(before[:, :, None] - before[:, None, :], axis=-1)
    d_after = np.linalg.norm(after[:, :, None] - after[:, None, :], axis=-1)
    assert np.allclose(d_before, d_after, atol=1e-9)
    # frame-0 root lands on the horizontal origin
    root0 = after[0, 0]
    assert abs(root0[0]) < 1e-9 and abs(root0[2]) < 1e-9


def test_root_normalize_makes_orientations_agree():
    rng = np.random.default_rng(43)
    base = synth.make_motion(rng, frames=30, yaw_deg=0.0, position=(0, 0))

    def with_yaw(yaw, pos):
        rotations = base.local_rotations.copy()
        r = bvh.euler_to_rotmat(np.array([0.0, 0.0, yaw]), "ZXY")
        root = bvh.euler_to_rotmat(base.local_rotations[:, 0], "ZXY")
        rotations[:, 0] = bvh.rotmat_to_euler(r[None] @ root, "ZXY")
        world = base.skeleton.offsets[0] + base.root_positions
        moved = world @ r.T + np.array([pos[0], 0.0, pos[1]]) - base.skeleton.offsets[0]
        return bvh.MotionClip(base.skeleton, base.fps, moved, rotations)

    a, _ = bvh.root_normalize(with_yaw(70.0, (5, 9)), synth.LEFT_FACING_JOINT, synth.RIGHT_FACING_JOINT)
    b, _ = bvh.root_normalize(with_yaw(-120.0, (-8, 2)), synth.LEFT_FACING_JOINT, synth.RIGHT_FACING_JOINT)
    assert np.allclose(bvh.forward_kinematics(a), bvh.forward_kinematics(b), atol=1e-6)
