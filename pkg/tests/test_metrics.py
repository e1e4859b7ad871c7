"""Overlap metrics and per-limb RMSD against hand-verified cases."""

import math

import numpy as np
import pytest

from limbpose.decoding import LimbPose, LocatedJoint, PoseEstimate
from limbpose.errors import ShapeMismatchError
from limbpose.metrics import aggregate, binarize, confusion, dsc, limb_rmsd, recall
from limbpose.skeleton import LIMBS, JointId, LimbId
from limbpose.types import Annotation, JointAnnotation, Visibility

from _oracles import confusion_loop_oracle, dsc_oracle, recall_oracle


def _random_pair(rng, shape=(12, 17)):
    return (
        (rng.random(shape) > 0.6).astype(np.uint8),
        (rng.random(shape) > 0.6).astype(np.uint8),
    )


def test_confusion_matches_loop_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        pred, truth = _random_pair(rng)
        counts = confusion(pred, truth)
        assert (counts.tp, counts.fp, counts.fn) == confusion_loop_oracle(pred, truth)


def test_confusion_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        confusion(np.zeros((4, 4), dtype=np.uint8), np.zeros((4, 5), dtype=np.uint8))


def test_confusion_rejects_non_binary_values():
    with pytest.raises(ValueError):
        confusion(np.full((4, 4), 2, dtype=np.uint8), np.zeros((4, 4), dtype=np.uint8))


def test_dsc_identity_and_disjoint():
    a = np.zeros((8, 8), dtype=np.uint8)
    a[2:5, 2:5] = 1
    assert dsc(a, a) == 1.0
    b = np.zeros((8, 8), dtype=np.uint8)
    b[6:8, 6:8] = 1
    assert dsc(a, b) == 0.0


def test_dsc_hand_counts():
    # TP=50, FP=10, FN=30: 100 / 140.
    pred = np.zeros(200, dtype=np.uint8)
    truth = np.zeros(200, dtype=np.uint8)
    pred[:50] = 1
    truth[:50] = 1
    pred[50:60] = 1
    truth[60:90] = 1
    assert dsc(pred.reshape(10, 20), truth.reshape(10, 20)) == pytest.approx(
        100.0 / 140.0, abs=1e-15
    )


def test_dsc_empty_vs_empty_is_one():
    z = np.zeros((5, 5), dtype=np.uint8)
    assert dsc(z, z) == 1.0


def test_recall_hand_counts():
    pred = np.zeros(100, dtype=np.uint8)
    truth = np.zeros(100, dtype=np.uint8)
    pred[:50] = 1
    truth[:50] = 1
    truth[50:80] = 1
    assert recall(pred.reshape(10, 10), truth.reshape(10, 10)) == pytest.approx(0.625, abs=1e-15)


def test_recall_boundary_cases():
    z = np.zeros((6, 6), dtype=np.uint8)
    full = np.ones((6, 6), dtype=np.uint8)
    inner = np.zeros((6, 6), dtype=np.uint8)
    inner[2:4, 2:4] = 1
    assert recall(full, inner) == 1.0  # superset coverage
    assert recall(z, inner) == 0.0  # nothing found
    assert recall(inner, z) == 1.0  # empty ground truth


def test_metrics_match_oracles_on_random_pairs():
    rng = np.random.default_rng(19)
    for _ in range(30):
        pred, truth = _random_pair(rng)
        assert dsc(pred, truth) == pytest.approx(dsc_oracle(pred, truth), abs=1e-12)
        assert recall(pred, truth) == pytest.approx(recall_oracle(pred, truth), abs=1e-12)


def test_binarize_threshold_semantics():
    grid = np.array([[0.7, 0.7], [0.7, 0.7]])
    assert np.array_equal(binarize(grid, 0.5), np.ones((2, 2), dtype=np.uint8))
    mixed = np.array([[0.0, 0.2], [0.5, 0.9]])
    # Threshold comparison is inclusive.
    assert np.array_equal(binarize(mixed, 0.5), np.array([[0, 0], [1, 1]], dtype=np.uint8))
    # A tiny positive threshold recovers the support of a non-negative map.
    assert np.array_equal(binarize(mixed, 1e-12), np.array([[0, 1], [1, 1]], dtype=np.uint8))
    binary = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    assert np.array_equal(binarize(binary, 0.5), binary)


JOINT_LAYOUT = {
    JointId.RIGHT_SHOULDER: (22.0, 12.0),
    JointId.RIGHT_ELBOW: (14.0, 18.0),
    JointId.RIGHT_WRIST: (10.0, 26.0),
    JointId.LEFT_SHOULDER: (42.0, 12.0),
    JointId.LEFT_ELBOW: (50.0, 18.0),
    JointId.LEFT_WRIST: (54.0, 26.0),
    JointId.RIGHT_HIP: (26.0, 30.0),
    JointId.RIGHT_KNEE: (22.0, 38.0),
    JointId.RIGHT_ANKLE: (20.0, 44.0),
    JointId.LEFT_HIP: (38.0, 30.0),
    JointId.LEFT_KNEE: (42.0, 38.0),
    JointId.LEFT_ANKLE: (44.0, 44.0),
}


def _annotation(visibility=None):
    joints = {}
    for joint, (x, y) in JOINT_LAYOUT.items():
        vis = (visibility or {}).get(joint, Visibility.VISIBLE)
        joints[joint] = JointAnnotation(x, y, vis)
    return Annotation(video="v", frame=0, width=64, height=48, joints=joints)


def _estimate(positions):
    """PoseEstimate with the given JointId -> (x, y) positions; joints
    missing from the mapping stay unresolved."""
    limbs = {}
    for lm in LIMBS:
        located = {}
        for joint in lm.joints:
            if joint in positions:
                x, y = positions[joint]
                located[joint] = LocatedJoint(x, y, 1.0)
            else:
                located[joint] = None
        limbs[lm.limb_id] = LimbPose(
            joints=located, connection_scores={c: None for c in lm.connections}
        )
    return PoseEstimate(video="v", frame=0, limbs=limbs)


def test_rmsd_perfect_estimate_is_zero():
    ann = _annotation()
    est = _estimate(dict(JOINT_LAYOUT))
    for lm in LIMBS:
        assert limb_rmsd(est, ann, lm) == 0.0


def test_rmsd_uniform_offset_is_its_norm():
    # Every joint off by (3, 4): RMSD is exactly 5.
    ann = _annotation()
    est = _estimate({j: (x + 3.0, y + 4.0) for j, (x, y) in JOINT_LAYOUT.items()})
    for lm in LIMBS:
        assert limb_rmsd(est, ann, lm) == pytest.approx(5.0, abs=1e-9)


def test_rmsd_single_offset_joint():
    # One joint 6 px off, the other two exact: sqrt(36 / 3).
    ann = _annotation()
    positions = dict(JOINT_LAYOUT)
    x, y = positions[JointId.RIGHT_ELBOW]
    positions[JointId.RIGHT_ELBOW] = (x + 6.0, y)
    est = _estimate(positions)
    assert limb_rmsd(est, ann, LimbId.RIGHT_ARM) == pytest.approx(
        math.sqrt(36.0 / 3.0), abs=1e-9
    )
    assert limb_rmsd(est, ann, LimbId.RIGHT_ARM) == pytest.approx(3.4641, abs=5e-5)


def test_rmsd_missing_joint_takes_penalty():
    ann = _annotation()
    positions = dict(JOINT_LAYOUT)
    del positions[JointId.RIGHT_WRIST]
    est = _estimate(positions)
    diagonal = math.hypot(64, 48)
    expected = math.sqrt(diagonal**2 / 3.0)
    assert limb_rmsd(est, ann, LimbId.RIGHT_ARM) == pytest.approx(expected, abs=1e-9)
    # An explicit penalty overrides the diagonal default.
    assert limb_rmsd(est, ann, LimbId.RIGHT_ARM, penalty=9.0) == pytest.approx(
        math.sqrt(81.0 / 3.0), abs=1e-9
    )


def test_rmsd_skips_nonvisible_joints():
    vis = {JointId.RIGHT_WRIST: Visibility.OCCLUDED}
    ann = _annotation(visibility=vis)
    positions = dict(JOINT_LAYOUT)
    x, y = positions[JointId.RIGHT_WRIST]
    positions[JointId.RIGHT_WRIST] = (x + 50.0, y)  # wrong, but not visible
    est = _estimate(positions)
    assert limb_rmsd(est, ann, LimbId.RIGHT_ARM) == 0.0


def test_rmsd_undefined_when_no_limb_joint_visible():
    vis = {
        JointId.RIGHT_SHOULDER: Visibility.OCCLUDED,
        JointId.RIGHT_ELBOW: Visibility.OUT_OF_FRAME,
        JointId.RIGHT_WRIST: Visibility.OCCLUDED,
    }
    ann = _annotation(visibility=vis)
    est = _estimate(dict(JOINT_LAYOUT))
    assert limb_rmsd(est, ann, LimbId.RIGHT_ARM) is None


def test_aggregate_median_and_iqr():
    median, iqr = aggregate([1.0, 2.0, 3.0])
    assert median == 2.0
    assert iqr == pytest.approx(1.0, abs=1e-12)
    median, iqr = aggregate([5.0])
    assert median == 5.0
    assert iqr == 0.0


def test_aggregate_empty_raises():
    with pytest.raises(ValueError):
        aggregate([])
