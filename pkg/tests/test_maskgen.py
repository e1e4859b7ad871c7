"""Target-map generation against brute-force per-pixel oracles."""

import math

import numpy as np
import pytest

from limbpose.errors import AnnotationError, DegenerateConnectionError
from limbpose.maskgen import (
    build_targets,
    connection_detection_mask,
    connection_regression_map,
    joint_detection_mask,
    joint_regression_map,
)
from limbpose.skeleton import ConnectionId, JointId, channel_index
from limbpose.types import Annotation, JointAnnotation, MapKind, Visibility

from _oracles import circle_mask_oracle, rect_mask_oracle


def _annotation(width=64, height=48, overrides=None):
    # A fully visible layout, roughly anatomical, comfortably in-bounds.
    base = {
        JointId.RIGHT_SHOULDER: (22, 12),
        JointId.RIGHT_ELBOW: (14, 18),
        JointId.RIGHT_WRIST: (10, 26),
        JointId.LEFT_SHOULDER: (42, 12),
        JointId.LEFT_ELBOW: (50, 18),
        JointId.LEFT_WRIST: (54, 26),
        JointId.RIGHT_HIP: (26, 30),
        JointId.RIGHT_KNEE: (22, 38),
        JointId.RIGHT_ANKLE: (20, 44),
        JointId.LEFT_HIP: (38, 30),
        JointId.LEFT_KNEE: (42, 38),
        JointId.LEFT_ANKLE: (44, 44),
    }
    joints = {}
    for joint, (x, y) in base.items():
        if overrides and joint in overrides:
            joints[joint] = overrides[joint]
        else:
            joints[joint] = JointAnnotation(float(x), float(y))
    return Annotation(video="v", frame=0, width=width, height=height, joints=joints)


def test_unit_disc_is_the_five_pixel_cross():
    mask = joint_detection_mask((10, 10), 1, 32, 32)
    expected = {(10, 10), (9, 10), (11, 10), (10, 9), (10, 11)}
    got = {(int(x), int(y)) for y, x in zip(*np.nonzero(mask))}
    assert got == expected


def test_corner_disc_matches_brute_force_quarter():
    mask = joint_detection_mask((0, 0), 6, 32, 32)
    oracle = circle_mask_oracle((0, 0), 6, 32, 32)
    assert np.array_equal(mask, oracle)
    # Clipped at the border: nothing outside the first quadrant survives.
    assert mask[:7, :7].sum() == mask.sum()


def test_interior_disc_count_matches_brute_force():
    mask = joint_detection_mask((16, 16), 6, 32, 32)
    oracle = circle_mask_oracle((16, 16), 6, 32, 32)
    assert np.array_equal(mask, oracle)
    assert mask.sum() == oracle.sum()


def test_horizontal_rectangle_matches_brute_force():
    mask = connection_detection_mask((5, 10), (15, 10), 2, 32, 32)
    oracle = rect_mask_oracle((5, 10), (15, 10), 2, 32, 32)
    assert np.array_equal(mask, oracle)
    # Rows 9-11 between columns 5 and 15, nothing else.
    assert mask[9:12, 5:16].sum() == mask.sum()
    assert mask[10, 5] == 1 and mask[10, 15] == 1


def test_thin_rectangle_converges_to_the_segment_line():
    mask = connection_detection_mask((5, 10), (15, 10), 1e-9, 32, 32)
    got = {(int(x), int(y)) for y, x in zip(*np.nonzero(mask))}
    assert got == {(x, 10) for x in range(5, 16)}


def test_diagonal_rectangle_symmetric_across_the_segment():
    # Reflection across the 45-degree line through (8,8) swaps x and y.
    mask = connection_detection_mask((8, 8), (20, 20), 4, 32, 32)
    assert np.array_equal(mask, mask.T)


def test_rectangle_is_endpoint_order_invariant():
    a = connection_detection_mask((3, 4), (17, 11), 3, 24, 24)
    b = connection_detection_mask((17, 11), (3, 4), 3, 24, 24)
    assert np.array_equal(a, b)


def test_degenerate_connection_raises():
    with pytest.raises(DegenerateConnectionError):
        connection_detection_mask((5, 5), (5, 5), 2, 16, 16)
    with pytest.raises(DegenerateConnectionError):
        connection_regression_map((5, 5), (5, 5), 2, 16, 16)


def test_masks_match_oracle_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(25):
        r = float(rng.choice([1, 3, 6]))
        cx, cy = rng.uniform(-4, 36, size=2)
        mask = joint_detection_mask((cx, cy), r, 32, 32)
        assert np.array_equal(mask, circle_mask_oracle((cx, cy), r, 32, 32))
        p1 = tuple(rng.uniform(0, 32, size=2))
        p2 = tuple(rng.uniform(0, 32, size=2))
        if p1 == p2:
            continue
        mask = connection_detection_mask(p1, p2, r, 32, 32)
        assert np.array_equal(mask, rect_mask_oracle(p1, p2, r, 32, 32))


def test_shrinking_radius_never_grows_support():
    rng = np.random.default_rng(11)
    for _ in range(10):
        cx, cy = rng.uniform(4, 28, size=2)
        big = joint_detection_mask((cx, cy), 6, 32, 32)
        small = joint_detection_mask((cx, cy), 3, 32, 32)
        assert np.all(small <= big)


def test_gaussian_peak_and_sigma_falloff():
    # sigma defaults to 3 r; at distance sigma the value is exp(-1/2).
    r = 2.0
    sigma = 3.0 * r
    grid = joint_regression_map((10, 10), r, 32, 32)
    assert grid[10, 10] == 1.0
    assert grid[10, 16] == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert grid[10, 16] == pytest.approx(0.6065, abs=5e-5)


def test_gaussian_radially_monotone_from_center():
    grid = joint_regression_map((16, 16), 2, 32, 32)
    row = grid[16, 16:]
    assert np.all(np.diff(row) <= 0)
    col = grid[16:, 16]
    assert np.all(np.diff(col) <= 0)


def test_gaussian_truncation_zeroes_far_values():
    grid = joint_regression_map((16, 16), 2, 32, 32, truncate_radius=5.0)
    assert grid[16, 22] == 0.0
    assert grid[16, 21] > 0.0


def test_connection_gaussian_midpoint_and_falloff():
    # Horizontal segment of length 20: midpoint at x=15; sigma = 3 r = 6.
    r = 2.0
    grid = connection_regression_map((5, 10), (25, 10), r, 32, 40)
    assert grid[10, 15] == 1.0
    assert grid[10, 21] == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert grid[10, 9] == pytest.approx(math.exp(-0.5), abs=1e-12)


def test_connection_gaussian_endpoints_equal():
    grid = connection_regression_map((5, 10), (25, 10), 2, 32, 40)
    assert grid[10, 5] == pytest.approx(grid[10, 25], abs=1e-12)


def test_connection_gaussian_support_equals_binary_mask():
    grid = connection_regression_map((6, 6), (20, 14), 3, 28, 28)
    mask = connection_detection_mask((6, 6), (20, 14), 3, 28, 28)
    assert np.array_equal((grid > 0).astype(np.uint8), mask)


def test_build_targets_full_visibility_fills_all_channels():
    stack = build_targets(_annotation(), 3, MapKind.BINARY)
    assert stack.data.shape == (20, 48, 64)
    for c in range(20):
        assert stack.data[c].sum() > 0


def test_build_targets_zeroes_nonvisible_joint_and_its_connection():
    ann = _annotation(
        overrides={JointId.LEFT_ANKLE: JointAnnotation(70.0, 50.0, Visibility.OUT_OF_FRAME)}
    )
    stack = build_targets(ann, 3, MapKind.BINARY)
    full = build_targets(_annotation(), 3, MapKind.BINARY)
    assert stack.channel(JointId.LEFT_ANKLE).sum() == 0
    assert stack.channel(ConnectionId.LEFT_KNEE_ANKLE).sum() == 0
    for c in range(20):
        if c in (channel_index(JointId.LEFT_ANKLE), channel_index(ConnectionId.LEFT_KNEE_ANKLE)):
            continue
        assert np.array_equal(stack.data[c], full.data[c])


def test_build_targets_channel_layout_matches_channel_index():
    ann = _annotation()
    stack = build_targets(ann, 3, MapKind.BINARY)
    for joint in JointId:
        direct = joint_detection_mask(ann.point(joint), 3, ann.height, ann.width)
        assert np.array_equal(stack.data[channel_index(joint)], direct)


def test_build_targets_gaussian_values_in_unit_interval():
    stack = build_targets(_annotation(), 3, MapKind.GAUSSIAN)
    stack.validate_values()
    assert stack.data.min() >= 0.0 and stack.data.max() <= 1.0


def test_build_targets_resolution_mismatch_raises():
    with pytest.raises(AnnotationError):
        build_targets(_annotation(), 3, MapKind.BINARY, height=32, width=32)


def test_build_targets_rejects_output_kind():
    with pytest.raises(ValueError):
        build_targets(_annotation(), 3, MapKind.OUTPUT)
