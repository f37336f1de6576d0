"""
Tests for bed fitting, the side rule and signed distances.
"""

import itertools
import math

import numpy as np
import pytest

from conftest import AXIS_BED_CONTOUR, build_skeleton, make_frame, skeleton_rows
from utils.errors import DegenerateContour, MissingLandmark, NonFinite, OutOfBounds
from utils.geometry_core import (
    NUM_KEYPOINTS,
    Point2,
    RoiTransform,
    Side,
    Skeleton,
    apply_roi,
    bed_roi,
    determine_side,
    fit_bed_model,
    full_frame_roi,
    head_distance,
    head_point,
    invert_roi,
    knee_distances,
    mirror_skeleton,
    signed_distance,
)

TRIALS = 10_000


def random_rectangle(rng, center_range=500.0):
    width = rng.uniform(50.0, 300.0)
    length = width + rng.uniform(20.0, 400.0)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    center = rng.uniform(-center_range, center_range, 2)
    axis = np.array([math.cos(theta), math.sin(theta)])
    lateral = np.array([-axis[1], axis[0]])
    corners = np.array([
        center + sx * axis * length / 2.0 + sy * lateral * width / 2.0
        for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))
    ])
    return corners, width, length


def random_skeleton(rng, corners, spread=1.3):
    center = corners.mean(axis=0)
    radius = np.abs(corners - center).max() * spread
    xy = center + rng.uniform(-radius, radius, (NUM_KEYPOINTS, 2))
    return Skeleton.from_rows([(x, y, 1.0) for x, y in xy])


def transform_skeleton(skeleton, fn):
    return Skeleton.from_rows([(*fn(np.array([x, y])), c) for x, y, c in skeleton.rows()])


def point_line_distance(p, a, b):
    a, b, p = np.asarray(a), np.asarray(b), np.asarray(p)
    t = np.dot(p - a, b - a) / np.dot(b - a, b - a)
    return float(np.linalg.norm(p - (a + t * (b - a))))


def same_side(p, q, a, b):
    cross = lambda r: (b[0] - a[0]) * (r[1] - a[1]) - (b[1] - a[1]) * (r[0] - a[0])
    return cross(p) * cross(q) > 0


# fit_bed_model

def test_axis_aligned_rectangle(axis_bed):
    assert axis_bed.long_axis_length == pytest.approx(200.0)
    assert axis_bed.short_axis_length == pytest.approx(100.0)
    assert axis_bed.middle_line.start.x == pytest.approx(50.0)
    assert axis_bed.middle_line.start.y == pytest.approx(0.0, abs=1e-9)
    assert axis_bed.middle_line.end.x == pytest.approx(50.0)
    assert axis_bed.middle_line.end.y == pytest.approx(200.0)
    assert axis_bed.left_line.start.x == pytest.approx(0.0, abs=1e-9)
    assert axis_bed.right_line.start.x == pytest.approx(100.0)


def test_corners_counter_clockwise(axis_bed):
    xy = np.array(axis_bed.corners)
    area = 0.5 * np.sum(xy[:, 0] * np.roll(xy[:, 1], -1) - np.roll(xy[:, 0], -1) * xy[:, 1])
    assert area > 0
    assert axis_bed.polygon().is_valid


def test_rotated_rectangle_keeps_axis_lengths():
    pts = np.array(AXIS_BED_CONTOUR)
    c = pts.mean(axis=0)
    a = math.radians(30.0)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    bed = fit_bed_model((pts - c) @ rot.T + c)
    assert bed.long_axis_length == pytest.approx(200.0, abs=1e-6)
    assert bed.short_axis_length == pytest.approx(100.0, abs=1e-6)


def test_middle_line_equidistant(rng):
    for _ in range(200):
        corners, _, _ = random_rectangle(rng)
        bed = fit_bed_model(corners)
        for end in (bed.middle_line.start, bed.middle_line.end):
            d_left = signed_distance(end, bed.left_line, bed)
            d_right = signed_distance(end, bed.right_line, bed)
            assert d_left == pytest.approx(d_right, rel=1e-6)
        assert bed.long_axis_length >= bed.short_axis_length > 0


def _jittered_contour(rng, corners, jitter, per_edge=16):
    steps = np.arange(per_edge) / per_edge
    points = np.vstack([
        corners[i] + steps[:, None] * (corners[(i + 1) % 4] - corners[i])
        for i in range(4)
    ])
    return points + rng.uniform(-jitter, jitter, points.shape)


def _bed_like_rectangle(rng):
    width = rng.uniform(200.0, 500.0)
    length = width + rng.uniform(100.0, 400.0)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    center = rng.uniform(-500.0, 500.0, 2)
    axis = np.array([math.cos(theta), math.sin(theta)])
    lateral = np.array([-axis[1], axis[0]])
    corners = np.array([
        center + sx * axis * length / 2.0 + sy * lateral * width / 2.0
        for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))
    ])
    return corners, width, length


def test_noisy_contour_close_to_truth():
    rng = np.random.default_rng(2)
    jitter = 1.0
    for _ in range(1000):
        corners, width, length = _bed_like_rectangle(rng)
        bed = fit_bed_model(_jittered_contour(rng, corners, jitter))
        # the minimum-area rectangle may tilt by a fraction of a degree under jitter
        assert abs(bed.long_axis_length - length) <= 3.0 * jitter
        assert abs(bed.short_axis_length - width) <= 3.0 * jitter


def test_noisy_contour_is_minimum_area():
    rng = np.random.default_rng(8)
    angles = np.radians(np.arange(0.0, 90.0, 0.05))
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    normals = np.column_stack([-directions[:, 1], directions[:, 0]])
    for _ in range(100):
        corners, _, _ = _bed_like_rectangle(rng)
        points = _jittered_contour(rng, corners, 1.0)
        bed = fit_bed_model(points)
        pu, pn = points @ directions.T, points @ normals.T
        scanned = (pu.max(axis=0) - pu.min(axis=0)) * (pn.max(axis=0) - pn.min(axis=0))
        assert bed.long_axis_length * bed.short_axis_length <= scanned.min() * (1.0 + 1e-9)


@pytest.mark.parametrize('contour', [
    [(0, 0), (1, 1), (2, 2), (3, 3)],
    [(0, 0), (1, 0), (2, 0), (5, 0), (9, 0)],
    [(0, 0), (10, 0), (10, 10)],
])
def test_degenerate_contour(contour):
    with pytest.raises(DegenerateContour):
        fit_bed_model(contour)


def test_non_finite_contour():
    with pytest.raises(NonFinite):
        fit_bed_model([(0, 0), (100, 0), (100, float('nan')), (0, 200)])


# signed_distance

def test_signed_distance_examples(axis_bed):
    assert signed_distance(Point2(0.0, 73.0), axis_bed.left_line, axis_bed) == pytest.approx(0.0, abs=1e-12)
    assert signed_distance(Point2(50.0, 100.0), axis_bed.left_line, axis_bed) == pytest.approx(50.0)
    assert signed_distance(Point2(50.0, 100.0), axis_bed.right_line, axis_bed) == pytest.approx(50.0)
    assert signed_distance(Point2(-10.0, 50.0), axis_bed.left_line, axis_bed) == pytest.approx(-10.0)


def test_signed_distance_rejects_nan(axis_bed):
    with pytest.raises(NonFinite):
        signed_distance(Point2(float('inf'), 0.0), axis_bed.left_line, axis_bed)


def test_signed_distance_sign_and_magnitude():
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(TRIALS // 100):
        corners, _, length = random_rectangle(rng)
        bed = fit_bed_model(corners)
        centroid = tuple(bed.centroid)
        for p in corners.mean(axis=0) + rng.uniform(-length, length, (100, 2)):
            for line in (bed.left_line, bed.right_line):
                a, b = tuple(line.start), tuple(line.end)
                expected = point_line_distance(p, a, b)
                d = signed_distance(Point2(*p), line, bed)
                assert abs(d) == pytest.approx(expected, rel=1e-9, abs=1e-9)
                if expected > 1e-9:
                    assert (d > 0) == same_side(p, centroid, a, b)
                checked += 1
    assert checked == 2 * TRIALS


# head_point

def test_head_point_prefers_nose():
    rows = skeleton_rows((40.0, 30.0), (25.0, 120.0), (30.0, 125.0))
    rows[0][2] = 0.9
    assert head_point(Skeleton.from_rows(rows)) == Point2(40.0, 30.0)


def test_head_point_eye_fallback():
    rows = skeleton_rows((40.0, 30.0), (25.0, 120.0), (30.0, 125.0))
    rows[0][2] = 0.1
    rows[1] = [38.0, 28.0, 0.8]
    rows[2] = [42.0, 28.0, 0.8]
    rows[3][2] = 0.0
    rows[4][2] = 0.0
    head = head_point(Skeleton.from_rows(rows), min_confidence=0.5)
    assert head.x == pytest.approx(40.0)
    assert head.y == pytest.approx(28.0)


def test_head_point_missing():
    rows = skeleton_rows((40.0, 30.0), (25.0, 120.0), (30.0, 125.0))
    for i in range(5):
        rows[i][2] = 0.0
    with pytest.raises(MissingLandmark):
        head_point(Skeleton.from_rows(rows))


# determine_side

def test_side_left_example(axis_bed):
    skeleton = build_skeleton((20.0, 50.0), (25.0, 120.0), (30.0, 125.0))
    assert determine_side(skeleton, axis_bed) is Side.LEFT


def test_side_on_middle_line_is_indeterminate(axis_bed):
    skeleton = build_skeleton((50.0, 10.0), (50.0, 120.0), (50.0, 125.0))
    assert determine_side(skeleton, axis_bed) is Side.INDETERMINATE


@pytest.mark.parametrize('assignment', list(itertools.product('LR', repeat=3)))
def test_side_truth_table(axis_bed, assignment):
    x = {'L': 20.0, 'R': 80.0}
    head, knee_a, knee_b = assignment
    skeleton = build_skeleton((x[head], 30.0), (x[knee_a], 120.0), (x[knee_b], 125.0))
    expected = {('L', 'L', 'L'): Side.LEFT, ('R', 'R', 'R'): Side.RIGHT}.get(assignment, Side.INDETERMINATE)
    assert determine_side(skeleton, axis_bed) is expected


def test_side_low_knee_confidence(axis_bed):
    rows = skeleton_rows((20.0, 50.0), (25.0, 120.0), (30.0, 125.0))
    rows[14][2] = 0.01
    with pytest.raises(MissingLandmark):
        determine_side(Skeleton.from_rows(rows), axis_bed)


# knee_distances / head_distance

def test_knees_at_centroid(axis_bed):
    skeleton = build_skeleton((20.0, 30.0), (50.0, 100.0), (50.0, 100.0))
    assert knee_distances(skeleton, axis_bed, Side.LEFT) == pytest.approx((50.0, 50.0))


def test_knee_outside_is_negative(axis_bed):
    skeleton = build_skeleton((20.0, 30.0), (-5.0, 100.0), (10.0, 110.0))
    assert knee_distances(skeleton, axis_bed, Side.LEFT) == pytest.approx((-5.0, 10.0))


def test_indeterminate_uses_nearer_edge(axis_bed):
    skeleton = build_skeleton((20.0, 30.0), (95.0, 100.0), (50.0, 100.0))
    side = determine_side(skeleton, axis_bed)
    assert side is Side.INDETERMINATE
    assert knee_distances(skeleton, axis_bed, side) == pytest.approx((5.0, 50.0))
    assert head_distance(skeleton, axis_bed, side) == pytest.approx(20.0)


def test_right_side_uses_right_line(axis_bed):
    skeleton = build_skeleton((70.0, 30.0), (110.0, 100.0), (90.0, 100.0))
    side = determine_side(skeleton, axis_bed)
    assert side is Side.RIGHT
    assert knee_distances(skeleton, axis_bed, side) == pytest.approx((-10.0, 10.0))
    assert head_distance(skeleton, axis_bed, side) == pytest.approx(30.0)


# properties

def _distances(skeleton, bed):
    side = determine_side(skeleton, bed)
    return side, knee_distances(skeleton, bed, side), head_distance(skeleton, bed, side)


def test_mirror_symmetry():
    rng = np.random.default_rng(4)
    swapped = {Side.LEFT: Side.RIGHT, Side.RIGHT: Side.LEFT, Side.INDETERMINATE: Side.INDETERMINATE}
    for _ in range(TRIALS // 10):
        corners, _, _ = random_rectangle(rng)
        bed = fit_bed_model(corners)
        c = np.array(bed.centroid)
        u = np.array(bed.middle_line.unit())
        lateral = np.array([-u[1], u[0]])

        def reflect(p):
            return p - 2.0 * np.dot(p - c, lateral) * lateral

        mirrored_bed = fit_bed_model(np.array([reflect(p) for p in corners]))
        for _ in range(10):
            skeleton = random_skeleton(rng, corners)
            side, (d_left, d_right), d_head = _distances(skeleton, bed)
            mirrored = mirror_skeleton(transform_skeleton(skeleton, reflect))
            m_side, (m_left, m_right), m_head = _distances(mirrored, mirrored_bed)
            assert m_side is swapped[side]
            assert m_left == pytest.approx(d_right, abs=1e-6)
            assert m_right == pytest.approx(d_left, abs=1e-6)
            assert m_head == pytest.approx(d_head, abs=1e-6)


def test_rigid_motion_equivariance():
    rng = np.random.default_rng(5)
    for _ in range(TRIALS // 10):
        corners, _, _ = random_rectangle(rng)
        bed = fit_bed_model(corners)
        a = rng.uniform(0.0, 2.0 * math.pi)
        rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        shift = rng.uniform(-300.0, 300.0, 2)

        def move(p):
            return rot @ p + shift

        moved_bed = fit_bed_model(np.array([move(p) for p in corners]))
        for _ in range(10):
            skeleton = random_skeleton(rng, corners)
            _, knees, head = _distances(skeleton, bed)
            _, moved_knees, moved_head = _distances(transform_skeleton(skeleton, move), moved_bed)
            assert moved_knees == pytest.approx(knees, abs=1e-6)
            assert moved_head == pytest.approx(head, abs=1e-6)


def test_scaling_linearity():
    rng = np.random.default_rng(6)
    for _ in range(TRIALS // 10):
        corners, _, _ = random_rectangle(rng)
        bed = fit_bed_model(corners)
        s = rng.uniform(0.2, 5.0)
        scaled_bed = fit_bed_model(corners * s)
        for _ in range(10):
            skeleton = random_skeleton(rng, corners)
            side, knees, head = _distances(skeleton, bed)
            s_side, s_knees, s_head = _distances(transform_skeleton(skeleton, lambda p: p * s), scaled_bed)
            assert s_side is side
            assert s_knees == pytest.approx(tuple(k * s for k in knees), rel=1e-9, abs=1e-9)
            assert s_head == pytest.approx(head * s, rel=1e-9, abs=1e-9)


# ROI

def _roi_frame(contour, points, w, h):
    rows = [[x, y, 0.7] for x, y in points]
    rows += [[points[-1][0], points[-1][1], 0.7]] * (NUM_KEYPOINTS - len(rows))
    return make_frame(rows, contour=contour, image_w=w, image_h=h)


def test_identity_roi():
    frame = _roi_frame(((100, 100), (500, 100), (500, 700), (100, 700)), [(10.5, 20.25), (1080, 828)], 1080, 828)
    out = apply_roi(frame, full_frame_roi(frame))
    assert out.bed_contour == frame.bed_contour
    assert out.keypoints == frame.keypoints


def test_roi_halves_double_size_frame():
    frame = _roi_frame(((200, 200), (1000, 200), (1000, 1400), (200, 1400)), [(2160, 1656), (10, 30)], 2160, 1656)
    out = apply_roi(frame, full_frame_roi(frame))
    assert (out.image_w, out.image_h) == (1080, 828)
    assert out.keypoints[0] == (1080.0, 828.0, 0.7)
    assert out.keypoints[1] == (5.0, 15.0, 0.7)
    assert out.bed_contour[0] == (100.0, 100.0)


def test_roi_crop_corner_mapping():
    frame = _roi_frame(((150, 100), (600, 100), (600, 400), (150, 400)), [(100, 50), (640, 464)], 1000, 600)
    t = RoiTransform(1000, 600, Point2(100.0, 50.0), 540.0, 414.0)
    out = apply_roi(frame, t)
    assert out.keypoints[0][:2] == pytest.approx((0.0, 0.0))
    assert out.keypoints[1][:2] == pytest.approx((1080.0, 828.0))


def test_roi_contour_outside_crop():
    frame = _roi_frame(((50, 100), (600, 100), (600, 400), (50, 400)), [(100, 50)], 1000, 600)
    with pytest.raises(OutOfBounds):
        apply_roi(frame, RoiTransform(1000, 600, Point2(100.0, 50.0), 540.0, 414.0))


def test_roi_crop_outside_source():
    with pytest.raises(OutOfBounds):
        RoiTransform(1000, 600, Point2(500.0, 300.0), 540.0, 414.0)


def test_roi_inverse_is_identity():
    rng = np.random.default_rng(7)
    for _ in range(200):
        w, h = int(rng.integers(600, 3000)), int(rng.integers(400, 2000))
        x0, y0 = rng.uniform(0, w / 4), rng.uniform(0, h / 4)
        cw, ch = rng.uniform(w / 4, w - x0), rng.uniform(h / 4, h - y0)
        contour = [
            (x0 + cw * fx, y0 + ch * fy)
            for fx, fy in ((0.2, 0.2), (0.8, 0.2), (0.8, 0.8), (0.2, 0.8))
        ]
        points = list(zip(rng.uniform(0, w, NUM_KEYPOINTS), rng.uniform(0, h, NUM_KEYPOINTS)))
        frame = _roi_frame(contour, points, w, h)
        t = RoiTransform(w, h, Point2(x0, y0), cw, ch)
        back = invert_roi(apply_roi(frame, t), t)
        assert (back.image_w, back.image_h) == (w, h)
        np.testing.assert_allclose(np.array(back.bed_contour), np.array(frame.bed_contour), rtol=1e-9)
        np.testing.assert_allclose(np.array(back.keypoints), np.array(frame.keypoints), rtol=1e-9, atol=1e-9)


def test_bed_roi_contains_contour():
    frame = _roi_frame(((400, 300), (900, 300), (900, 1000), (400, 1000)), [(10, 10)], 1920, 1080)
    t = bed_roi(frame, margin=0.1)
    assert tuple(t.crop_origin) == pytest.approx((350.0, 230.0))
    assert t.crop_width == pytest.approx(600.0)
    assert t.crop_height == pytest.approx(840.0)
    out = apply_roi(frame, t)
    assert all(0 <= x <= 1080 and 0 <= y <= 828 for x, y in out.bed_contour)


@pytest.mark.parametrize('contour', [
    ((500, 100), (500, 300), (500, 500), (500, 700)),
    ((100, 400), (300, 400), (600, 400), (900, 400)),
])
def test_bed_roi_rejects_flat_contour(contour):
    frame = _roi_frame(contour, [(10, 10)], 1080, 828)
    with pytest.raises(DegenerateContour):
        bed_roi(frame)
