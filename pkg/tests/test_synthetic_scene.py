"""
Tests for the synthetic scene generator.
"""

import numpy as np
import pytest

from conftest import build_skeleton
from utils.errors import InvalidParams
from utils.feature_engineering import FeatureSet, Label, samples_from_records, write_dataset
from utils.geometry_core import Point2, determine_side, fit_bed_model, knee_distances
from utils.synthetic_scene import (
    PostureTemplate,
    SceneParams,
    generate_dataset,
    generate_scene,
    oracle_label,
    sample_scene_params,
    templates_for,
)


def clean_params(posture, rng):
    return sample_scene_params(rng, posture)


def knee_bed_distances(frame):
    skeleton = frame.skeleton()
    bed = fit_bed_model(frame.bed_contour)
    return knee_distances(skeleton, bed, determine_side(skeleton, bed))


# oracle

def test_oracle_inside(axis_bed):
    skeleton = build_skeleton((20.0, 30.0), (30.0, 120.0), (40.0, 125.0))
    assert oracle_label(skeleton, axis_bed) is Label.NOT_AT_RISK


def test_oracle_knee_outside(axis_bed):
    skeleton = build_skeleton((20.0, 30.0), (-1.0, 120.0), (40.0, 125.0))
    assert oracle_label(skeleton, axis_bed) is Label.AT_RISK


def test_oracle_tau(axis_bed):
    skeleton = build_skeleton((20.0, 30.0), (5.0, 120.0), (40.0, 125.0))
    assert oracle_label(skeleton, axis_bed, tau=0.0) is Label.NOT_AT_RISK
    assert oracle_label(skeleton, axis_bed, tau=10.0) is Label.AT_RISK


# templates

def test_templates_for_labels():
    at_risk = templates_for(Label.AT_RISK)
    safe = templates_for(Label.NOT_AT_RISK)
    assert PostureTemplate.KNEE_OVER_EDGE in at_risk and PostureTemplate.KNEE_OVER_EDGE not in safe
    assert PostureTemplate.LYING_CENTER in safe and PostureTemplate.LYING_CENTER not in at_risk
    assert PostureTemplate.TURNING_AROUND in at_risk and PostureTemplate.TURNING_AROUND in safe


def test_lying_center_knees_well_inside(rng):
    for i in range(200):
        params = clean_params(PostureTemplate.LYING_CENTER, rng)
        frame, label = generate_scene(params, i)
        assert label is Label.NOT_AT_RISK
        for d in knee_bed_distances(frame):
            assert 0.3 * params.bed_width <= d <= 0.7 * params.bed_width


def test_knee_over_edge_is_at_risk(rng):
    for i in range(200):
        frame, label = generate_scene(clean_params(PostureTemplate.KNEE_OVER_EDGE, rng), i)
        assert label is Label.AT_RISK
        assert min(knee_bed_distances(frame)) < 0


@pytest.mark.parametrize('outside, expected', [(True, Label.AT_RISK), (False, Label.NOT_AT_RISK)])
def test_turning_around_follows_knee_outside(rng, outside, expected):
    for i in range(50):
        params = sample_scene_params(rng, PostureTemplate.TURNING_AROUND, knee_outside=outside)
        assert generate_scene(params, i)[1] is expected


@pytest.mark.parametrize('n_scenes', [1000, pytest.param(10000, marks=pytest.mark.slow)])
def test_thigh_length_and_frame_bounds(n_scenes):
    rng = np.random.default_rng(77)
    postures = list(PostureTemplate)
    for i in range(n_scenes):
        posture = postures[int(rng.integers(len(postures)))]
        params = sample_scene_params(rng, posture)
        frame, _ = generate_scene(params, i)
        xy = np.array([(x, y) for x, y, _ in frame.keypoints])
        assert np.all((xy[:, 0] >= 0) & (xy[:, 0] <= 1080))
        assert np.all((xy[:, 1] >= 0) & (xy[:, 1] <= 828))
        L = params.bed_length
        for hip, knee in ((11, 13), (12, 14)):
            thigh = np.linalg.norm(xy[knee] - xy[hip])
            assert 0.20 * L - 1e-3 <= thigh <= 0.24 * L + 1e-3


# generate_scene

def test_dropout_lowers_confidence(rng):
    params = sample_scene_params(rng, PostureTemplate.LYING_EDGE, dropout_prob=1.0)
    frame, _ = generate_scene(params, 0)
    assert all(c <= 0.05 for _, _, c in frame.keypoints)


def test_visible_keypoints_confident(rng):
    frame, _ = generate_scene(clean_params(PostureTemplate.SITTING_EDGE, rng), 0)
    assert all(0.6 <= c <= 1.0 for _, _, c in frame.keypoints)


def test_label_noise_flips_label(rng):
    params = clean_params(PostureTemplate.CLIMBING_OUT, rng)
    assert generate_scene(params, 4)[1] is Label.AT_RISK
    assert generate_scene(params, 4, label_noise=1.0)[1] is Label.NOT_AT_RISK


@pytest.mark.parametrize('changes', [
    {'bed_width': 100.0},
    {'bed_length': 900.0},
    {'bed_width': 480.0, 'bed_length': 470.0},
    {'bed_rotation': 40.0},
    {'keypoint_noise_sigma': -1.0},
    {'dropout_prob': 1.5},
    {'bed_center': Point2(0.0, 0.0)},
])
def test_invalid_scene_params(changes):
    base = dict(
        bed_width=300.0, bed_length=600.0, bed_rotation=0.0,
        bed_center=Point2(540.0, 414.0), posture=PostureTemplate.LYING_CENTER,
    )
    base.update(changes)
    with pytest.raises(InvalidParams):
        generate_scene(SceneParams(**base), 0)


def test_invalid_label_noise():
    params = SceneParams(300.0, 600.0, 0.0, Point2(540.0, 414.0), PostureTemplate.LYING_CENTER)
    with pytest.raises(InvalidParams):
        generate_scene(params, 0, label_noise=1.5)


# generate_dataset

@pytest.mark.parametrize('n, class_mix', [(1, 0.5), (10, 0.0), (10, 1.0)])
def test_invalid_dataset_args(n, class_mix):
    with pytest.raises(InvalidParams):
        generate_dataset(n, class_mix, 0, progress=False)


def test_dataset_deterministic(tmp_path):
    paths = []
    for name in ('a', 'b'):
        header, records = generate_dataset(1000, 0.5, 21, progress=False)
        path = tmp_path / f'{name}.ndjson'
        write_dataset(str(path), records, header)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_different_seeds_differ():
    _, a = generate_dataset(20, 0.5, 1, progress=False)
    _, b = generate_dataset(20, 0.5, 2, progress=False)
    assert [r.frame for r in a] != [r.frame for r in b]


def test_source_ids_unique(small_dataset):
    _, records = small_dataset
    ids = [r.source_id for r in records]
    assert len(set(ids)) == len(ids)
    assert ids[0] == 'synthetic-7-000000'


def test_exact_class_counts_without_jitter():
    _, records = generate_dataset(200, 0.3, 5, contour_jitter=0.0, progress=False)
    assert sum(r.label is Label.AT_RISK for r in records) == 60


def test_class_mix_with_default_noise():
    _, records = generate_dataset(2000, 0.3, 8, progress=False)
    n_at_risk = sum(r.label is Label.AT_RISK for r in records)
    assert 570 <= n_at_risk <= 630


def test_label_noise_flips_whole_corpus():
    _, records = generate_dataset(50, 0.2, 6, contour_jitter=0.0, label_noise=1.0, progress=False)
    assert sum(r.label is Label.AT_RISK for r in records) == 40


@pytest.mark.parametrize('tau', [0.0, 20.0])
def test_labels_recomputable_from_frames(tau):
    _, records = generate_dataset(100, 0.5, 13, tau=tau, keypoint_noise=0.0, dropout=0.0, progress=False)
    for record in records:
        bed = fit_bed_model(record.frame.bed_contour)
        assert oracle_label(record.frame.skeleton(), bed, tau) is record.label


def test_knee_features_separate_classes():
    _, records = generate_dataset(300, 0.5, 17, keypoint_noise=0.0, dropout=0.0, progress=False)
    samples, skipped = samples_from_records(records, FeatureSet.KNEE_DIST)
    assert not skipped
    for s in samples:
        assert (min(s.features.values) < 0) == (s.label is Label.AT_RISK)


def test_header_records_generation_params():
    header, _ = generate_dataset(10, 0.5, 3, tau=4.0, progress=False)
    assert header['generator_version'] == 1
    assert header['seed'] == 3
    assert header['params']['tau'] == 4.0
    assert header['params']['n'] == 10
