"""
Shared fixtures for the test suite.
"""

import importlib.util
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).parent.parent
sys.path.append(str(ROOT))

from utils.feature_engineering import FeatureSet, balance_dataset, samples_from_records
from utils.frame_records import FrameRecord
from utils.gbdt_classifier import Hyperparams, fit
from utils.geometry_core import NUM_KEYPOINTS, Skeleton, fit_bed_model
from utils.synthetic_scene import generate_dataset


AXIS_BED_CONTOUR = [(0.0, 0.0), (100.0, 0.0), (100.0, 200.0), (0.0, 200.0)]

# 400 x 700 bed standing upright in the middle of a 1080x828 frame
FRAME_BED_CONTOUR = ((340.0, 100.0), (740.0, 100.0), (740.0, 800.0), (340.0, 800.0))


def load_module(module_path, module_name):
    """Load a module from a file path."""
    spec = importlib.util.spec_from_file_location(module_name, module_path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def skeleton_rows(head, left_knee, right_knee, rest=(50.0, 100.0), confidence=1.0):
    """
    17 [x, y, confidence] rows with the nose, both knees and every other
    keypoint at rest.
    """
    rows = [[rest[0], rest[1], confidence] for _ in range(NUM_KEYPOINTS)]
    rows[0] = [head[0], head[1], confidence]
    rows[13] = [left_knee[0], left_knee[1], confidence]
    rows[14] = [right_knee[0], right_knee[1], confidence]
    return rows


def build_skeleton(head, left_knee, right_knee, rest=(50.0, 100.0), confidence=1.0):
    return Skeleton.from_rows(skeleton_rows(head, left_knee, right_knee, rest, confidence))


def make_frame(rows, contour=FRAME_BED_CONTOUR, ts=0.0, session='bed-1', image_w=1080, image_h=828):
    return FrameRecord(
        ts=float(ts),
        session=session,
        image_w=image_w,
        image_h=image_h,
        bed_contour=tuple((float(x), float(y)) for x, y in contour),
        keypoints=tuple((float(x), float(y), float(c)) for x, y, c in rows),
    )


@pytest.fixture
def axis_bed():
    """Axis-aligned bed (0,0)-(100,200): left line x=0, right line x=100."""
    return fit_bed_model(AXIS_BED_CONTOUR)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope='session')
def small_dataset():
    """300 labeled synthetic scenes with the default noise levels."""
    return generate_dataset(300, 0.5, 7, progress=False)


@pytest.fixture(scope='session')
def knee_model():
    """Classifier on the knee distances, trained on 600 synthetic scenes."""
    _, records = generate_dataset(600, 0.5, 11, progress=False)
    samples, _ = samples_from_records(records, FeatureSet.KNEE_DIST)
    training = balance_dataset(samples, 2.0, seed=0)
    return fit(training, Hyperparams(n_trees=30), seed=0)


@pytest.fixture(scope='session')
def fallrisk_cli():
    return load_module(ROOT / 'scripts' / 'fallrisk.py', 'fallrisk_cli')
