"""
Feature assembly, training-set balancing and the dataset file format.

Feature layout (fixed):
    [x0/1080, y0/828, ..., x16/1080, y16/828]   keypoint sets only
    [left-knee distance, right-knee distance]     always, / bed width
    [head distance]                               head sets only, / bed width
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyClass, GeometryError, InvalidParams, MissingLandmark, ParseError, SchemaMismatch, ValidationError
from .frame_records import FrameRecord, frame_from_dict
from .geometry_core import (
    DEFAULT_SIDE_CONFIDENCE,
    KEYPOINT_NAMES,
    ROI_TARGET_HEIGHT,
    ROI_TARGET_WIDTH,
    BedModel,
    Skeleton,
    determine_side,
    fit_bed_model,
    head_distance,
    knee_distances,
    normalize_frame,
)

logger = logging.getLogger(__name__)

DEFAULT_NOISE_SIGMA = 2.0


class FeatureSet(Enum):
    """The four feature layouts, in ablation-table order."""

    KNEE_DIST = 'knee'
    KNEE_HEAD_DIST = 'knee-head'
    KEYPOINTS_KNEE = 'kp-knee'
    KEYPOINTS_KNEE_HEAD = 'kp-knee-head'

    @property
    def includes_keypoints(self) -> bool:
        return self in (FeatureSet.KEYPOINTS_KNEE, FeatureSet.KEYPOINTS_KNEE_HEAD)

    @property
    def includes_head(self) -> bool:
        return self in (FeatureSet.KNEE_HEAD_DIST, FeatureSet.KEYPOINTS_KNEE_HEAD)

    @property
    def dimension(self) -> int:
        return 2 * len(KEYPOINT_NAMES) * self.includes_keypoints + 2 + self.includes_head

    @property
    def description(self) -> str:
        parts = []
        if self.includes_keypoints:
            parts.append('17 keypoints')
        parts.append('knee-bed distance')
        if self.includes_head:
            parts.append('head-bed distance')
        return ' + '.join(parts)

    def feature_names(self) -> List[str]:
        names = []
        if self.includes_keypoints:
            for name in KEYPOINT_NAMES:
                names.extend([f'{name}_x', f'{name}_y'])
        names.extend(['left_knee_dist', 'right_knee_dist'])
        if self.includes_head:
            names.append('head_dist')
        return names

    @classmethod
    def from_tag(cls, tag: str) -> 'FeatureSet':
        try:
            return cls(tag)
        except ValueError:
            tags = ', '.join(fs.value for fs in cls)
            raise InvalidParams(f"Unknown feature set '{tag}' (expected one of: {tags})")


class Label(Enum):
    AT_RISK = 'at_risk'
    NOT_AT_RISK = 'not_at_risk'

    @property
    def target(self) -> int:
        return 1 if self is Label.AT_RISK else 0


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """
    Attributes:
        values: Normalised feature values in schema order
        feature_set: Schema
        pixel_scale: Pixels per feature unit for every dimension (the
            normaliser each value was divided by)
    """

    values: np.ndarray
    feature_set: FeatureSet
    pixel_scale: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.feature_set.dimension or len(self.pixel_scale) != len(self.values):
            raise SchemaMismatch(
                f"{self.feature_set.value} expects {self.feature_set.dimension} values, got {len(self.values)}"
            )
        if not np.all(np.isfinite(self.values)):
            raise SchemaMismatch("Feature vector contains non-finite values")


@dataclass(frozen=True, eq=False)
class LabeledSample:
    features: FeatureVector
    label: Label
    source_id: str
    augmented: bool = False


@dataclass(frozen=True)
class DatasetRecord:
    label: Label
    source_id: str
    frame: FrameRecord


def build_features(
    skeleton: Skeleton,
    bed: BedModel,
    feature_set: FeatureSet,
    min_side_confidence: float = DEFAULT_SIDE_CONFIDENCE
) -> FeatureVector:
    """
    Assemble one feature vector.

    Keypoint coordinates are divided by the ROI size (1080, 828); distances
    are divided by the bed width so the features do not depend on bed size.

    Args:
        skeleton: Skeleton in ROI pixels
        bed: Bed fitted in the same frame
        feature_set: Layout to build
        min_side_confidence: Confidence gate for the side rule landmarks

    Returns:
        FeatureVector of length feature_set.dimension

    Raises:
        MissingLandmark: If the head or a knee is unusable
    """
    side = determine_side(skeleton, bed, min_side_confidence)
    left_knee, right_knee = knee_distances(skeleton, bed, side, min_side_confidence)
    width = bed.short_axis_length

    values: List[float] = []
    scale: List[float] = []
    if feature_set.includes_keypoints:
        for x, y in skeleton.coordinates():
            values.extend([x / ROI_TARGET_WIDTH, y / ROI_TARGET_HEIGHT])
            scale.extend([ROI_TARGET_WIDTH, ROI_TARGET_HEIGHT])

    values.extend([left_knee / width, right_knee / width])
    scale.extend([width, width])

    if feature_set.includes_head:
        values.append(head_distance(skeleton, bed, side, min_side_confidence) / width)
        scale.append(width)

    return FeatureVector(np.array(values, dtype=float), feature_set, np.array(scale, dtype=float))


def _perturbed_copy(sample: LabeledSample, noise_sigma: float, rng: np.random.Generator) -> LabeledSample:
    fv = sample.features
    values = fv.values.copy()
    if noise_sigma > 0:
        # noise is drawn in pixels, then brought into each feature's units
        values = values + rng.normal(0.0, noise_sigma, size=len(values)) / fv.pixel_scale
    return LabeledSample(
        FeatureVector(values, fv.feature_set, fv.pixel_scale),
        sample.label,
        sample.source_id,
        augmented=True,
    )


def balance_dataset(
    samples: Sequence[LabeledSample],
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    seed: int = 0
) -> List[LabeledSample]:
    """
    Oversample the minority class with Gaussian-perturbed duplicates.

    Originals pass through untouched; duplicates are drawn uniformly with
    replacement from the minority class until both classes are the same
    size. The combined list is shuffled.

    Args:
        samples: Training samples
        noise_sigma: Perturbation std in pixels (0 gives exact copies)
        seed: Seed for duplicate selection, noise and shuffling

    Returns:
        Balanced, shuffled samples

    Raises:
        EmptyClass: If either class has no samples
    """
    if noise_sigma < 0:
        raise InvalidParams(f"noise_sigma must be >= 0, got {noise_sigma}")

    positives = [i for i, s in enumerate(samples) if s.label is Label.AT_RISK]
    negatives = [i for i, s in enumerate(samples) if s.label is Label.NOT_AT_RISK]
    if not positives or not negatives:
        raise EmptyClass(f"Both classes are required (at_risk={len(positives)}, not_at_risk={len(negatives)})")

    rng = np.random.default_rng(seed)
    minority = positives if len(positives) < len(negatives) else negatives
    deficit = abs(len(positives) - len(negatives))

    picks = rng.choice(np.array(minority), size=deficit, replace=True) if deficit else np.array([], dtype=int)
    duplicates = [_perturbed_copy(samples[i], noise_sigma, rng) for i in picks]
    logger.debug(f"Balancing: {len(positives)} at_risk / {len(negatives)} not_at_risk, {deficit} duplicates")

    combined = list(samples) + duplicates
    order = rng.permutation(len(combined))
    return [combined[i] for i in order]


def stack_features(samples: Sequence[LabeledSample]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stack samples into a design matrix and 0/1 targets (1 = at risk).

    Raises:
        SchemaMismatch: If samples use different feature sets or lengths
    """
    if not samples:
        raise SchemaMismatch("No samples to stack")
    feature_set = samples[0].features.feature_set
    for s in samples:
        if s.features.feature_set is not feature_set or len(s.features.values) != feature_set.dimension:
            raise SchemaMismatch(
                f"Mixed feature schemas: {feature_set.value} and {s.features.feature_set.value}"
            )
    X = np.vstack([s.features.values for s in samples])
    y = np.array([s.label.target for s in samples], dtype=float)
    return X, y


def samples_from_records(
    records: Sequence[DatasetRecord],
    feature_set: FeatureSet,
    min_side_confidence: float = DEFAULT_SIDE_CONFIDENCE
) -> Tuple[List[LabeledSample], List[str]]:
    """
    Recompute features for every dataset record.

    Records whose landmarks cannot be resolved (or whose bed contour is
    degenerate) are skipped.

    Returns:
        (samples, skipped source ids)
    """
    samples = []
    skipped = []
    for record in records:
        try:
            frame = normalize_frame(record.frame)
            bed = fit_bed_model(frame.bed_contour)
            fv = build_features(frame.skeleton(), bed, feature_set, min_side_confidence)
        except (MissingLandmark, GeometryError) as e:
            logger.debug(f"Skipping {record.source_id}: {e}")
            skipped.append(record.source_id)
            continue
        samples.append(LabeledSample(fv, record.label, record.source_id))

    if skipped:
        logger.warning(f"Skipped {len(skipped)} of {len(records)} records with unresolvable landmarks")
    return samples, skipped


def record_to_dict(record: DatasetRecord) -> Dict[str, Any]:
    return {'label': record.label.value, 'source_id': record.source_id, 'frame': record.frame.to_dict()}


def write_dataset(path: str, records: Sequence[DatasetRecord], header: Optional[Dict[str, Any]] = None):
    """
    Write the newline-delimited dataset file, header record first.

    Args:
        path: Output path
        records: Labeled frames
        header: Optional generator header ({"generator_version", "seed", "params"})
    """
    output_dir = Path(path).parent
    output_dir.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        if header is not None:
            f.write(json.dumps(header, sort_keys=True, separators=(',', ':')) + '\n')
        for record in records:
            f.write(json.dumps(record_to_dict(record), separators=(',', ':'), allow_nan=False) + '\n')
    logger.info(f"Wrote {len(records)} records to {path}")


def read_dataset(path: str) -> Tuple[Optional[Dict[str, Any]], List[DatasetRecord]]:
    """
    Read a dataset file.

    Returns:
        (header or None, records)

    Raises:
        FileNotFoundError: If the file does not exist
        ParseError / ValidationError: On malformed records or duplicate source ids
    """
    if not Path(path).exists():
        logger.error(f"Dataset file not found: {path}")
        raise FileNotFoundError(f"Dataset file not found: {path}")

    header = None
    records: List[DatasetRecord] = []
    seen = set()
    with open(path, 'r') as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"malformed JSON: {e.msg}", number) from e
            if not isinstance(obj, dict):
                raise ParseError("Record must be a JSON object", number)
            if 'generator_version' in obj and not records and header is None:
                header = obj
                continue
            try:
                label = Label(obj['label'])
                source_id = str(obj['source_id'])
            except (KeyError, ValueError) as e:
                raise ParseError(f"bad label/source_id: {e}", number) from e
            if source_id in seen:
                raise ValidationError(f"duplicate source_id '{source_id}'", number)
            seen.add(source_id)
            records.append(DatasetRecord(label, source_id, frame_from_dict(obj.get('frame'), number)))

    logger.info(f"Loaded {len(records)} records from {path}")
    return header, records
