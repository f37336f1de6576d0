"""
Synthetic bed scenes: a jittered bed contour plus a posed 17-keypoint
skeleton, labeled by the knee-outside-bed rule.

Bodies are posed in bed-local coordinates (u along the bed from the head
end to the foot end, v across it, +v toward the right edge) and then
rotated and translated into the 1080x828 frame.
"""

import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .errors import InvalidParams
from .feature_engineering import DatasetRecord, Label
from .frame_records import FrameRecord
from .geometry_core import (
    DEFAULT_SIDE_CONFIDENCE,
    LEFT_KNEE,
    NUM_KEYPOINTS,
    RIGHT_KNEE,
    ROI_TARGET_HEIGHT,
    ROI_TARGET_WIDTH,
    BedModel,
    Point2,
    Skeleton,
    determine_side,
    fit_bed_model,
    knee_distances,
)

logger = logging.getLogger(__name__)

GENERATOR_VERSION = 1

BED_WIDTH_RANGE = (200.0, 500.0)
BED_LENGTH_RANGE = (500.0, 800.0)
BED_ROTATION_RANGE = (-25.0, 25.0)
# long edges must be clearly longer than short edges
MIN_ASPECT_GAP = 50.0
# free space beside each long edge for limbs hanging off the bed
DEFAULT_LATERAL_MARGIN = 150.0
CONTOUR_POINTS_PER_EDGE = 8
DROPOUT_CONFIDENCE = (0.0, 0.05)
VISIBLE_CONFIDENCE = (0.6, 1.0)
COORDINATE_DECIMALS = 4

# limb lengths as fractions of the bed length
THIGH_FRACTION = (0.20, 0.24)
SHIN_FRACTION = (0.18, 0.22)
TORSO_FRACTION = (0.26, 0.30)
NECK_FRACTION = (0.08, 0.10)
UPPER_ARM_FRACTION = (0.13, 0.16)
FOREARM_FRACTION = (0.12, 0.15)
HIP_HALF_WIDTH_FRACTION = (0.045, 0.055)
SHOULDER_HALF_WIDTH_FRACTION = (0.08, 0.09)

# thigh never spans more than this share of its length across the bed
_MAX_THIGH_LATERAL = 0.95
_HEAD_MAX_INSET_MARGIN = 10.0
_MAX_SAMPLING_ATTEMPTS = 1000


@dataclass(frozen=True)
class Range:
    """Closed sampling interval, in pixels or in fractions of the bed width."""

    lo: float
    hi: float
    per_width: bool = False

    def sample(self, rng: np.random.Generator, bed_width: float) -> float:
        value = rng.uniform(self.lo, self.hi)
        return value * bed_width if self.per_width else value


@dataclass(frozen=True)
class TemplateRanges:
    """
    Pose ranges for one posture. Insets are measured inward from the long
    edge the body lies against; negative insets are outside the bed.

    Attributes:
        hip_inset: Hip-centre inset
        outer_knee_inset: Inset of the knee nearer the edge, relative to tau
        inner_knee_gap: How much further inside the other knee sits
        head_min_inset: Minimum nose inset (px)
        torso_angle: Torso angle from the bed axis, degrees
        limb_jitter: Std of the arm/ankle jitter (px)
        label: Label the template produces, or None when it depends on the draw
    """

    hip_inset: Range
    outer_knee_inset: Range
    inner_knee_gap: Range
    head_min_inset: float
    torso_angle: Tuple[float, float]
    limb_jitter: float
    label: Optional[Label]


class PostureTemplate(Enum):
    LYING_CENTER = 'lying_center'
    LYING_EDGE = 'lying_edge'
    KNEE_OVER_EDGE = 'knee_over_edge'
    SITTING_EDGE = 'sitting_edge'
    CLIMBING_OUT = 'climbing_out'
    TURNING_AROUND = 'turning_around'

    @property
    def ranges(self) -> TemplateRanges:
        return TEMPLATE_RANGES[self]


TEMPLATE_RANGES: Dict[PostureTemplate, TemplateRanges] = {
    PostureTemplate.LYING_CENTER: TemplateRanges(
        hip_inset=Range(0.40, 0.60, per_width=True),
        outer_knee_inset=Range(0.32, 0.42, per_width=True),
        inner_knee_gap=Range(0.12, 0.20, per_width=True),
        head_min_inset=40.0,
        torso_angle=(0.0, 10.0),
        limb_jitter=4.0,
        label=Label.NOT_AT_RISK,
    ),
    PostureTemplate.LYING_EDGE: TemplateRanges(
        hip_inset=Range(0.22, 0.30, per_width=True),
        outer_knee_inset=Range(0.12, 0.22, per_width=True),
        inner_knee_gap=Range(0.05, 0.15, per_width=True),
        head_min_inset=20.0,
        torso_angle=(0.0, 10.0),
        limb_jitter=4.0,
        label=Label.NOT_AT_RISK,
    ),
    PostureTemplate.KNEE_OVER_EDGE: TemplateRanges(
        hip_inset=Range(0.12, 0.25, per_width=True),
        outer_knee_inset=Range(-60.0, -5.0),
        inner_knee_gap=Range(0.05, 0.30, per_width=True),
        head_min_inset=20.0,
        torso_angle=(0.0, 20.0),
        limb_jitter=6.0,
        label=Label.AT_RISK,
    ),
    PostureTemplate.SITTING_EDGE: TemplateRanges(
        hip_inset=Range(0.0, 25.0),
        outer_knee_inset=Range(-90.0, -30.0),
        inner_knee_gap=Range(0.0, 40.0),
        head_min_inset=10.0,
        torso_angle=(60.0, 90.0),
        limb_jitter=8.0,
        label=Label.AT_RISK,
    ),
    PostureTemplate.CLIMBING_OUT: TemplateRanges(
        hip_inset=Range(-30.0, 20.0),
        outer_knee_inset=Range(-140.0, -40.0),
        inner_knee_gap=Range(0.0, 50.0),
        head_min_inset=10.0,
        torso_angle=(30.0, 80.0),
        limb_jitter=8.0,
        label=Label.AT_RISK,
    ),
    PostureTemplate.TURNING_AROUND: TemplateRanges(
        hip_inset=Range(0.15, 0.30, per_width=True),
        # magnitude only; the sign follows SceneParams.knee_outside
        outer_knee_inset=Range(3.0, 55.0),
        inner_knee_gap=Range(0.05, 0.20, per_width=True),
        head_min_inset=20.0,
        torso_angle=(30.0, 90.0),
        limb_jitter=6.0,
        label=None,
    ),
}


def templates_for(label: Label) -> List[PostureTemplate]:
    """Postures able to produce a label, in enum order."""
    return [p for p in PostureTemplate if p.ranges.label in (label, None)]


@dataclass(frozen=True)
class SceneParams:
    """
    Attributes:
        bed_width: Short side (px)
        bed_length: Long side (px)
        bed_rotation: Degrees; 0 puts the long axis vertical in the image
        bed_center: Bed centre in frame pixels
        posture: Posture template
        keypoint_noise_sigma: Std of the Gaussian keypoint jitter (px)
        dropout_prob: Probability a keypoint is reported with confidence < 0.05
        contour_jitter: Std of the bed contour jitter (px)
        knee_outside: For TURNING_AROUND, whether the outer knee leaves the
            bed; drawn per scene when None
    """

    bed_width: float
    bed_length: float
    bed_rotation: float
    bed_center: Point2
    posture: PostureTemplate
    keypoint_noise_sigma: float = 0.0
    dropout_prob: float = 0.0
    contour_jitter: float = 0.0
    knee_outside: Optional[bool] = None

    def validate(self):
        """
        Raises:
            InvalidParams: On out-of-range values or a bed that leaves the frame
        """
        if not BED_WIDTH_RANGE[0] <= self.bed_width <= BED_WIDTH_RANGE[1]:
            raise InvalidParams(f"bed_width {self.bed_width} outside {BED_WIDTH_RANGE}")
        if not BED_LENGTH_RANGE[0] <= self.bed_length <= BED_LENGTH_RANGE[1]:
            raise InvalidParams(f"bed_length {self.bed_length} outside {BED_LENGTH_RANGE}")
        if self.bed_length <= self.bed_width:
            raise InvalidParams("bed_length must exceed bed_width")
        if not BED_ROTATION_RANGE[0] <= self.bed_rotation <= BED_ROTATION_RANGE[1]:
            raise InvalidParams(f"bed_rotation {self.bed_rotation} outside {BED_ROTATION_RANGE}")
        if self.keypoint_noise_sigma < 0 or self.contour_jitter < 0:
            raise InvalidParams("Noise levels must be >= 0")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise InvalidParams(f"dropout_prob {self.dropout_prob} outside [0, 1]")
        if not bed_fits_frame(self):
            raise InvalidParams(
                f"Bed {self.bed_width:.0f}x{self.bed_length:.0f} at {tuple(self.bed_center)} "
                f"rotated {self.bed_rotation:.1f} deg does not fit the "
                f"{ROI_TARGET_WIDTH}x{ROI_TARGET_HEIGHT} frame"
            )

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d['bed_center'] = list(self.bed_center)
        d['posture'] = self.posture.value
        return d


def _bed_axes(rotation_deg: float) -> Tuple[np.ndarray, np.ndarray]:
    """(long-axis unit, lateral unit) in frame coordinates."""
    theta = math.radians(rotation_deg)
    return np.array([-math.sin(theta), math.cos(theta)]), np.array([math.cos(theta), math.sin(theta)])


def _to_frame(local: np.ndarray, params: SceneParams) -> np.ndarray:
    axis, lateral = _bed_axes(params.bed_rotation)
    center = np.array(params.bed_center, dtype=float)
    return center + local[:, :1] * axis + local[:, 1:2] * lateral


def bed_corners(params: SceneParams, lateral_margin: float = 0.0) -> np.ndarray:
    """(4, 2) corners of the bed, optionally widened on both long sides."""
    half_l, half_w = params.bed_length / 2.0, params.bed_width / 2.0 + lateral_margin
    local = np.array([[-half_l, -half_w], [-half_l, half_w], [half_l, half_w], [half_l, -half_w]])
    return _to_frame(local, params)


def bed_fits_frame(params: SceneParams, lateral_margin: float = 0.0) -> bool:
    corners = bed_corners(params, lateral_margin)
    return bool(
        np.all(corners[:, 0] >= 0) and np.all(corners[:, 0] <= ROI_TARGET_WIDTH)
        and np.all(corners[:, 1] >= 0) and np.all(corners[:, 1] <= ROI_TARGET_HEIGHT)
    )


def sample_scene_params(
    rng: np.random.Generator,
    posture: PostureTemplate,
    keypoint_noise_sigma: float = 0.0,
    dropout_prob: float = 0.0,
    contour_jitter: float = 0.0,
    knee_outside: Optional[bool] = None,
    lateral_margin: float = DEFAULT_LATERAL_MARGIN
) -> SceneParams:
    """
    Draw bed geometry by rejection until the bed plus a lateral margin fits
    the frame.

    Raises:
        InvalidParams: If no valid draw is found
    """
    for _ in range(_MAX_SAMPLING_ATTEMPTS):
        width = rng.uniform(*BED_WIDTH_RANGE)
        length = rng.uniform(*BED_LENGTH_RANGE)
        rotation = rng.uniform(*BED_ROTATION_RANGE)
        center = Point2(rng.uniform(0.0, ROI_TARGET_WIDTH), rng.uniform(0.0, ROI_TARGET_HEIGHT))
        if length - width < MIN_ASPECT_GAP:
            continue
        params = SceneParams(
            width, length, rotation, center, posture,
            keypoint_noise_sigma, dropout_prob, contour_jitter, knee_outside
        )
        if bed_fits_frame(params, lateral_margin):
            return params
    raise InvalidParams(f"Could not place a bed with lateral margin {lateral_margin} px")


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _rotate(v: np.ndarray, degrees: float) -> np.ndarray:
    a = math.radians(degrees)
    return np.array([v[0] * math.cos(a) - v[1] * math.sin(a), v[0] * math.sin(a) + v[1] * math.cos(a)])


def _pose_body(params: SceneParams, rng: np.random.Generator, tau: float) -> np.ndarray:
    """
    Place the 17 keypoints in bed-local (u, v) coordinates.

    The knees are placed first since they decide the label; hips, torso and
    head are fitted around them.
    """
    ranges = params.posture.ranges
    W, L = params.bed_width, params.bed_length
    side = float(rng.choice([-1.0, 1.0]))

    def v_at(inset: float) -> float:
        return side * (W / 2.0 - inset)

    thigh = L * rng.uniform(*THIGH_FRACTION)
    shin = L * rng.uniform(*SHIN_FRACTION)
    torso = L * rng.uniform(*TORSO_FRACTION)
    neck = L * rng.uniform(*NECK_FRACTION)
    upper_arm = L * rng.uniform(*UPPER_ARM_FRACTION)
    forearm = L * rng.uniform(*FOREARM_FRACTION)
    hip_half = L * rng.uniform(*HIP_HALF_WIDTH_FRACTION)
    shoulder_half = L * rng.uniform(*SHOULDER_HALF_WIDTH_FRACTION)

    # upper body turns toward the middle of the bed
    phi = math.radians(rng.uniform(*ranges.torso_angle))
    toward_head = np.array([-math.cos(phi), -side * math.sin(phi)])
    body_left = np.array([toward_head[1], -toward_head[0]])

    if params.posture is PostureTemplate.TURNING_AROUND:
        outside = params.knee_outside if params.knee_outside is not None else bool(rng.random() < 0.5)
        magnitude = ranges.outer_knee_inset.sample(rng, W)
        outer_inset = -magnitude if outside else magnitude
    else:
        outer_inset = ranges.outer_knee_inset.sample(rng, W)
    outer_inset += tau
    inner_inset = min(outer_inset + ranges.inner_knee_gap.sample(rng, W), outer_inset + thigh)

    # the knee on the edge side of the pelvis is the outer one
    left_is_outer = side * body_left[1] >= 0
    knee_v = {
        LEFT_KNEE: v_at(outer_inset if left_is_outer else inner_inset),
        RIGHT_KNEE: v_at(inner_inset if left_is_outer else outer_inset),
    }
    hip_offset = {LEFT_KNEE: hip_half * body_left[1], RIGHT_KNEE: -hip_half * body_left[1]}

    hip_v = v_at(ranges.hip_inset.sample(rng, W))
    reach = _MAX_THIGH_LATERAL * thigh
    lo = max(knee_v[k] - hip_offset[k] - reach for k in knee_v)
    hi = min(knee_v[k] - hip_offset[k] + reach for k in knee_v)
    hip_v = float(np.clip(hip_v, lo, hi))
    hip_center = np.array([L * rng.uniform(-0.05, 0.10), hip_v])

    kp = np.zeros((NUM_KEYPOINTS, 2))
    kp[11] = hip_center + hip_half * body_left
    kp[12] = hip_center - hip_half * body_left
    for knee, hip in ((LEFT_KNEE, 11), (RIGHT_KNEE, 12)):
        dv = knee_v[knee] - kp[hip][1]
        kp[knee] = [kp[hip][0] + math.sqrt(thigh * thigh - dv * dv), knee_v[knee]]
        leg = _rotate(_unit(kp[knee] - kp[hip]), rng.uniform(-25.0, 25.0))
        kp[knee + 2] = kp[knee] + shin * leg + rng.normal(0.0, ranges.limb_jitter, 2)

    shoulder_center = hip_center + torso * toward_head
    nose = shoulder_center + neck * toward_head
    nose_inset = W / 2.0 - side * nose[1]
    shift = 0.0
    if nose_inset < ranges.head_min_inset:
        shift = ranges.head_min_inset - nose_inset
    elif nose_inset > W - _HEAD_MAX_INSET_MARGIN:
        shift = (W - _HEAD_MAX_INSET_MARGIN) - nose_inset
    upper_shift = np.array([0.0, -side * shift])
    shoulder_center = shoulder_center + upper_shift
    nose = nose + upper_shift

    kp[0] = nose
    kp[1] = nose + 0.025 * L * toward_head + 0.018 * L * body_left
    kp[2] = nose + 0.025 * L * toward_head - 0.018 * L * body_left
    kp[3] = nose + 0.005 * L * toward_head + 0.035 * L * body_left
    kp[4] = nose + 0.005 * L * toward_head - 0.035 * L * body_left
    kp[5] = shoulder_center + shoulder_half * body_left
    kp[6] = shoulder_center - shoulder_half * body_left
    for shoulder, elbow, wrist, outward in ((5, 7, 9, 1.0), (6, 8, 10, -1.0)):
        spread = math.radians(rng.uniform(5.0, 25.0))
        arm = -toward_head * math.cos(spread) + outward * body_left * math.sin(spread)
        kp[elbow] = kp[shoulder] + upper_arm * arm + rng.normal(0.0, ranges.limb_jitter, 2)
        lower = _rotate(_unit(kp[elbow] - kp[shoulder]), rng.uniform(-20.0, 20.0))
        kp[wrist] = kp[elbow] + forearm * lower + rng.normal(0.0, ranges.limb_jitter, 2)
    return kp


def _clamp_to_frame(xy: np.ndarray) -> np.ndarray:
    return np.column_stack([
        np.clip(xy[:, 0], 0.0, float(ROI_TARGET_WIDTH)),
        np.clip(xy[:, 1], 0.0, float(ROI_TARGET_HEIGHT)),
    ])


def _bed_contour(params: SceneParams, rng: np.random.Generator) -> np.ndarray:
    corners = bed_corners(params)
    steps = np.arange(CONTOUR_POINTS_PER_EDGE) / CONTOUR_POINTS_PER_EDGE
    points = np.vstack([
        corners[i] + steps[:, None] * (corners[(i + 1) % 4] - corners[i])
        for i in range(4)
    ])
    if params.contour_jitter > 0:
        points = points + rng.normal(0.0, params.contour_jitter, points.shape)
    return np.round(_clamp_to_frame(points), COORDINATE_DECIMALS)


def oracle_label(
    skeleton: Skeleton,
    bed: BedModel,
    tau: float = 0.0,
    min_confidence: float = DEFAULT_SIDE_CONFIDENCE
) -> Label:
    """
    Ground-truth rule for synthetic scenes: at risk iff the lower knee
    distance is below tau (tau = 0 means any knee outside the bed).

    Raises:
        MissingLandmark: If the head or a knee cannot be resolved
    """
    side = determine_side(skeleton, bed, min_confidence)
    return Label.AT_RISK if min(knee_distances(skeleton, bed, side, min_confidence)) < tau else Label.NOT_AT_RISK


def generate_scene(
    params: SceneParams,
    rng_seed: int,
    tau: float = 0.0,
    label_noise: float = 0.0,
    session: str = 'synthetic',
    ts: float = 0.0
) -> Tuple[FrameRecord, Label]:
    """
    Render one labeled scene.

    The label is the oracle evaluated on the noise-free skeleton against the
    bed fitted from the emitted contour, so it can be recomputed exactly
    from a stored frame whenever keypoint noise and dropout are off.

    Args:
        params: Scene parameters
        rng_seed: Seed for pose, noise and dropout draws
        tau: Oracle threshold (px)
        label_noise: Probability of flipping the stored label
        session: Session id written into the frame
        ts: Timestamp written into the frame

    Returns:
        (frame, label)

    Raises:
        InvalidParams: If the bed does not fit the frame
    """
    params.validate()
    if not 0.0 <= label_noise <= 1.0:
        raise InvalidParams(f"label_noise {label_noise} outside [0, 1]")
    rng = np.random.default_rng(rng_seed)

    contour = _bed_contour(params, rng)
    clean = np.round(_clamp_to_frame(_to_frame(_pose_body(params, rng, tau), params)), COORDINATE_DECIMALS)

    bed = fit_bed_model(contour)
    label = oracle_label(Skeleton.from_rows([(x, y, 1.0) for x, y in clean]), bed, tau)

    noisy = clean
    if params.keypoint_noise_sigma > 0:
        noisy = clean + rng.normal(0.0, params.keypoint_noise_sigma, clean.shape)
        noisy = np.round(_clamp_to_frame(noisy), COORDINATE_DECIMALS)
    dropped = rng.random(NUM_KEYPOINTS) < params.dropout_prob
    confidence = np.where(
        dropped,
        rng.uniform(*DROPOUT_CONFIDENCE, NUM_KEYPOINTS),
        rng.uniform(*VISIBLE_CONFIDENCE, NUM_KEYPOINTS),
    )
    confidence = np.round(confidence, COORDINATE_DECIMALS)

    if label_noise > 0 and rng.random() < label_noise:
        label = Label.NOT_AT_RISK if label is Label.AT_RISK else Label.AT_RISK

    frame = FrameRecord(
        ts=float(ts),
        session=session,
        image_w=ROI_TARGET_WIDTH,
        image_h=ROI_TARGET_HEIGHT,
        bed_contour=tuple((float(x), float(y)) for x, y in contour),
        keypoints=tuple((float(x), float(y), float(c)) for (x, y), c in zip(noisy, confidence)),
    )
    return frame, label


def generate_dataset(
    n: int,
    class_mix: float,
    seed: int,
    tau: float = 0.0,
    keypoint_noise: float = 2.0,
    dropout: float = 0.02,
    contour_jitter: float = 1.0,
    label_noise: float = 0.0,
    progress: bool = True
) -> Tuple[Dict[str, Any], List[DatasetRecord]]:
    """
    Generate a labeled synthetic corpus.

    round(n * class_mix) scenes are posed at risk and the rest not at risk;
    which indices get which target is a seeded permutation. Scene i draws
    everything from a generator seeded with (seed, i), so any scene can be
    regenerated on its own.

    Args:
        n: Number of scenes (>= 2)
        class_mix: Fraction of at-risk scenes, strictly between 0 and 1
        seed: Master seed
        tau: Oracle threshold (px)
        keypoint_noise: Keypoint jitter std (px)
        dropout: Keypoint dropout probability
        contour_jitter: Bed contour jitter std (px)
        label_noise: Label flip probability
        progress: Show a tqdm progress bar

    Returns:
        (header record, dataset records)

    Raises:
        InvalidParams: On invalid arguments
    """
    if n < 2:
        raise InvalidParams(f"n must be >= 2, got {n}")
    if not 0.0 < class_mix < 1.0:
        raise InvalidParams(f"class_mix must be strictly between 0 and 1, got {class_mix}")

    n_at_risk = int(round(n * class_mix))
    targets = np.zeros(n, dtype=bool)
    targets[:n_at_risk] = True
    targets = np.random.default_rng(seed).permutation(targets)

    session = f"synthetic-{seed}"
    records: List[DatasetRecord] = []
    posture_counts: Dict[str, int] = {}
    for i in tqdm(range(n), desc="Generating scenes", disable=not progress):
        target = Label.AT_RISK if targets[i] else Label.NOT_AT_RISK
        rng = np.random.default_rng([seed, i])
        choices = templates_for(target)
        posture = choices[int(rng.integers(len(choices)))]
        params = sample_scene_params(
            rng, posture, keypoint_noise, dropout, contour_jitter,
            knee_outside=(target is Label.AT_RISK) if posture.ranges.label is None else None,
        )
        frame, label = generate_scene(
            params, int(rng.integers(0, 2 ** 63 - 1)), tau, label_noise, session, ts=i / 10.0
        )
        records.append(DatasetRecord(label, f"{session}-{i:06d}", frame))
        posture_counts[posture.value] = posture_counts.get(posture.value, 0) + 1

    n_positive = sum(r.label is Label.AT_RISK for r in records)
    logger.info(f"Generated {n} scenes: {n_positive} at_risk, {n - n_positive} not_at_risk")
    logger.info(f"Postures: {posture_counts}")

    header = {
        'generator_version': GENERATOR_VERSION,
        'seed': seed,
        'params': {
            'n': n,
            'class_mix': class_mix,
            'tau': tau,
            'keypoint_noise': keypoint_noise,
            'dropout': dropout,
            'contour_jitter': contour_jitter,
            'label_noise': label_noise,
        },
    }
    return header, records
