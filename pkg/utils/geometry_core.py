"""
Bed / body geometry.

Fits an oriented rectangle to the segmented bed contour, decides which half
of the bed the body occupies (head and both knees must agree), and measures
signed distances from landmarks to the long bed edges: positive inside the
bed, negative outside.

Coordinates are image pixels, x to the right and y downward.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, NamedTuple, Sequence, Tuple

import numpy as np
from shapely.geometry import MultiPoint, Polygon

from .errors import DegenerateContour, InvalidParams, MissingLandmark, NonFinite, OutOfBounds

if TYPE_CHECKING:
    from .frame_records import FrameRecord

logger = logging.getLogger(__name__)

ROI_TARGET_WIDTH = 1080
ROI_TARGET_HEIGHT = 828

NUM_KEYPOINTS = 17

# COCO keypoint order
KEYPOINT_NAMES = (
    'nose',
    'left_eye', 'right_eye',
    'left_ear', 'right_ear',
    'left_shoulder', 'right_shoulder',
    'left_elbow', 'right_elbow',
    'left_wrist', 'right_wrist',
    'left_hip', 'right_hip',
    'left_knee', 'right_knee',
    'left_ankle', 'right_ankle',
)

NOSE = 0
HEAD_FALLBACK = (1, 2, 3, 4)
LEFT_KNEE = 13
RIGHT_KNEE = 14

# left/right partner of every keypoint, used for mirroring
MIRROR_INDEX = (0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15)

DEFAULT_SIDE_CONFIDENCE = 0.05

# hull area below this fraction of the squared extent counts as collinear
_COLLINEAR_TOLERANCE = 1e-12


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Keypoint:
    position: Point2
    confidence: float
    index: int

    def __post_init__(self):
        if not 0 <= self.index < NUM_KEYPOINTS:
            raise ValueError(f"Keypoint index out of range: {self.index}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"Keypoint confidence outside [0, 1]: {self.confidence}")


@dataclass(frozen=True)
class Skeleton:
    """17 COCO keypoints, position i holding keypoint index i."""

    keypoints: Tuple[Keypoint, ...]

    def __post_init__(self):
        if len(self.keypoints) != NUM_KEYPOINTS:
            raise ValueError(f"Skeleton needs {NUM_KEYPOINTS} keypoints, got {len(self.keypoints)}")
        for i, kp in enumerate(self.keypoints):
            if kp.index != i:
                raise ValueError(f"Keypoint at position {i} has index {kp.index}")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> 'Skeleton':
        """
        Build a skeleton from [x, y, confidence] rows in COCO order.

        Args:
            rows: 17 rows of [x, y, confidence]

        Returns:
            Skeleton
        """
        if len(rows) != NUM_KEYPOINTS:
            raise ValueError(f"Skeleton needs {NUM_KEYPOINTS} keypoints, got {len(rows)}")
        return cls(tuple(
            Keypoint(Point2(float(r[0]), float(r[1])), float(r[2]), i)
            for i, r in enumerate(rows)
        ))

    def point(self, index: int) -> Point2:
        return self.keypoints[index].position

    def confidence(self, index: int) -> float:
        return self.keypoints[index].confidence

    def coordinates(self) -> np.ndarray:
        """(17, 2) array of keypoint positions."""
        return np.array([kp.position for kp in self.keypoints], dtype=float)

    def rows(self) -> Tuple[Tuple[float, float, float], ...]:
        return tuple((kp.position.x, kp.position.y, kp.confidence) for kp in self.keypoints)


@dataclass(frozen=True)
class DirectedLine:
    start: Point2
    end: Point2

    @property
    def length(self) -> float:
        return math.hypot(self.end.x - self.start.x, self.end.y - self.start.y)

    def unit(self) -> Tuple[float, float]:
        length = self.length
        return ((self.end.x - self.start.x) / length, (self.end.y - self.start.y) / length)

    def midpoint(self) -> Point2:
        return Point2((self.start.x + self.end.x) / 2.0, (self.start.y + self.end.y) / 2.0)


@dataclass(frozen=True)
class BedModel:
    """
    Oriented-rectangle bed.

    Attributes:
        corners: Four corners, counter-clockwise (positive shoelace area)
        left_line: Long edge on the left once the long axis points down the image
        right_line: The other long edge
        middle_line: Longitudinal midline joining the short-edge midpoints
        long_axis_length: Length of the long edges (px)
        short_axis_length: Length of the short edges, i.e. bed width (px)
    """

    corners: Tuple[Point2, Point2, Point2, Point2]
    left_line: DirectedLine
    right_line: DirectedLine
    middle_line: DirectedLine
    long_axis_length: float
    short_axis_length: float

    @property
    def centroid(self) -> Point2:
        return self.middle_line.midpoint()

    def polygon(self) -> Polygon:
        return Polygon(self.corners)


class Side(Enum):
    LEFT = 'left'
    RIGHT = 'right'
    INDETERMINATE = 'indeterminate'


@dataclass(frozen=True)
class RoiTransform:
    """
    Crop-then-resize mapping from source image pixels to the 1080x828 ROI.
    """

    source_width: float
    source_height: float
    crop_origin: Point2
    crop_width: float
    crop_height: float
    target_width: int = ROI_TARGET_WIDTH
    target_height: int = ROI_TARGET_HEIGHT

    def __post_init__(self):
        if (self.target_width, self.target_height) != (ROI_TARGET_WIDTH, ROI_TARGET_HEIGHT):
            raise InvalidParams(
                f"ROI target must be {ROI_TARGET_WIDTH}x{ROI_TARGET_HEIGHT}, "
                f"got {self.target_width}x{self.target_height}"
            )
        if self.crop_width <= 0 or self.crop_height <= 0:
            raise InvalidParams("ROI crop must have positive size")
        ox, oy = self.crop_origin
        if ox < 0 or oy < 0 or ox + self.crop_width > self.source_width or oy + self.crop_height > self.source_height:
            raise OutOfBounds(
                f"ROI crop ({ox}, {oy}, {self.crop_width}x{self.crop_height}) "
                f"exceeds source {self.source_width}x{self.source_height}"
            )

    @property
    def scale_x(self) -> float:
        return self.target_width / self.crop_width

    @property
    def scale_y(self) -> float:
        return self.target_height / self.crop_height

    def map_xy(self, x: float, y: float) -> Tuple[float, float]:
        return ((x - self.crop_origin.x) * self.scale_x, (y - self.crop_origin.y) * self.scale_y)

    def invert_xy(self, x: float, y: float) -> Tuple[float, float]:
        return (x / self.scale_x + self.crop_origin.x, y / self.scale_y + self.crop_origin.y)

    def contains(self, x: float, y: float) -> bool:
        ox, oy = self.crop_origin
        return ox <= x <= ox + self.crop_width and oy <= y <= oy + self.crop_height


def _require_finite(*values: float):
    for value in values:
        if not math.isfinite(value):
            raise NonFinite(f"Non-finite coordinate: {value}")


def _orient_long_axis(axis: np.ndarray) -> np.ndarray:
    """Point the long axis down the image (positive y); horizontal beds point right."""
    if abs(axis[1]) <= 1e-12:
        return axis if axis[0] > 0 else -axis
    return axis if axis[1] > 0 else -axis


def fit_bed_model(contour: Sequence[Sequence[float]]) -> BedModel:
    """
    Fit the minimum-area oriented rectangle around a bed contour.

    The rectangle is found by rotating calipers over the convex hull: the
    optimal rectangle has one side collinear with a hull edge, so every hull
    edge direction is tried. Ties keep the first hull edge.

    Args:
        contour: At least 4 (x, y) points

    Returns:
        BedModel with left/right/middle lines

    Raises:
        NonFinite: If any coordinate is NaN/Inf
        DegenerateContour: If fewer than 4 points or all points collinear
    """
    points = np.asarray(contour, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise DegenerateContour(f"Contour must be a list of (x, y) points, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise NonFinite("Bed contour contains NaN/Inf coordinates")
    if len(points) < 4:
        raise DegenerateContour(f"Bed contour needs at least 4 points, got {len(points)}")

    hull = MultiPoint([tuple(p) for p in points]).convex_hull
    extent = float(np.ptp(points, axis=0).max())
    if not isinstance(hull, Polygon) or hull.area <= _COLLINEAR_TOLERANCE * extent * extent:
        raise DegenerateContour("Bed contour points are collinear")

    hull_xy = np.asarray(hull.exterior.coords, dtype=float)[:-1]
    edges = np.roll(hull_xy, -1, axis=0) - hull_xy
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    keep = lengths > 0
    units = edges[keep] / lengths[keep, None]
    normals = np.column_stack([-units[:, 1], units[:, 0]])

    proj_u = hull_xy @ units.T
    proj_n = hull_xy @ normals.T
    extent_u = proj_u.max(axis=0) - proj_u.min(axis=0)
    extent_n = proj_n.max(axis=0) - proj_n.min(axis=0)
    best = int(np.argmin(extent_u * extent_n))

    u = units[best]
    n = normals[best]
    center = (
        u * (proj_u[:, best].max() + proj_u[:, best].min()) / 2.0
        + n * (proj_n[:, best].max() + proj_n[:, best].min()) / 2.0
    )

    if extent_u[best] >= extent_n[best]:
        axis, long_len, short_len = u, float(extent_u[best]), float(extent_n[best])
    else:
        axis, long_len, short_len = n, float(extent_n[best]), float(extent_u[best])

    axis = _orient_long_axis(axis)
    # with the long axis pointing down the image, +lateral points to the larger-x edge
    lateral = np.array([axis[1], -axis[0]])

    half_long = axis * (long_len / 2.0)
    half_short = lateral * (short_len / 2.0)

    def _pt(v: np.ndarray) -> Point2:
        return Point2(float(v[0]), float(v[1]))

    left_start = _pt(center - half_long - half_short)
    left_end = _pt(center + half_long - half_short)
    right_start = _pt(center - half_long + half_short)
    right_end = _pt(center + half_long + half_short)

    return BedModel(
        corners=(left_start, right_start, right_end, left_end),
        left_line=DirectedLine(left_start, left_end),
        right_line=DirectedLine(right_start, right_end),
        middle_line=DirectedLine(_pt(center - half_long), _pt(center + half_long)),
        long_axis_length=long_len,
        short_axis_length=short_len,
    )


def _offset_toward(p: Point2, line: DirectedLine, reference: Point2) -> float:
    """Perpendicular distance from p to line, positive on the side of reference."""
    ux, uy = line.unit()
    cross_p = ux * (p.y - line.start.y) - uy * (p.x - line.start.x)
    cross_ref = ux * (reference.y - line.start.y) - uy * (reference.x - line.start.x)
    return cross_p if cross_ref > 0 else -cross_p


def signed_distance(p: Point2, boundary: DirectedLine, bed: BedModel) -> float:
    """
    Signed perpendicular distance from a point to a long bed edge.

    Args:
        p: Landmark position
        boundary: bed.left_line or bed.right_line
        bed: Bed the boundary belongs to

    Returns:
        Distance in pixels, positive on the bed-interior side of the edge

    Raises:
        NonFinite: On NaN/Inf input
    """
    _require_finite(p.x, p.y)
    if boundary != bed.left_line and boundary != bed.right_line:
        raise ValueError("Boundary must be the left or right line of the bed")
    return _offset_toward(p, boundary, bed.centroid)


def _lateral_offset(p: Point2, bed: BedModel) -> float:
    """Offset from the middle line, negative toward the left line."""
    _require_finite(p.x, p.y)
    return _offset_toward(p, bed.middle_line, bed.right_line.start)


def head_point(skeleton: Skeleton, min_confidence: float = DEFAULT_SIDE_CONFIDENCE) -> Point2:
    """
    Resolve a single head position.

    Uses the nose when it passes the confidence threshold, otherwise the
    centroid of the eyes and ears that do.

    Args:
        skeleton: Skeleton
        min_confidence: Minimum keypoint confidence

    Returns:
        Head position

    Raises:
        MissingLandmark: If no head keypoint passes the threshold
    """
    if skeleton.confidence(NOSE) >= min_confidence:
        return skeleton.point(NOSE)

    usable = [skeleton.point(i) for i in HEAD_FALLBACK if skeleton.confidence(i) >= min_confidence]
    if not usable:
        raise MissingLandmark(f"No head keypoint with confidence >= {min_confidence}")
    xs, ys = zip(*usable)
    return Point2(sum(xs) / len(xs), sum(ys) / len(ys))


def _knees(skeleton: Skeleton, min_confidence: float) -> Tuple[Point2, Point2]:
    for index in (LEFT_KNEE, RIGHT_KNEE):
        if skeleton.confidence(index) < min_confidence:
            raise MissingLandmark(
                f"{KEYPOINT_NAMES[index]} confidence {skeleton.confidence(index):.3f} below {min_confidence}"
            )
    return skeleton.point(LEFT_KNEE), skeleton.point(RIGHT_KNEE)


def determine_side(skeleton: Skeleton, bed: BedModel, min_confidence: float = DEFAULT_SIDE_CONFIDENCE) -> Side:
    """
    Decide which half of the bed the body occupies.

    Left only when the head and both knees are strictly on the left-line
    side of the middle line, Right only when all three are strictly on the
    right-line side; anything else (straddling, a point exactly on the
    middle line) is Indeterminate.

    Raises:
        MissingLandmark: If the head or either knee is unusable
    """
    landmarks = (head_point(skeleton, min_confidence),) + _knees(skeleton, min_confidence)
    offsets = [_lateral_offset(p, bed) for p in landmarks]

    if all(o < 0 for o in offsets):
        return Side.LEFT
    if all(o > 0 for o in offsets):
        return Side.RIGHT
    return Side.INDETERMINATE


def _boundary_distance(p: Point2, bed: BedModel, side: Side) -> float:
    if side is Side.LEFT:
        return signed_distance(p, bed.left_line, bed)
    if side is Side.RIGHT:
        return signed_distance(p, bed.right_line, bed)
    # straddling body: the nearer long edge
    return min(signed_distance(p, bed.left_line, bed), signed_distance(p, bed.right_line, bed))


def knee_distances(
    skeleton: Skeleton,
    bed: BedModel,
    side: Side,
    min_confidence: float = DEFAULT_SIDE_CONFIDENCE
) -> Tuple[float, float]:
    """
    Signed distances of the left and right knee to the boundary chosen by side.

    Args:
        skeleton: Skeleton
        bed: Bed model
        side: Result of determine_side
        min_confidence: Minimum knee confidence

    Returns:
        (left-knee distance, right-knee distance) in pixels

    Raises:
        MissingLandmark: If either knee is unusable
    """
    left_knee, right_knee = _knees(skeleton, min_confidence)
    return (_boundary_distance(left_knee, bed, side), _boundary_distance(right_knee, bed, side))


def head_distance(
    skeleton: Skeleton,
    bed: BedModel,
    side: Side,
    min_confidence: float = DEFAULT_SIDE_CONFIDENCE
) -> float:
    """Signed head distance to the boundary chosen by side (same rules as the knees)."""
    return _boundary_distance(head_point(skeleton, min_confidence), bed, side)


def mirror_skeleton(skeleton: Skeleton) -> Skeleton:
    """Swap every left/right keypoint pair (13<->14, 5<->6, ...)."""
    return Skeleton(tuple(
        dataclasses.replace(skeleton.keypoints[MIRROR_INDEX[i]], index=i)
        for i in range(NUM_KEYPOINTS)
    ))


def apply_roi(frame: 'FrameRecord', t: RoiTransform) -> 'FrameRecord':
    """
    Crop and resize a frame into the 1080x828 working resolution.

    Args:
        frame: Frame in source image pixels
        t: ROI transform for that source image

    Returns:
        New frame with every coordinate mapped; confidences unchanged

    Raises:
        OutOfBounds: If the bed contour leaves the crop rectangle or any
            point lies outside the source image
    """
    if (frame.image_w, frame.image_h) != (t.source_width, t.source_height):
        raise InvalidParams(
            f"Frame is {frame.image_w}x{frame.image_h} but ROI expects "
            f"{t.source_width}x{t.source_height}"
        )
    for x, y in frame.bed_contour:
        if not t.contains(x, y):
            raise OutOfBounds(f"Bed contour point ({x}, {y}) outside ROI crop")
    for x, y, _ in frame.keypoints:
        if not (0 <= x <= t.source_width and 0 <= y <= t.source_height):
            raise OutOfBounds(f"Keypoint ({x}, {y}) outside source image")

    return dataclasses.replace(
        frame,
        image_w=t.target_width,
        image_h=t.target_height,
        bed_contour=tuple(t.map_xy(x, y) for x, y in frame.bed_contour),
        keypoints=tuple(t.map_xy(x, y) + (c,) for x, y, c in frame.keypoints),
    )


def invert_roi(frame: 'FrameRecord', t: RoiTransform) -> 'FrameRecord':
    """Map an ROI frame back into source image pixels."""
    return dataclasses.replace(
        frame,
        image_w=t.source_width,
        image_h=t.source_height,
        bed_contour=tuple(t.invert_xy(x, y) for x, y in frame.bed_contour),
        keypoints=tuple(t.invert_xy(x, y) + (c,) for x, y, c in frame.keypoints),
    )


def full_frame_roi(frame: 'FrameRecord') -> RoiTransform:
    return RoiTransform(frame.image_w, frame.image_h, Point2(0.0, 0.0), frame.image_w, frame.image_h)


def bed_roi(frame: 'FrameRecord', margin: float = 0.15) -> RoiTransform:
    """
    Crop rectangle around the bed contour, grown by margin on every side.

    Args:
        frame: Source frame
        margin: Fraction of the contour's width/height added on each side

    Returns:
        RoiTransform clamped to the source image

    Raises:
        DegenerateContour: If the contour has no width or no height
    """
    contour = np.asarray(frame.bed_contour, dtype=float)
    (x0, y0), (x1, y1) = contour.min(axis=0), contour.max(axis=0)
    if not (x1 > x0 and y1 > y0):
        raise DegenerateContour(f"Bed contour spans {x1 - x0:g}x{y1 - y0:g} px; cannot crop to it")
    pad_x, pad_y = (x1 - x0) * margin, (y1 - y0) * margin
    x0, y0 = max(0.0, x0 - pad_x), max(0.0, y0 - pad_y)
    x1, y1 = min(float(frame.image_w), x1 + pad_x), min(float(frame.image_h), y1 + pad_y)
    return RoiTransform(frame.image_w, frame.image_h, Point2(float(x0), float(y0)), float(x1 - x0), float(y1 - y0))


def normalize_frame(frame: 'FrameRecord', crop_to_bed: bool = False, margin: float = 0.15) -> 'FrameRecord':
    """
    Bring a frame to the ROI resolution.

    Frames already at 1080x828 pass through unless crop_to_bed is set.
    """
    if not crop_to_bed and (frame.image_w, frame.image_h) == (ROI_TARGET_WIDTH, ROI_TARGET_HEIGHT):
        return frame
    t = bed_roi(frame, margin) if crop_to_bed else full_frame_roi(frame)
    logger.debug(f"Applying ROI crop {t.crop_origin} {t.crop_width:.1f}x{t.crop_height:.1f}")
    return apply_roi(frame, t)
