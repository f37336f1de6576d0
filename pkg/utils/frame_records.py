"""
Frame records: the post-pose interface of the pipeline.

One record per line (JSON object):
    {"ts": 12.5, "session": "bed-3", "image_w": 1080, "image_h": 828,
     "bed_contour": [[x, y], ...], "keypoints": [[x, y, confidence] x 17]}
"""

import json
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Iterator, Optional, Sequence, Tuple

from .errors import ParseError, ValidationError
from .geometry_core import NUM_KEYPOINTS, Skeleton

logger = logging.getLogger(__name__)

FRAME_FIELDS = ('ts', 'session', 'image_w', 'image_h', 'bed_contour', 'keypoints')


@dataclass(frozen=True)
class FrameRecord:
    ts: float
    session: str
    image_w: int
    image_h: int
    bed_contour: Tuple[Tuple[float, float], ...]
    keypoints: Tuple[Tuple[float, float, float], ...]

    def skeleton(self) -> Skeleton:
        return Skeleton.from_rows(self.keypoints)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'ts': float(self.ts),
            'session': self.session,
            'image_w': self.image_w,
            'image_h': self.image_h,
            'bed_contour': [[float(x), float(y)] for x, y in self.bed_contour],
            'keypoints': [[float(x), float(y), float(c)] for x, y, c in self.keypoints],
        }


def serialize_frame(frame: FrameRecord) -> str:
    """Canonical single-line JSON form of a frame."""
    return json.dumps(frame.to_dict(), separators=(',', ':'), allow_nan=False)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _number_rows(value: Any, width: int, field: str, line_number: Optional[int]) -> Tuple[Tuple[float, ...], ...]:
    if not isinstance(value, list):
        raise ParseError(f"'{field}' must be a list", line_number)
    rows = []
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != width or not all(_is_number(v) for v in row):
            raise ParseError(f"'{field}'[{i}] must be a list of {width} numbers", line_number)
        rows.append(tuple(float(v) for v in row))
    return tuple(rows)


def frame_from_dict(obj: Any, line_number: Optional[int] = None) -> FrameRecord:
    """
    Validate a decoded record and build a FrameRecord.

    Raises:
        ParseError: Missing fields or wrong types
        ValidationError: Counts, ranges or bounds violated
    """
    if not isinstance(obj, dict):
        raise ParseError("Record must be a JSON object", line_number)
    missing = [f for f in FRAME_FIELDS if f not in obj]
    if missing:
        raise ParseError(f"Missing field(s): {', '.join(missing)}", line_number)

    ts, session = obj['ts'], obj['session']
    image_w, image_h = obj['image_w'], obj['image_h']
    if not _is_number(ts):
        raise ParseError("'ts' must be a number", line_number)
    if not isinstance(session, str):
        raise ParseError("'session' must be a string", line_number)
    for name, dim in (('image_w', image_w), ('image_h', image_h)):
        if not _is_number(dim) or not math.isfinite(dim) or float(dim) != int(dim):
            raise ParseError(f"'{name}' must be an integer", line_number)

    contour = _number_rows(obj['bed_contour'], 2, 'bed_contour', line_number)
    keypoints = _number_rows(obj['keypoints'], 3, 'keypoints', line_number)

    if not math.isfinite(ts):
        raise ValidationError("non-finite timestamp", line_number)
    if not session:
        raise ValidationError("empty session id", line_number)
    image_w, image_h = int(image_w), int(image_h)
    if image_w <= 0 or image_h <= 0:
        raise ValidationError(f"image size must be positive, got {image_w}x{image_h}", line_number)
    if len(keypoints) != NUM_KEYPOINTS:
        raise ValidationError(f"expected {NUM_KEYPOINTS} keypoints, got {len(keypoints)}", line_number)
    if len(contour) < 4:
        raise ValidationError(f"bed contour needs at least 4 points, got {len(contour)}", line_number)

    for x, y in contour + tuple(kp[:2] for kp in keypoints):
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValidationError("non-finite coordinate", line_number)
        if not (0.0 <= x <= image_w and 0.0 <= y <= image_h):
            raise ValidationError(f"coordinate ({x}, {y}) outside {image_w}x{image_h} image", line_number)
    for i, (_, _, c) in enumerate(keypoints):
        if not 0.0 <= c <= 1.0:
            raise ValidationError(f"keypoint {i} confidence {c} outside [0, 1]", line_number)

    return FrameRecord(float(ts), session, image_w, image_h, contour, keypoints)


def parse_frame(line: str, line_number: Optional[int] = None) -> FrameRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e.msg}", line_number) from e
    return frame_from_dict(obj, line_number)


def ingest_frame(
    line: str,
    line_number: Optional[int] = None,
    last_ts: Optional[Dict[str, float]] = None
) -> FrameRecord:
    """
    Parse and validate one stream record.

    Args:
        line: One complete text record
        line_number: 1-based position in the stream, used in diagnostics
        last_ts: Per-session last accepted timestamp; checked for
            monotonicity and updated when the record is accepted

    Returns:
        Validated FrameRecord

    Raises:
        ParseError: Malformed record
        ValidationError: Invariant breach (including a non-monotone timestamp)
    """
    frame = parse_frame(line, line_number)
    if last_ts is not None:
        previous = last_ts.get(frame.session)
        if previous is not None and frame.ts < previous:
            raise ValidationError(
                f"non-monotone timestamp {frame.ts} after {previous} in session '{frame.session}'",
                line_number
            )
        last_ts[frame.session] = frame.ts
    return frame


def read_lines(source: Iterable[str]) -> Iterator[Tuple[int, str]]:
    """Yield (line_number, text) for non-blank lines."""
    for number, line in enumerate(source, start=1):
        if line.strip():
            yield number, line.rstrip('\n')


def write_frames(frames: Sequence[FrameRecord], path: str):
    with open(path, 'w') as f:
        for frame in frames:
            f.write(serialize_frame(frame) + '\n')
    logger.info(f"Wrote {len(frames)} frames to {path}")
