"""
Per-frame risk scoring and debounced alerting over a stream of frame records.

Output records (one JSON object per line):
    {"type": "score", "ts", "session", "probability", "label", "degraded", ...}
    {"type": "alert", "ts", "session", "kind": "raised"|"cleared", "probability", "consecutive_frames", ...}
    {"type": "diagnostic", "line", "error", "message"}
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, Iterator, List, Optional, TextIO

from .errors import GeometryError, InvalidParams, MissingLandmark, RecordError, SchemaMismatch
from .feature_engineering import Label, build_features
from .frame_records import FrameRecord, ingest_frame, read_lines
from .gbdt_classifier import Forest, predict_proba
from .geometry_core import DEFAULT_SIDE_CONFIDENCE, fit_bed_model, normalize_frame

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MonitorConfig:
    """
    Attributes:
        raise_after: N consecutive at-risk frames raise an alert
        clear_after: M consecutive not-at-risk frames clear it
        threshold: Probability at or above which a frame is at risk
        echo_features: Include the feature vector in score records
    """

    raise_after: int = 3
    clear_after: int = 5
    threshold: float = 0.5
    echo_features: bool = False
    min_side_confidence: float = DEFAULT_SIDE_CONFIDENCE
    crop_to_bed: bool = False
    bed_margin: float = 0.15

    def __post_init__(self):
        if self.raise_after < 1 or self.clear_after < 1:
            raise InvalidParams(
                f"Debounce counts must be >= 1, got raise={self.raise_after}, clear={self.clear_after}"
            )
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidParams(f"threshold {self.threshold} outside [0, 1]")


@dataclass(frozen=True)
class RiskScore:
    ts: float
    session: str
    probability: Optional[float]
    label: Label
    degraded: bool = False
    reason: Optional[str] = None
    features: Optional[List[float]] = None

    def to_dict(self) -> Dict[str, Any]:
        d = {
            'type': 'score',
            'ts': self.ts,
            'session': self.session,
            'probability': self.probability,
            'label': self.label.value,
            'degraded': self.degraded,
        }
        if self.reason is not None:
            d['reason'] = self.reason
        if self.features is not None:
            d['features'] = self.features
        return d


class AlertKind(Enum):
    RAISED = 'raised'
    CLEARED = 'cleared'


@dataclass(frozen=True)
class AlertEvent:
    ts: float
    session: str
    kind: AlertKind
    probability: Optional[float]
    consecutive_frames: int
    reason: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        d = {
            'type': 'alert',
            'ts': self.ts,
            'session': self.session,
            'kind': self.kind.value,
            'probability': self.probability,
            'consecutive_frames': self.consecutive_frames,
        }
        if self.reason is not None:
            d['reason'] = self.reason
        return d


@dataclass
class AlertState:
    consecutive_at_risk: int = 0
    consecutive_safe: int = 0
    active: bool = False
    last_ts: float = 0.0
    last_probability: Optional[float] = None


@dataclass
class AlertDebouncer:
    """
    Hysteresis over per-frame labels, one AlertState per session.

    Raised fires on the frame where the at-risk run reaches raise_after
    while no alert is active; Cleared fires on the frame where the run of
    not-at-risk frames since the alert reaches clear_after.
    """

    raise_after: int
    clear_after: int
    states: Dict[str, AlertState] = field(default_factory=dict)

    def __post_init__(self):
        if self.raise_after < 1 or self.clear_after < 1:
            raise InvalidParams("Debounce counts must be >= 1")

    def update(self, session: str, ts: float, label: Label, probability: Optional[float] = None) -> Optional[AlertEvent]:
        state = self.states.setdefault(session, AlertState())
        state.last_ts = ts
        state.last_probability = probability

        if label is Label.AT_RISK:
            state.consecutive_at_risk += 1
            state.consecutive_safe = 0
            if not state.active and state.consecutive_at_risk == self.raise_after:
                state.active = True
                return AlertEvent(ts, session, AlertKind.RAISED, probability, self.raise_after)
            return None

        state.consecutive_at_risk = 0
        if state.active:
            state.consecutive_safe += 1
            if state.consecutive_safe == self.clear_after:
                state.active = False
                state.consecutive_safe = 0
                return AlertEvent(ts, session, AlertKind.CLEARED, probability, self.clear_after)
        return None

    def flush(self) -> List[AlertEvent]:
        """Clear every active alert (end of stream), sessions in sorted order."""
        events = []
        for session in sorted(self.states):
            state = self.states[session]
            if state.active:
                events.append(AlertEvent(
                    state.last_ts, session, AlertKind.CLEARED, state.last_probability,
                    state.consecutive_safe, reason='end_of_stream'
                ))
                state.active = False
                state.consecutive_safe = 0
        return events


def score_frame(
    frame: FrameRecord,
    model: Forest,
    cfg: MonitorConfig,
    previous: Optional[RiskScore] = None
) -> RiskScore:
    """
    Score one frame.

    Frames whose head or knees cannot be resolved, or whose bed contour is
    degenerate, yield a degraded score that carries forward the previous
    label and probability (not at risk when there is no previous score).

    Raises:
        SchemaMismatch: If the model has no feature set to build
    """
    if model.feature_set is None:
        raise SchemaMismatch("Model carries no feature set; it cannot score frames")

    try:
        normalized = normalize_frame(frame, cfg.crop_to_bed, cfg.bed_margin)
        bed = fit_bed_model(normalized.bed_contour)
        features = build_features(normalized.skeleton(), bed, model.feature_set, cfg.min_side_confidence)
    except (MissingLandmark, GeometryError) as e:
        logger.warning(f"Degraded score for session '{frame.session}' at ts={frame.ts}: {e}")
        return RiskScore(
            ts=frame.ts,
            session=frame.session,
            probability=previous.probability if previous is not None else None,
            label=previous.label if previous is not None else Label.NOT_AT_RISK,
            degraded=True,
            reason=f"{type(e).__name__}: {e}",
        )

    probability = predict_proba(model, features)
    return RiskScore(
        ts=frame.ts,
        session=frame.session,
        probability=probability,
        label=Label.AT_RISK if probability >= cfg.threshold else Label.NOT_AT_RISK,
        features=[float(v) for v in features.values] if cfg.echo_features else None,
    )


def run_monitor(lines: Iterable[str], model: Forest, cfg: MonitorConfig) -> Iterator[Dict[str, Any]]:
    """
    Score a stream of frame records and emit scores, alerts and diagnostics.

    Bad records become diagnostics and the stream continues. Active alerts
    are cleared when the input ends.

    Args:
        lines: Text records, one frame each
        model: Trained forest
        cfg: Monitor settings

    Yields:
        Output records in processing order
    """
    debouncer = AlertDebouncer(cfg.raise_after, cfg.clear_after)
    last_ts: Dict[str, float] = {}
    last_score: Dict[str, RiskScore] = {}

    for number, line in read_lines(lines):
        try:
            frame = ingest_frame(line, number, last_ts)
        except RecordError as e:
            logger.warning(f"Rejected record: {e}")
            yield {'type': 'diagnostic', 'line': number, 'error': type(e).__name__, 'message': e.message}
            continue

        score = score_frame(frame, model, cfg, last_score.get(frame.session))
        last_score[frame.session] = score
        yield score.to_dict()

        event = debouncer.update(frame.session, frame.ts, score.label, score.probability)
        if event is not None:
            logger.info(f"Alert {event.kind.value} for session '{event.session}' at ts={event.ts}")
            yield event.to_dict()

    for event in debouncer.flush():
        logger.info(f"Alert cleared for session '{event.session}' at end of stream")
        yield event.to_dict()


def format_output_record(record: Dict[str, Any]) -> str:
    return json.dumps(record, separators=(',', ':'), allow_nan=False)


def write_output(records: Iterable[Dict[str, Any]], stream: TextIO) -> Dict[str, int]:
    """
    Write output records as lines.

    Returns:
        Count of records per type
    """
    counts: Dict[str, int] = {'score': 0, 'alert': 0, 'diagnostic': 0}
    for record in records:
        stream.write(format_output_record(record) + '\n')
        counts[record['type']] += 1
    stream.flush()
    return counts
