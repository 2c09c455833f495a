"""Gesture vocabulary and the streaming recognizer.

The recognizer folds over one trace: touches within the pinch window are
paired into a Pinch, lone touches become Taps, and each is labelled by the
matching classifier.  A Hover event is reported when a magnet perturbs the
field before a touch lands.
"""
from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Tuple

import numpy as np

from .classifier import ClassifierModel, DimensionMismatchError
from .device import SensorTrace
from .features import (PINCH_DIM, PINCH_WINDOW, TOUCH_DIM, FeatureWindowError, extract_pinch_features,
                       extract_touch_features, group_touches)

HOVER_THRESHOLD = 5.0  # uT
ROTARY_THRESHOLD = 10.0  # uT
BASELINE_SPAN = 0.25  # s
HOVER_RUN = 3  # consecutive samples
ROTARY_CLAMP = 90.0  # degrees either side of onset


class RecognitionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class VocabularyConfig:
    plain_fingers: int
    fingerprint_count: int
    min_touch_points: int = 1
    max_touch_points: int = 5
    chording_allowed: bool = True

    def __post_init__(self):
        if min(self.plain_fingers, self.fingerprint_count, self.min_touch_points, self.max_touch_points) < 0:
            raise ValueError("vocabulary counts must be non-negative")
        if not self.min_touch_points <= self.max_touch_points <= self.plain_fingers + self.fingerprint_count:
            raise ValueError("need min_touch_points <= max_touch_points <= number of fingers")


@dataclass(frozen=True, order=True)
class GestureClass:
    touch_count: int
    fingerprint_set: FrozenSet[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "fingerprint_set", frozenset(self.fingerprint_set))
        if self.touch_count < len(self.fingerprint_set):
            raise ValueError("more fingerprints than touch points")

    @classmethod
    def from_label(cls, label: str, touch_count: int = 1) -> "GestureClass":
        ids = frozenset() if label in ("plain", "", None) else frozenset(label.split("+"))
        return cls(touch_count, ids)

    @property
    def label(self) -> str:
        return "+".join(sorted(self.fingerprint_set)) or "plain"

    def __str__(self):
        return f"{self.touch_count}:{self.label}"

    def sort_key(self):
        return (self.touch_count, len(self.fingerprint_set), sorted(self.fingerprint_set))


def fingerprint_ids(n: int) -> List[str]:
    return [f"F{i + 1}" for i in range(n)]


def enumerate_vocabulary(cfg: VocabularyConfig) -> List[GestureClass]:
    """Distinguishable (touch count, fingerprint set) classes.

    A touch of ``k`` fingers that includes ``j`` magnetic ones is realizable
    when the remaining ``k - j`` fingers are available as plain fingers.
    """
    ids = fingerprint_ids(cfg.fingerprint_count)
    out = []
    for k in range(max(cfg.min_touch_points, 1), cfg.max_touch_points + 1):
        for j in range(0, min(k, len(ids)) + 1):
            if k - j > cfg.plain_fingers:
                continue
            if j >= 2 and not cfg.chording_allowed:
                continue
            out.extend(GestureClass(k, frozenset(c)) for c in itertools.combinations(ids, j))
    return sorted(out, key=GestureClass.sort_key)


class EventKind(str, enum.Enum):
    TAP = "tap"
    PINCH = "pinch"
    ROTARY = "rotary"
    HOVER = "hover"


@dataclass
class GestureEvent:
    kind: EventKind
    timestamp: float
    gesture: Optional[GestureClass] = None
    payload: dict = field(default_factory=dict)
    truth: Optional[str] = None

    @property
    def label(self) -> Optional[str]:
        return self.gesture.label if self.gesture is not None else None


@dataclass(frozen=True)
class RecognizerConfig:
    pinch_window: float = PINCH_WINDOW
    hover_threshold: float = HOVER_THRESHOLD
    hover_lookback: float = 1.0
    detect_hover: bool = True


def _window(trace: SensorTrace, t0: float, t1: float) -> Tuple[np.ndarray, np.ndarray]:
    mask = (trace.times >= t0 - 1e-9) & (trace.times <= t1 + 1e-9)
    return trace.times[mask], trace.fields[mask]


def hover_detect(times, fields, threshold: float = HOVER_THRESHOLD, baseline_span: float = BASELINE_SPAN,
                 run: int = HOVER_RUN) -> Optional[Tuple[int, float]]:
    """Detect an approaching magnet in a window of samples.

    The baseline is the per-axis median of the first ``baseline_span``
    seconds.  Fires when the deviation norm exceeds ``threshold`` for
    ``run`` consecutive samples; returns (sign of the dominant deviation
    component at the confirming sample, onset timestamp).
    """
    times = np.asarray(times, dtype=float)
    fields = np.asarray(fields, dtype=float)
    if len(times) < 2 or times[-1] - times[0] < baseline_span - 1e-9:
        raise ValueError(f"hover window shorter than {baseline_span}s")
    base = np.median(fields[times < times[0] + baseline_span - 1e-9], axis=0)
    dev = fields - base
    above = np.linalg.norm(dev, axis=1) > threshold
    streak = 0
    for i, hit in enumerate(above):
        streak = streak + 1 if hit else 0
        if streak == run:
            d = dev[i]
            sign = 1 if d[np.argmax(np.abs(d))] > 0 else -1
            return sign, float(times[i - run + 1])
    return None


def rotary_angle(times, fields, touch_time: float, baseline=None, threshold: float = ROTARY_THRESHOLD,
                 clamp: float = ROTARY_CLAMP) -> np.ndarray:
    """In-plane field angle (degrees) relative to the touch onset.

    Returns one value per sample at or after ``touch_time``; NaN where the
    in-plane magnitude is below ``threshold`` or before the first resolvable
    sample.  ``baseline`` defaults to the median of the window's first
    quarter second, which must precede the magnet's arrival.
    """
    times = np.asarray(times, dtype=float)
    fields = np.asarray(fields, dtype=float)
    if baseline is None:
        baseline = np.median(fields[times < times[0] + BASELINE_SPAN - 1e-9], axis=0)
    held = times >= touch_time - 1e-9
    dev = fields[held] - np.asarray(baseline, dtype=float)
    planar = dev[:, :2]
    ok = np.hypot(planar[:, 0], planar[:, 1]) >= threshold
    out = np.full(len(dev), np.nan)
    if not ok.any():
        return out
    raw = np.arctan2(planar[ok, 1], planar[ok, 0])
    rel = np.degrees(np.unwrap(raw) - np.unwrap(raw)[0])
    out[ok] = np.clip(rel, -clamp, clamp)
    return out


def recognize_stream(trace: SensorTrace, tap_model: Optional[ClassifierModel] = None,
                     pinch_model: Optional[ClassifierModel] = None,
                     cfg: RecognizerConfig = RecognizerConfig()) -> List[GestureEvent]:
    """Turn a trace's touches into gesture events in timestamp order.

    Touches that cannot be classified (short history, missing model,
    unsupported contact count) are skipped with a RecognitionWarning.
    """
    for model, dim, name in ((tap_model, TOUCH_DIM, "tap"), (pinch_model, PINCH_DIM, "pinch")):
        if model is not None and model.dim != dim:
            raise DimensionMismatchError(f"{name} model expects {model.dim} features, {name} extractor produces {dim}")
    events: List[GestureEvent] = []
    for group in group_touches(trace.touches, cfg.pinch_window):
        t = min(e.timestamp for e in group)
        truth = group[0].true_label
        if cfg.detect_hover:
            t0 = max(trace.times[0], t - cfg.hover_lookback)
            wt, wf = _window(trace, t0, t)
            if len(wt) >= 2 and wt[-1] - wt[0] >= BASELINE_SPAN:
                hit = hover_detect(wt, wf, cfg.hover_threshold)
                if hit is not None and hit[1] < t:
                    events.append(GestureEvent(EventKind.HOVER, hit[1], None, {"sign": hit[0]}, truth))
        try:
            if len(group) == 1:
                if tap_model is None:
                    raise LookupError("no tap model")
                fv = extract_touch_features(trace, group[0])
                label = tap_model.predict_many([fv.values])[0]
                events.append(GestureEvent(EventKind.TAP, t, GestureClass.from_label(label, 1),
                                           {"x": group[0].x, "y": group[0].y}, truth))
            elif len(group) == 2:
                if pinch_model is None:
                    raise LookupError("no pinch model")
                fv = extract_pinch_features(trace, group[0], group[1])
                label = pinch_model.predict_many([fv.values])[0]
                events.append(GestureEvent(EventKind.PINCH, t, GestureClass.from_label(label, 2),
                                           {"points": [list(fv.values[:2]), list(fv.values[2:4])]}, truth))
            else:
                raise LookupError(f"{len(group)} simultaneous contacts")
        except (FeatureWindowError, LookupError) as exc:
            warnings.warn(f"touch at {t:.3f}s skipped: {exc}", RecognitionWarning, stacklevel=2)
    events.sort(key=lambda e: e.timestamp)
    return events


def rotary_event(times, fields, touch_time: float, **kwargs) -> GestureEvent:
    angles = rotary_angle(times, fields, touch_time, **kwargs)
    valid = angles[~np.isnan(angles)]
    delta = float(valid[-1]) if len(valid) else math.nan
    return GestureEvent(EventKind.ROTARY, touch_time, None, {"angle_delta": delta})
