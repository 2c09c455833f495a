"""Touch features: touch coordinates followed by differential magnetometer
vectors over the half second before the touch.

Row layout for a single touch (62 values)::

    x, y, c20.X, c20.Y, c20.Z, ..., c1.X, c1.Y, c1.Z

where ``c_k = m - v(t - k*25ms)`` and ``m`` is the reading at the touch.
Pinch rows (64 values) start with both touch locations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .device import SensorTrace, TouchEvent

N_LAGS = 20
LAG = 0.025  # s
WINDOW = N_LAGS * LAG
TOUCH_DIM = 2 + 3 * N_LAGS
PINCH_DIM = 4 + 3 * N_LAGS
PINCH_WINDOW = 0.100  # s


class FeatureWindowError(ValueError):
    pass


class NotAPinchError(ValueError):
    pass


@dataclass
class FeatureVector:
    values: np.ndarray
    label: Optional[str] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or len(self.values) not in (TOUCH_DIM, PINCH_DIM):
            raise ValueError(f"feature rows have {TOUCH_DIM} or {PINCH_DIM} values, got shape {self.values.shape}")

    @property
    def dim(self) -> int:
        return len(self.values)


def differential_block(trace: SensorTrace, t: float) -> np.ndarray:
    """The 60 differential components anchored at time ``t``, oldest lag first."""
    if len(trace) == 0 or not trace.times[0] - 1e-9 <= t <= trace.times[-1] + 1e-9:
        raise FeatureWindowError(f"touch at {t}s outside the trace span")
    if t - WINDOW < trace.times[0] - 1e-9:
        raise FeatureWindowError(f"need {WINDOW}s of samples before {t}s, trace starts at {trace.times[0]}s")
    i = trace.index_at(t)
    m = trace.fields[i]
    out = np.empty((N_LAGS, 3))
    for k in range(N_LAGS, 0, -1):
        j = trace.index_at(t - k * LAG)
        out[N_LAGS - k] = m - trace.fields[j]
    return out.ravel()


def extract_touch_features(trace: SensorTrace, touch: TouchEvent, meta: Optional[dict] = None) -> FeatureVector:
    diffs = differential_block(trace, touch.timestamp)
    values = np.concatenate([[touch.x, touch.y], diffs])
    return FeatureVector(values, touch.true_label, dict(meta or {}, t=touch.timestamp))


def canonical_pair(a: TouchEvent, b: TouchEvent) -> Tuple[TouchEvent, TouchEvent]:
    return (a, b) if (a.x, a.y) <= (b.x, b.y) else (b, a)


def extract_pinch_features(trace: SensorTrace, touch_a: TouchEvent, touch_b: TouchEvent,
                           meta: Optional[dict] = None) -> FeatureVector:
    if abs(touch_a.timestamp - touch_b.timestamp) > PINCH_WINDOW + 1e-9:
        raise NotAPinchError(f"touches {abs(touch_a.timestamp - touch_b.timestamp):.3f}s apart exceed the pinch window")
    t = min(touch_a.timestamp, touch_b.timestamp)
    a, b = canonical_pair(touch_a, touch_b)
    diffs = differential_block(trace, t)
    values = np.concatenate([[a.x, a.y, b.x, b.y], diffs])
    label = a.true_label if a.true_label == b.true_label else a.true_label or b.true_label
    return FeatureVector(values, label, dict(meta or {}, t=t))


@dataclass
class Scaler:
    mean: np.ndarray
    scale: np.ndarray  # population std; zero-variance columns keep 0

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        safe = np.where(self.scale > 0, self.scale, 1.0)
        return np.where(self.scale > 0, (X - self.mean) / safe, 0.0)

    @classmethod
    def fit(cls, X) -> "Scaler":
        X = np.asarray(X, dtype=float)
        if len(X) == 0:
            raise ValueError("cannot standardize an empty set")
        scale = np.where(np.ptp(X, axis=0) > 0, X.std(axis=0), 0.0)
        return cls(X.mean(axis=0), scale)


def standardize(train: Sequence) -> Tuple[Scaler, np.ndarray]:
    """Fit per-feature z-scoring on ``train`` (FeatureVectors or a matrix)."""
    X = np.array([r.values if isinstance(r, FeatureVector) else r for r in train], dtype=float)
    scaler = Scaler.fit(X)
    return scaler, scaler.transform(X)


def group_touches(touches: Sequence[TouchEvent], window: float = PINCH_WINDOW) -> List[List[TouchEvent]]:
    """Group time-ordered touches whose onsets fall within ``window`` of the
    group's first touch."""
    groups: List[List[TouchEvent]] = []
    for t in sorted(touches, key=lambda e: e.timestamp):
        if groups and t.timestamp - groups[-1][0].timestamp <= window + 1e-9:
            groups[-1].append(t)
        else:
            groups.append([t])
    return groups
