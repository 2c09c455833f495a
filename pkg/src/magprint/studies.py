"""Run a study preset end to end: one synthetic session per participant,
then feature rows for every touch or pinch."""
from __future__ import annotations

from typing import List, Optional, Tuple

from .classifier import Dataset
from .device import SensorTrace
from .features import extract_pinch_features, extract_touch_features, group_touches
from .synth import Scenario, participant_seeds, synthesize_session


def session_rows(trace: SensorTrace, s: Scenario, session: int = 0) -> list:
    rows = []
    if s.kind == "grid":
        for t in trace.touches:
            cell = s.grid.cell_of(s.device, t.x, t.y)
            rows.append(extract_touch_features(trace, t, {"session": session, "cell": list(cell)}))
    else:
        for group in group_touches(trace.touches):
            a, b = group
            cells = sorted([list(s.grid.cell_of(s.device, e.x, e.y)) for e in (a, b)])
            rows.append(extract_pinch_features(trace, a, b, {"session": session, "cell": cells[0] + cells[1]}))
    return rows


def run_study(s: Scenario, seed: int, participants: Optional[int] = None) -> Tuple[List[SensorTrace], Dataset]:
    n = s.participants if participants is None else participants
    traces, rows = [], []
    for p, pseed in enumerate(participant_seeds(seed, n)):
        trace = synthesize_session(s, pseed)
        trace.meta["participant"] = p
        traces.append(trace)
        rows.extend(session_rows(trace, s, p))
    labels = sorted({s.target_label(t) for t in s.targets})
    meta = {"scenario": s.name, "device": s.device.name, "grid": [s.grid.rows, s.grid.cols], "seed": seed,
            "participants": n, "kind": s.kind}
    return traces, Dataset(rows, labels, meta)
