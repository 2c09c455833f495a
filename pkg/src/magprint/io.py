"""Line-delimited file formats.

Every file starts with a JSON header line carrying ``format`` and
``version``; each following line is one JSON record.  Floats are written
with Python's shortest round-trip repr, so write -> read -> write is
byte-identical.

Trace (``magprint-trace``)::

    {"format":"magprint-trace","version":1,"device":{...},"sample_rate":40.0,
     "noise_sigma":1.0,"seed":7,"n_samples":N,"n_touches":M,"meta":{...}}
    ["S",t,bx,by,bz]                       N times
    ["T",t,x,y,label,contact_count,gesture_id]   M times

Dataset (``magprint-dataset``): header with ``dim``, ``classes``, ``n_rows``
and ``provenance``; then ``{"label":...,"values":[...],"meta":{...}}`` rows.

Model (``magprint-model``): header with hyperparameters, then one
``["scaler",mean,scale]`` record and one ``["class",name,bias,weights]``
record per class.

Report (``magprint-report``): header with the config and summary numbers,
then ``["fold",i,acc]``, ``["confusion",class,counts]`` and
``["cell",key,acc]`` records.

Events (``magprint-events``): header with ``n_events``, then one record per
gesture event.

Scenarios are YAML documents (see ``scenario_to_dict``).
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterator, List, Optional, Tuple

import numpy as np
import yaml

from .classifier import ClassifierModel, CvReport, Dataset
from .device import DeviceModel, SensorTrace, TouchEvent
from .features import FeatureVector, Scaler
from .gestures import EventKind, GestureClass, GestureEvent
from .magnetics import MagnetSpec
from .synth import FingerModel, Grid, Jitter, RetractionPolicy, Scenario, Target, Timing

VERSION = 1
TRACE_FORMAT = "magprint-trace"
DATASET_FORMAT = "magprint-dataset"
MODEL_FORMAT = "magprint-model"
REPORT_FORMAT = "magprint-report"
EVENTS_FORMAT = "magprint-events"


class FormatError(ValueError):
    pass


class VersionError(FormatError):
    pass


class ParseError(FormatError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays, tuples and enums into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if hasattr(obj, "value") and isinstance(obj.value, str):
        return obj.value
    return obj


def _dump(obj) -> str:
    return json.dumps(plain(obj), separators=(",", ":"), ensure_ascii=False)


def _write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


class _Records:
    """Numbered JSON records of a line-delimited file."""

    def __init__(self, path, fmt: str):
        self.path = path
        with open(path, encoding="utf-8") as fh:
            self.lines = fh.read().split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        if not self.lines:
            raise ParseError(path, 1, "empty file, expected a header")
        self.header = self.parse(0, dict)
        if self.header.get("format") != fmt:
            raise ParseError(path, 1, f"expected format {fmt!r}, found {self.header.get('format')!r}")
        if self.header.get("version") != VERSION:
            raise VersionError(f"{path}: unsupported {fmt} version {self.header.get('version')!r} (supported: {VERSION})")
        self.pos = 1

    def parse(self, i: int, kind=None):
        try:
            rec = json.loads(self.lines[i])
        except json.JSONDecodeError as exc:
            raise ParseError(self.path, i + 1, f"malformed record: {exc.msg}") from None
        if kind is not None and not isinstance(rec, kind):
            raise ParseError(self.path, i + 1, f"expected a JSON {kind.__name__}")
        return rec

    def take(self, n: int, what: str) -> Iterator[Tuple[int, Any]]:
        for _ in range(n):
            if self.pos >= len(self.lines):
                raise ParseError(self.path, self.pos + 1, f"file ends early: expected {n} {what} records")
            yield self.pos + 1, self.parse(self.pos)
            self.pos += 1

    def finish(self):
        if self.pos < len(self.lines):
            raise ParseError(self.path, self.pos + 1, "unexpected record after the declared count")

    def fail(self, line: int, message: str):
        raise ParseError(self.path, line, message)


def _count(header: dict, key: str, path) -> int:
    n = header.get(key)
    if not isinstance(n, int) or n < 0:
        raise ParseError(path, 1, f"header field {key!r} must be a non-negative integer")
    return n


# -- traces -------------------------------------------------------------------------

def write_trace(trace: SensorTrace, path) -> None:
    if len(trace) == 0:
        raise FormatError("refusing to write a trace without samples")
    dev = trace.device
    meta = dict(trace.meta)
    seed = meta.pop("seed", None)
    header = {
        "format": TRACE_FORMAT,
        "version": VERSION,
        "device": dev.to_dict() if dev is not None else None,
        "sample_rate": dev.sample_rate if dev is not None else None,
        "noise_sigma": dev.noise_sigma if dev is not None else None,
        "seed": seed,
        "n_samples": len(trace),
        "n_touches": len(trace.touches),
        "meta": meta,
    }
    lines = [_dump(header)]
    lines += [_dump(["S", t, *f]) for t, f in zip(trace.times.tolist(), trace.fields.tolist())]
    lines += [_dump(["T", e.timestamp, e.x, e.y, e.true_label, e.contact_count, e.gesture_id]) for e in trace.touches]
    _write_lines(path, lines)


def read_trace(path) -> SensorTrace:
    rd = _Records(path, TRACE_FORMAT)
    h = rd.header
    n_s, n_t = _count(h, "n_samples", path), _count(h, "n_touches", path)
    times, fields, touches = [], [], []
    for line, rec in rd.take(n_s, "sample"):
        if not (isinstance(rec, list) and len(rec) == 5 and rec[0] == "S"):
            rd.fail(line, "expected a sample record [\"S\", t, bx, by, bz]")
        times.append(rec[1])
        fields.append(rec[2:])
    for line, rec in rd.take(n_t, "touch"):
        if not (isinstance(rec, list) and len(rec) == 7 and rec[0] == "T"):
            rd.fail(line, "expected a touch record [\"T\", t, x, y, label, contact_count, gesture_id]")
        try:
            touches.append(TouchEvent(*rec[1:]))
        except (TypeError, ValueError) as exc:
            rd.fail(line, f"bad touch: {exc}")
    rd.finish()
    try:
        device = DeviceModel.from_dict(h["device"]) if h.get("device") is not None else None
        meta = {"seed": h.get("seed"), **h.get("meta", {})}
        return SensorTrace(np.array(times, dtype=float), np.array(fields, dtype=float).reshape(-1, 3), touches,
                           device, meta)
    except (TypeError, ValueError, KeyError) as exc:
        raise ParseError(path, 1, f"inconsistent trace: {exc}") from None


# -- datasets -----------------------------------------------------------------------

def write_dataset(data: Dataset, path) -> None:
    dim = data.dim if len(data) else 0
    header = {"format": DATASET_FORMAT, "version": VERSION, "dim": dim, "classes": list(data.classes),
              "n_rows": len(data), "provenance": data.meta}
    lines = [_dump(header)]
    lines += [_dump({"label": r.label, "values": r.values, "meta": r.meta}) for r in data.rows]
    _write_lines(path, lines)


def read_dataset(path) -> Dataset:
    rd = _Records(path, DATASET_FORMAT)
    h = rd.header
    n = _count(h, "n_rows", path)
    dim = _count(h, "dim", path)
    classes = h.get("classes")
    if not isinstance(classes, list):
        rd.fail(1, "header field 'classes' must be a list")
    rows = []
    for line, rec in rd.take(n, "row"):
        if not isinstance(rec, dict) or "values" not in rec:
            rd.fail(line, "expected a row object with 'label', 'values' and 'meta'")
        if len(rec["values"]) != dim:
            rd.fail(line, f"row has {len(rec['values'])} values, header declares dim {dim}")
        if rec.get("label") not in classes:
            rd.fail(line, f"label {rec.get('label')!r} not in the header class list")
        try:
            rows.append(FeatureVector(np.array(rec["values"], dtype=float), rec["label"], rec.get("meta", {})))
        except ValueError as exc:
            rd.fail(line, str(exc))
    rd.finish()
    return Dataset(rows, classes, h.get("provenance", {}))


# -- models -------------------------------------------------------------------------

def write_model(model: ClassifierModel, path, provenance: Optional[dict] = None) -> None:
    header = {"format": MODEL_FORMAT, "version": VERSION, "scheme": model.scheme, "dim": model.dim,
              "classes": model.classes, "lam": model.lam, "epochs": model.epochs, "seed": model.seed,
              "provenance": provenance or {}}
    lines = [_dump(header), _dump(["scaler", model.scaler.mean, model.scaler.scale])]
    lines += [_dump(["class", c, model.biases[k], model.weights[k]]) for k, c in enumerate(model.classes)]
    _write_lines(path, lines)


def read_model(path) -> ClassifierModel:
    return read_model_with_provenance(path)[0]


def read_model_with_provenance(path) -> Tuple[ClassifierModel, dict]:
    rd = _Records(path, MODEL_FORMAT)
    h = rd.header
    dim = _count(h, "dim", path)
    classes = h.get("classes") or []
    (line, sc), = rd.take(1, "scaler")
    if not (isinstance(sc, list) and len(sc) == 3 and sc[0] == "scaler" and len(sc[1]) == dim == len(sc[2])):
        rd.fail(line, f"expected [\"scaler\", mean, scale] with {dim} values each")
    W, b = np.zeros((len(classes), dim)), np.zeros(len(classes))
    for k, (line, rec) in enumerate(rd.take(len(classes), "class")):
        if not (isinstance(rec, list) and len(rec) == 4 and rec[0] == "class" and rec[1] == classes[k]
                and len(rec[3]) == dim):
            rd.fail(line, f"expected [\"class\", {classes[k]!r}, bias, {dim} weights]")
        b[k], W[k] = rec[2], rec[3]
    rd.finish()
    scaler = Scaler(np.array(sc[1], dtype=float), np.array(sc[2], dtype=float))
    model = ClassifierModel(list(classes), W, b, scaler, h["lam"], h["epochs"], h["seed"], h.get("scheme", "joint"))
    return model, h.get("provenance", {})


# -- CV reports ---------------------------------------------------------------------

def write_report(report: CvReport, path) -> None:
    header = {"format": REPORT_FORMAT, "version": VERSION, "classes": report.classes,
              "n_folds": len(report.fold_accuracies), "n_cells": len(report.per_cell),
              "mean": report.mean, "sd": report.sd, "pooled_accuracy": report.pooled_accuracy,
              "config": report.config}
    lines = [_dump(header)]
    lines += [_dump(["fold", i, a]) for i, a in enumerate(report.fold_accuracies)]
    lines += [_dump(["confusion", c, report.confusion[k]]) for k, c in enumerate(report.classes)]
    lines += [_dump(["cell", key, acc]) for key, acc in report.per_cell.items()]
    _write_lines(path, lines)


def read_report(path) -> CvReport:
    rd = _Records(path, REPORT_FORMAT)
    h = rd.header
    classes = h.get("classes") or []
    accs, rows, cells = [], [], {}
    for line, rec in rd.take(_count(h, "n_folds", path), "fold"):
        if not (isinstance(rec, list) and len(rec) == 3 and rec[0] == "fold"):
            rd.fail(line, "expected [\"fold\", index, accuracy]")
        accs.append(rec[2])
    for k, (line, rec) in enumerate(rd.take(len(classes), "confusion")):
        if not (isinstance(rec, list) and len(rec) == 3 and rec[0] == "confusion" and rec[1] == classes[k]
                and len(rec[2]) == len(classes)):
            rd.fail(line, f"expected [\"confusion\", {classes[k]!r}, {len(classes)} counts]")
        rows.append(rec[2])
    for line, rec in rd.take(_count(h, "n_cells", path), "cell"):
        if not (isinstance(rec, list) and len(rec) == 3 and rec[0] == "cell"):
            rd.fail(line, "expected [\"cell\", key, accuracy]")
        cells[rec[1]] = rec[2]
    rd.finish()
    confusion = np.array(rows, dtype=np.int64).reshape(len(classes), len(classes))
    return CvReport(list(classes), accs, confusion, cells, h.get("config", {}))


# -- gesture events -----------------------------------------------------------------

def event_record(e: GestureEvent) -> dict:
    rec = {"kind": e.kind.value, "t": e.timestamp}
    if e.gesture is not None:
        rec["touch_count"] = e.gesture.touch_count
        rec["fingerprints"] = sorted(e.gesture.fingerprint_set)
        rec["label"] = e.gesture.label
    rec["payload"] = e.payload
    rec["truth"] = e.truth
    return rec


def write_events(events: List[GestureEvent], path, meta: Optional[dict] = None) -> None:
    header = {"format": EVENTS_FORMAT, "version": VERSION, "n_events": len(events), "meta": meta or {}}
    _write_lines(path, [_dump(header)] + [_dump(event_record(e)) for e in events])


def read_events(path) -> List[GestureEvent]:
    rd = _Records(path, EVENTS_FORMAT)
    out = []
    for line, rec in rd.take(_count(rd.header, "n_events", path), "event"):
        try:
            gc = GestureClass(rec["touch_count"], frozenset(rec["fingerprints"])) if "touch_count" in rec else None
            out.append(GestureEvent(EventKind(rec["kind"]), rec["t"], gc, rec.get("payload", {}), rec.get("truth")))
        except (KeyError, TypeError, ValueError) as exc:
            rd.fail(line, f"bad event record: {exc}")
    rd.finish()
    return out


# -- scenarios ----------------------------------------------------------------------

def _magnet_dict(m: Optional[MagnetSpec]):
    if m is None:
        return None
    return {"diameter": m.diameter, "height": m.height, "remanence": m.remanence, "polarity": m.polarity.value,
            "id": m.id}


def scenario_to_dict(s: Scenario) -> dict:
    fingers = {}
    for name, f in s.fingers.items():
        fingers[name] = {"magnet": _magnet_dict(f.magnet), "approach_height": f.approach_height,
                         "touch_standoff": f.touch_standoff, "tilt": f.tilt, "tilt_azimuth": f.tilt_azimuth}
    return plain({
        "version": VERSION,
        "name": s.name,
        "kind": s.kind,
        "device": s.device.to_dict(),
        "grid": [s.grid.rows, s.grid.cols],
        "fingers": fingers,
        "targets": [{"cells": [list(c) for c in t.cells], "fingers": list(t.fingers)} for t in s.targets],
        "policy": s.policy.value,
        "timing": vars(s.timing),
        "jitter": vars(s.jitter),
        "retraction_distance": s.retraction_distance,
        "hover_height": s.hover_height,
        "hover_rate": s.hover_rate,
        "pinch_convergence": s.pinch_convergence,
        "shuffle": s.shuffle,
        "participants": s.participants,
    })


def scenario_from_dict(d: dict) -> Scenario:
    if d.get("version", VERSION) != VERSION:
        raise VersionError(f"unsupported scenario version {d.get('version')!r}")
    fingers = {}
    for name, f in d["fingers"].items():
        f = dict(f)
        magnet = MagnetSpec(**f.pop("magnet")) if f.get("magnet") else None
        f.pop("magnet", None)
        fingers[name] = FingerModel(name, magnet, **f)
    targets = tuple(Target(tuple(tuple(c) for c in t["cells"]), tuple(t["fingers"])) for t in d["targets"])
    extra = {k: d[k] for k in ("retraction_distance", "hover_height", "hover_rate", "pinch_convergence", "shuffle",
                               "participants", "name") if k in d}
    return Scenario(DeviceModel.from_dict(d["device"]), Grid(*d["grid"]), fingers, targets, d.get("kind", "grid"),
                    RetractionPolicy(d.get("policy", "retracted")), Timing(**d.get("timing", {})),
                    Jitter(**d.get("jitter", {})), **extra)


def write_scenario(s: Scenario, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=None),
                          encoding="utf-8")


def read_scenario(path) -> Scenario:
    try:
        d = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(path, mark.line + 1 if mark else 1, f"invalid YAML: {exc}") from None
    if not isinstance(d, dict):
        raise ParseError(path, 1, "scenario must be a mapping")
    try:
        return scenario_from_dict(d)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: incomplete scenario: {exc}") from None
