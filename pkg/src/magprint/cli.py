"""Command-line entry point: ``magprint {gen,cv,train,vocab,recognize}``.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import collections
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io, synth
from .classifier import DEFAULT_EPOCHS, DEFAULT_LAMBDA, SCHEMES, Dataset, cross_validate, train
from .device import get_device
from .gestures import EventKind, RecognizerConfig, VocabularyConfig, enumerate_vocabulary, recognize_stream
from .magnetics import MagnetSpec
from .studies import run_study

PRESETS = ("study1", "study2", "study2-chorded", "study3")
OUT_ENV = "MAGPRINT_OUT"


def default_magnet(preset: str, fingerprints: int) -> str:
    if preset == "study1" and fingerprints == 1 or preset == "study2":
        return "7.9x0.8"
    return "12.7x0.8"


def build_scenario(args) -> synth.Scenario:
    if args.scenario:
        s = io.read_scenario(args.scenario)
    else:
        magnet = MagnetSpec.parse(args.magnet or default_magnet(args.preset, args.fingerprints), polarity=args.polarity)
        if args.preset == "study1":
            s = synth.study1(magnet, args.fingerprints)
        elif args.preset == "study2":
            s = synth.study2(magnet)
        elif args.preset == "study2-chorded":
            s = synth.study2_chorded(magnet)
        else:
            s = synth.study3(magnet)
    changes = {}
    if args.noise is not None:
        changes["device"] = s.device.with_(noise_sigma=args.noise)
    if args.participants is not None:
        changes["participants"] = args.participants
    if changes:
        s = replace(s, **changes)
    return s


def run_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return io.plain(cfg)


def out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _stem(path) -> str:
    name = Path(path).name
    for suffix in (".dataset.jsonl", ".trace.jsonl", ".jsonl"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return Path(path).stem


def label_table(counts: dict) -> str:
    return ", ".join(f"{k}={v}" for k, v in counts.items())


def cmd_gen(args) -> int:
    s = build_scenario(args)
    traces, data = run_study(s, args.seed)
    data.meta["run"] = run_config(args)
    d = out_dir(args)
    stem = f"{s.name}-seed{args.seed}"
    if args.save_scenario:
        io.write_scenario(s, args.save_scenario)
    if not args.no_traces:
        for p, tr in enumerate(traces):
            io.write_trace(tr, d / f"{stem}-p{p}.trace.jsonl")
    path = d / f"{stem}.dataset.jsonl"
    io.write_dataset(data, path)
    print(f"{s.name}: {len(traces)} sessions, {len(data)} rows x {data.dim} features")
    print(f"labels: {label_table(data.counts())}")
    print(f"dataset: {path}")
    return 0


def _subgrid_filter(data: Dataset, spec: str) -> Dataset:
    try:
        cols, rows = (float(v) for v in spec.lower().split("x"))
    except ValueError:
        raise ValueError(f"bad --subgrid {spec!r}, expected COLSxROWS such as 4x3") from None
    prov = data.meta
    if "device" not in prov or "grid" not in prov:
        raise ValueError("dataset provenance lacks device and grid; cannot select a subgrid")
    dev = get_device(prov["device"])
    x0, x1, y0, y1 = synth.corner_subgrid(dev, synth.Grid(*prov["grid"]), cols, rows)
    keep = [r for r in data.rows if x0 <= r.values[0] < x1 and y0 <= r.values[1] < y1]
    return Dataset(keep, data.classes, dict(prov, subgrid=spec))


def cmd_cv(args) -> int:
    data = io.read_dataset(args.dataset)
    if args.subgrid:
        data = _subgrid_filter(data, args.subgrid)
    report = cross_validate(data, args.folds, args.lam, args.epochs, args.seed, args.scheme)
    report.config["run"] = run_config(args)
    report.config["provenance"] = data.meta
    path = Path(args.report) if args.report else out_dir(args) / (_stem(args.dataset) + ".report.jsonl")
    io.write_report(report, path)
    print(f"{len(data)} rows, {len(data.classes)} classes, {args.folds}-fold cross-validation")
    print(f"accuracy % mean (sd): {report.summary()}   pooled {report.pooled_accuracy:.2f}")
    width = max(len(c) for c in report.classes)
    print("confusion (rows true, cols predicted):")
    print(" " * (width + 2) + " ".join(f"{c:>{width}}" for c in report.classes))
    for c, row in zip(report.classes, report.confusion):
        print(f"{c:>{width}}  " + " ".join(f"{v:>{width}d}" for v in row))
    print(f"report: {path}")
    return 0


def cmd_train(args) -> int:
    data = io.read_dataset(args.dataset)
    model = train(data, args.lam, args.epochs, args.seed, scheme=args.scheme)
    path = Path(args.model) if args.model else out_dir(args) / (_stem(args.dataset) + ".model.jsonl")
    io.write_model(model, path, {"run": run_config(args), "dataset": data.meta})
    acc = np.mean(np.array(model.predict_many(data.X)) == np.array([r.label for r in data.rows]))
    print(f"trained {model.scheme} model on {len(data)} rows, {model.dim} features, classes {model.classes}")
    print(f"training accuracy {100 * acc:.2f}%")
    print(f"model: {path}")
    return 0


def parse_touch_range(text: str):
    try:
        lo, _, hi = text.partition("..")
        return int(lo), int(hi or lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad touch range {text!r}, expected LO..HI") from None


def cmd_vocab(args) -> int:
    lo, hi = args.touch
    cfg = VocabularyConfig(args.plain, args.fingerprints, lo, hi, not args.no_chording)
    classes = enumerate_vocabulary(cfg)
    per_count = collections.Counter(c.touch_count for c in classes)
    for c in classes:
        print(f"{c.touch_count} touch  {c.label}")
    print("per touch count: " + ", ".join(f"{k}:{per_count[k]}" for k in sorted(per_count)))
    print(f"total {len(classes)}")
    return 0


def cmd_recognize(args) -> int:
    trace = io.read_trace(args.trace)
    tap = io.read_model(args.tap_model) if args.tap_model else None
    pinch = io.read_model(args.pinch_model) if args.pinch_model else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        events = recognize_stream(trace, tap, pinch, RecognizerConfig(detect_hover=not args.no_hover))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    path = Path(args.events) if args.events else out_dir(args) / (_stem(args.trace) + ".events.jsonl")
    io.write_events(events, path, {"run": run_config(args), "warnings": len(caught)})
    kinds = collections.Counter(e.kind.value for e in events)
    print("events: " + (", ".join(f"{k}={v}" for k, v in sorted(kinds.items())) or "none"))
    judged = [e for e in events if e.kind in (EventKind.TAP, EventKind.PINCH) and e.truth is not None]
    if judged:
        agree = sum(e.label == e.truth for e in judged)
        print(f"agreement with ground truth: {agree}/{len(judged)} ({100 * agree / len(judged):.2f}%)")
    print(f"events: {path}")
    return 0


def _folds(text: str) -> int:
    k = int(text)
    if k < 2:
        raise argparse.ArgumentTypeError("need at least 2 folds")
    return k


def _classifier_flags(p, seed_default=0):
    p.add_argument("--lam", type=float, default=DEFAULT_LAMBDA, help="regularization strength")
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--scheme", choices=SCHEMES, default="joint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magprint", description="Magnetic fingerprint touch simulation and classification.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("gen", help="synthesize study sessions and extract a feature dataset")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--scenario", help="scenario YAML file")
    g.add_argument("--magnet", help="DIAMETERxHEIGHT in mm, e.g. 7.9x0.8")
    g.add_argument("--polarity", choices=("north", "south"), default="north")
    g.add_argument("--fingerprints", type=int, choices=(1, 2), default=1)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--noise", type=float, help="magnetometer noise sigma in uT")
    g.add_argument("--participants", type=int)
    g.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    g.add_argument("--save-scenario", help="also write the resolved scenario as YAML")
    g.add_argument("--no-traces", action="store_true", help="write only the dataset")
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("cv", help="stratified k-fold cross-validation")
    c.add_argument("dataset")
    c.add_argument("--folds", type=_folds, default=10)
    _classifier_flags(c)
    c.add_argument("--subgrid", help="restrict to a COLSxROWS block at the magnetometer corner, e.g. 4x3")
    c.add_argument("--out", help="output directory")
    c.add_argument("--report", help="report path")
    c.set_defaults(func=cmd_cv)

    t = sub.add_parser("train", help="train a classifier on a dataset")
    t.add_argument("dataset")
    _classifier_flags(t)
    t.add_argument("--out", help="output directory")
    t.add_argument("--model", help="model path")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("vocab", help="enumerate the gesture vocabulary")
    v.add_argument("--plain", type=int, default=4)
    v.add_argument("--fingerprints", type=int, default=1)
    v.add_argument("--touch", type=parse_touch_range, default=(1, 5), help="touch-point range LO..HI")
    v.add_argument("--no-chording", action="store_true")
    v.set_defaults(func=cmd_vocab)

    r = sub.add_parser("recognize", help="turn a trace into a gesture event stream")
    r.add_argument("trace")
    r.add_argument("--tap-model")
    r.add_argument("--pinch-model")
    r.add_argument("--no-hover", action="store_true")
    r.add_argument("--out", help="output directory")
    r.add_argument("--events", help="events path")
    r.set_defaults(func=cmd_recognize)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"magprint {args.subcommand}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
