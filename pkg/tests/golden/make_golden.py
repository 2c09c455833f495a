"""Regenerate the frozen format samples in this directory.

Only run this after an intentional format change; the conformance tests
compare against the committed files byte for byte.
"""
from dataclasses import replace
from pathlib import Path

from magprint import io, synth
from magprint.classifier import Dataset, cross_validate, train
from magprint.gestures import recognize_stream
from magprint.magnetics import MagnetSpec
from magprint.studies import session_rows

HERE = Path(__file__).parent


def tiny_scenario():
    s = synth.study1(MagnetSpec.parse("7.9x0.8"), participants=1)
    cells = [(0, 2), (1, 1), (3, 0)]
    targets = [synth.Target((c,), (f,)) for f in ("index", "middle") for c in cells for _ in range(2)]
    return replace(s, targets=tuple(targets), name="golden")


def main():
    s = tiny_scenario()
    trace = synth.synthesize_session(s, 2024)
    data = Dataset(session_rows(trace, s), ["north", "plain"], {"scenario": s.name, "seed": 2024})
    model = train(data, epochs=20, seed=1)
    report = cross_validate(data, 2, epochs=20, seed=1)
    io.write_scenario(s, HERE / "scenario.yaml")
    io.write_trace(trace, HERE / "trace.jsonl")
    io.write_dataset(data, HERE / "dataset.jsonl")
    io.write_model(model, HERE / "model.jsonl", {"dataset": "dataset.jsonl"})
    io.write_report(report, HERE / "report.jsonl")
    io.write_events(recognize_stream(trace, model), HERE / "events.jsonl", {"trace": "trace.jsonl"})


if __name__ == "__main__":
    main()
