import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from magprint import synth
from magprint.classifier import (ClassifierModel, Dataset, DegenerateDatasetError, DimensionMismatchError,
                                 StratificationError, cross_validate, predict, stratified_folds, train)
from magprint.features import FeatureVector, Scaler
from magprint.magnetics import MagnetSpec
from magprint.studies import run_study


def embed(points, labels):
    rows = []
    for (x, y), lab in zip(points, labels):
        v = np.zeros(62)
        v[:2] = x, y
        rows.append(FeatureVector(v, lab))
    return Dataset(rows)


# 20 points, separable by x + y = 5 with a narrow margin
SEPARABLE = [(0, 0), (1, 0), (0, 1), (2, 1), (1, 2), (3, 0), (0, 3), (2, 2.5), (3.5, 1), (1, 3.4),
             (5, 5), (4, 4), (6, 2), (2, 4), (3, 3), (5, 1), (1, 5), (2.6, 2.8), (4.2, 1.3), (0.8, 4.5)]
SEP_LABELS = ["A"] * 10 + ["B"] * 10


def grid_search_best_accuracy(points, labels):
    """Best accuracy of any line from a discretized (angle, offset) family."""
    P = np.asarray(points, float)
    y = np.array([1 if lab == "B" else -1 for lab in labels])
    best = 0.0
    for deg in np.arange(0, 360, 1.0):
        w = np.array([np.cos(np.radians(deg)), np.sin(np.radians(deg))])
        proj = P @ w
        for b in np.arange(-8, 8, 0.05):
            best = max(best, float(np.mean(np.sign(proj - b) == y)))
    return best


def test_separable_matches_grid_search_oracle():
    data = embed(SEPARABLE, SEP_LABELS)
    oracle = grid_search_best_accuracy(SEPARABLE, SEP_LABELS)
    assert oracle == 1.0
    model = train(data, seed=1)
    acc = np.mean(np.array(model.predict_many(data.X)) == np.array(SEP_LABELS))
    assert acc == oracle


def test_four_point_example():
    data = embed([(0, 0), (10, 10), (0, 1), (10, 9)], ["A", "B", "A", "B"])
    model = train(data)
    assert model.predict_many(data.X) == ["A", "B", "A", "B"]


def test_bit_identical_models():
    data = embed(SEPARABLE, SEP_LABELS)
    a, b = train(data, seed=3), train(data, seed=3)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.biases, b.biases)
    assert a.weights.tobytes() == b.weights.tobytes()


def test_deep_exemplar_and_dimension_mismatch():
    data = embed(SEPARABLE, SEP_LABELS)
    model = train(data)
    assert predict(model, data.rows[0]) == "A"
    assert predict(model, data.rows[10]) == "B"
    with pytest.raises(DimensionMismatchError):
        model.predict_many(np.zeros((1, 64)))


@given(st.floats(1e-3, 1e3))
def test_positive_scaling_keeps_predictions(c):
    data = embed(SEPARABLE, SEP_LABELS)
    model = train(data, epochs=20)
    scaled = ClassifierModel(model.classes, model.weights * c, model.biases * c, model.scaler)
    X = np.random.default_rng(0).normal(2.5, 3, size=(50, 62))
    assert scaled.predict_many(X) == model.predict_many(X)


def test_tie_goes_to_first_class():
    scaler = Scaler(np.zeros(62), np.ones(62))
    w = np.zeros((2, 62))
    w[0, 0], w[1, 0] = 1.0, -1.0
    model = ClassifierModel(["A", "B"], w, np.zeros(2), scaler)
    assert model.predict_many(np.zeros((1, 62))) == ["A"]


def test_degenerate_datasets():
    one_class = embed(SEPARABLE[:10], ["A"] * 10)
    with pytest.raises(DegenerateDatasetError):
        train(one_class)
    empty_class = Dataset(one_class.rows, ["A", "B"])
    with pytest.raises(DegenerateDatasetError):
        train(empty_class)


@pytest.fixture(scope="module")
def three_class():
    s = synth.study1(MagnetSpec.parse("12.7x0.8"), fingerprints=2, participants=3)
    return run_study(s, 5)[1]


def test_objective_descends_over_last_tenth(three_class):
    for scheme in ("joint", "ovr"):
        model = train(three_class, seed=2, scheme=scheme)
        hist = np.atleast_2d(model.history)
        tail = hist[:, -len(hist[0]) // 10:]
        assert np.all(np.mean(np.diff(tail, axis=1), axis=1) <= 1e-6)


def test_label_permutation_equivariance(three_class):
    base = cross_validate(three_class, 5, seed=4, epochs=50)
    for perm in itertools.permutations(three_class.classes):
        data = Dataset(three_class.rows, list(perm), three_class.meta)
        rep = cross_validate(data, 5, seed=4, epochs=50)
        idx = [base.classes.index(c) for c in perm]
        assert np.array_equal(rep.confusion, base.confusion[np.ix_(idx, idx)])
        assert rep.fold_accuracies == base.fold_accuracies


def test_cross_validation_determinism(three_class):
    a = cross_validate(three_class, 4, seed=9, epochs=30)
    b = cross_validate(three_class, 4, seed=9, epochs=30)
    assert a.fold_accuracies == b.fold_accuracies
    assert np.array_equal(a.confusion, b.confusion)
    assert a.per_cell == b.per_cell


def test_ten_folds_of_48():
    labels = ["north"] * 240 + ["plain"] * 240
    folds = stratified_folds(labels, 10, seed=0)
    assert [len(f) for f in folds] == [48] * 10
    assert all(sum(labels[i] == "north" for i in f) == 24 for f in folds)


@given(st.lists(st.sampled_from("abcd"), min_size=12, max_size=80), st.integers(2, 6), st.integers(0, 1000))
def test_folds_partition_the_data(labels, k, seed):
    counts = {c: labels.count(c) for c in set(labels)}
    if min(counts.values()) < k:
        with pytest.raises(StratificationError):
            stratified_folds(labels, k, seed)
        return
    folds = stratified_folds(labels, k, seed)
    flat = np.concatenate(folds)
    assert sorted(flat.tolist()) == list(range(len(labels)))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    for c, n in counts.items():
        per = [sum(labels[i] == c for i in f) for f in folds]
        assert max(per) - min(per) <= 1


def test_k_below_two_rejected():
    with pytest.raises(StratificationError):
        stratified_folds(["a", "b"] * 5, 1, 0)


def test_duplicated_separable_data_is_perfect():
    data = embed(SEPARABLE * 10, SEP_LABELS * 10)
    rep = cross_validate(data, 10, seed=0)
    assert rep.mean == 100.0 and rep.sd == 0.0
    assert rep.pooled_accuracy == 100.0


def test_report_statistics(three_class):
    rep = cross_validate(three_class, 4, seed=1, epochs=30)
    assert rep.sd == pytest.approx(np.std(rep.fold_accuracies, ddof=1))
    assert rep.confusion.sum() == len(three_class)
    # equal fold sizes: pooled and mean accuracy coincide
    assert rep.pooled_accuracy == pytest.approx(rep.mean, abs=1e-9)
    assert set(rep.per_cell) == {f"{r},{c}" for r in range(4) for c in range(3)}
    assert rep.summary() == f"{rep.mean:.2f} ({rep.sd:.2f})"
