from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from magprint import synth
from magprint.device import SensorTrace, TouchEvent
from magprint.features import (PINCH_DIM, TOUCH_DIM, FeatureVector, FeatureWindowError, NotAPinchError, Scaler,
                               differential_block, extract_pinch_features, extract_touch_features, group_touches,
                               standardize)
from magprint.magnetics import MagnetSpec


def ramp_trace(n=81):
    # sample i reads (i, 2i, -i): every differential is known in closed form
    t = np.arange(n) / 40
    f = np.stack([np.arange(n), 2 * np.arange(n), -np.arange(n)], axis=1).astype(float)
    return SensorTrace(t, f, [TouchEvent(1.5, 100, 200, "north")])


def test_layout_against_hand_computed_ramp():
    tr = ramp_trace()
    fv = extract_touch_features(tr, tr.touches[0])
    assert fv.dim == TOUCH_DIM == 62
    assert fv.values[:2].tolist() == [100, 200]
    # touch at sample 60; c_k = m - v(60 - k) = k * (1, 2, -1), oldest lag (k = 20) first
    expected = np.concatenate([k * np.array([1.0, 2.0, -1.0]) for k in range(20, 0, -1)])
    assert np.array_equal(fv.values[2:], expected)
    assert fv.label == "north"


def test_lookup_is_at_or_before():
    tr = ramp_trace()
    # 10 ms after sample 60 still anchors at sample 60
    a = differential_block(tr, 1.5)
    b = differential_block(tr, 1.51)
    assert np.array_equal(a, b)


def test_constant_trace_has_zero_differentials():
    tr = SensorTrace(np.arange(41) / 40, np.tile([10.0, 20.0, 30.0], (41, 1)))
    assert np.array_equal(differential_block(tr, 0.75), np.zeros(60))


def test_window_errors():
    tr = ramp_trace()
    with pytest.raises(FeatureWindowError):
        differential_block(tr, 0.45)
    with pytest.raises(FeatureWindowError):
        differential_block(tr, 5.0)


offsets = st.tuples(*[st.floats(-60, 60).map(lambda v: round(v * 16) / 16) for _ in range(3)])


@pytest.fixture(scope="module")
def study_trace():
    return synth.synthesize_session(synth.study1(MagnetSpec.parse("7.9x0.8")), 21)


@given(offsets)
def test_constant_offset_leaves_features_bit_identical(study_trace, offset):
    shifted = study_trace.with_offset(offset)
    for touch in study_trace.touches[::6]:
        a = extract_touch_features(study_trace, touch).values
        b = extract_touch_features(shifted, touch).values
        assert np.array_equal(a, b)


def test_polarity_flip_negates_differentials():
    s = synth.study1(MagnetSpec.parse("7.9x0.8"))
    south = {n: (f if f.magnet is None else replace(f, magnet=f.magnet.with_polarity("south", "north")))
             for n, f in s.fingers.items()}
    # noise-free, earth field on the ADC grid: quantization commutes with negation
    s = replace(s, device=s.device.with_(noise_sigma=0.0), jitter=replace(s.jitter, earth_heading=False))
    a = synth.synthesize_session(s, 4)
    b = synth.synthesize_session(replace(s, fingers=south), 4)
    for touch in a.touches:
        da, db = differential_block(a, touch.timestamp), differential_block(b, touch.timestamp)
        if touch.true_label == "north":
            assert np.abs(da).max() > 1
        assert np.array_equal(db, -da)


def test_pure_function(study_trace):
    t = study_trace.touches[3]
    assert np.array_equal(extract_touch_features(study_trace, t).values, extract_touch_features(study_trace, t).values)


def test_pinch_features_and_canonical_order():
    tr = ramp_trace()
    a = TouchEvent(1.5, 300, 50, "plain")
    b = TouchEvent(1.55, 100, 500, "plain")
    fab = extract_pinch_features(tr, a, b)
    fba = extract_pinch_features(tr, b, a)
    assert fab.dim == PINCH_DIM == 64
    assert np.array_equal(fab.values, fba.values)
    assert fab.values[:4].tolist() == [100, 500, 300, 50]
    # anchored at the earlier touch
    assert np.array_equal(fab.values[4:], differential_block(tr, 1.5))
    with pytest.raises(NotAPinchError):
        extract_pinch_features(tr, a, TouchEvent(1.7, 1, 1))


def test_plain_pinch_noise_free_is_zero():
    tr = SensorTrace(np.arange(81) / 40, np.tile([1.0, 2.0, 3.0], (81, 1)))
    fv = extract_pinch_features(tr, TouchEvent(1.0, 1, 1), TouchEvent(1.0, 2, 2))
    assert np.array_equal(fv.values[4:], np.zeros(60))


def test_feature_vector_dimension_check():
    with pytest.raises(ValueError):
        FeatureVector(np.zeros(10))


def test_standardize_single_row_maps_to_zero():
    scaler, Z = standardize([np.arange(62.0)])
    assert np.array_equal(Z, np.zeros((1, 62)))


def test_standardize_two_points_by_hand():
    scaler, Z = standardize([[1.0, 5.0], [3.0, 5.0]])
    # mean (2, 5); population sd (1, 0)
    assert Z.tolist() == [[-1.0, 0.0], [1.0, 0.0]]
    # applying the scaler again is not the identity
    assert scaler.transform(Z).tolist() == [[-3.0, 0.0], [-1.0, 0.0]]


@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4), min_size=2, max_size=30))
def test_standardized_columns_have_zero_mean(rows):
    scaler, Z = standardize(rows)
    assert np.all(np.abs(Z.mean(axis=0)) < 1e-9)
    assert np.all(np.isfinite(Z))


def test_scaler_rejects_empty():
    with pytest.raises(ValueError):
        Scaler.fit(np.zeros((0, 3)))


def test_group_touches():
    ts = [TouchEvent(0.0, 1, 1), TouchEvent(0.05, 2, 2), TouchEvent(1.0, 3, 3), TouchEvent(1.2, 4, 4)]
    groups = group_touches(ts)
    assert [len(g) for g in groups] == [2, 1, 1]
