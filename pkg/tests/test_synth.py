import collections
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from magprint import synth
from magprint.device import ipad4, iphone4, sample_trace
from magprint.magnetics import Dipole, EarthField, MagnetSpec, dipole_field, moment_from_spec, moment_vector
from magprint.synth import (FingerModel, Grid, Jitter, RetractionPolicy, Scenario, ScenarioError, Target, Timing,
                            WindowTooShortError, approach_trajectory, pinch_pairs, synthesize_chorded_pinch,
                            synthesize_grid_session, synthesize_pinch_session, synthesize_session)

M = MagnetSpec.parse
STUDY_MAGNETS = ["3.2x0.8", "7.9x0.8", "12.7x0.8", "12.7x1.6", "12.7x2.4"]


def touch_cells(trace, s):
    return collections.Counter(s.grid.cell_of(s.device, t.x, t.y) for t in trace.touches)


def test_study1_session_has_48_labelled_touches():
    s = synth.study1(M("7.9x0.8"))
    tr = synthesize_grid_session(s, 3)
    assert len(tr.touches) == 48
    labels = collections.Counter(t.true_label for t in tr.touches)
    assert labels == {"north": 24, "plain": 24}
    assert touch_cells(tr, s) == collections.Counter({c: 4 for c in s.grid.cells})


def test_two_fingerprint_session():
    s = synth.study1(M("12.7x0.8"), fingerprints=2)
    tr = synthesize_session(s, 4)
    assert collections.Counter(t.true_label for t in tr.touches) == {"north": 24, "plain": 24, "south": 24}


def test_touches_lie_in_their_target_cell():
    s = synth.study1(M("7.9x0.8"), shuffle="none")
    tr = synthesize_session(s, 8)
    for touch, tgt in zip(tr.touches, s.targets):
        assert s.grid.cell_of(s.device, touch.x, touch.y) == tgt.cells[0]
        assert touch.true_label == s.target_label(tgt)


def test_order_varies_but_cells_do_not():
    s = synth.study1(M("7.9x0.8"))
    a, b = synthesize_session(s, 1), synthesize_session(s, 2)
    order = lambda tr: [s.grid.cell_of(s.device, t.x, t.y) for t in tr.touches]
    assert order(a) != order(b)
    assert touch_cells(a, s) == touch_cells(b, s)


def test_session_is_deterministic():
    s = synth.study2(M("7.9x0.8"))
    a, b = synthesize_session(s, 42), synthesize_session(s, 42)
    assert np.array_equal(a.fields, b.fields)
    assert a.touches == b.touches


def test_all_plain_noise_free_is_earth():
    s = synth.study1(M("7.9x0.8"))
    plain = {n: FingerModel(n) for n in s.fingers}
    s = replace(s, fingers=plain, device=s.device.with_(noise_sigma=0.0, resolution=0.0))
    tr = synthesize_session(s, 5)
    assert np.array_equal(tr.fields, np.tile(tr.meta["earth"], (len(tr), 1)))


def test_pinch_session_counts_and_labels():
    s = synth.study2(M("7.9x0.8"))
    tr = synthesize_pinch_session(s, 9)
    assert len(tr.touches) == 80
    gestures = collections.defaultdict(list)
    for t in tr.touches:
        gestures[t.gesture_id].append(t)
    assert len(gestures) == 40
    assert all(len(g) == 2 and g[0].timestamp == g[1].timestamp for g in gestures.values())
    assert collections.Counter(g[0].true_label for g in gestures.values()) == {"north": 20, "plain": 20}


def test_magnetic_pinch_perturbs_before_touch():
    s = synth.study2(M("7.9x0.8"), shuffle="none")
    s = replace(s, device=s.device.with_(noise_sigma=0.0, resolution=0.0), jitter=Jitter.none())
    tr = synthesize_pinch_session(s, 1)
    earth = np.asarray(tr.meta["earth"])
    magnetic = [t for t in tr.touches if t.true_label == "north"]
    plain = [t for t in tr.touches if t.true_label == "plain"]
    before = lambda t: np.abs(tr.fields[tr.index_at(t.timestamp - 0.1)] - earth).max()
    assert all(before(t) > 1.0 for t in magnetic)
    assert all(before(t) < 0.5 for t in plain)


def test_pinch_pairs_on_phone_grid():
    pairs = pinch_pairs(Grid(4, 3), iphone4())
    assert len(pairs) == 10
    for pair in pairs:
        synth.check_pinch_pair(pair)


def test_pinch_pair_must_be_one_cell_apart():
    with pytest.raises(ScenarioError):
        synth.check_pinch_pair(((0, 0), (0, 1)))


def test_chorded_requires_opposite_polarities():
    s = synth.study2(M("12.7x0.8"))
    with pytest.raises(ScenarioError):
        synthesize_chorded_pinch(s, 1)
    tr = synthesize_chorded_pinch(synth.study2_chorded(M("12.7x0.8"), per_type=2), 1)
    labels = {t.true_label for t in tr.touches}
    assert labels == {"north+south", "north", "south"}


def test_chorded_superposition_cancels():
    dev = iphone4()
    mag = dev.magnetometer_pos
    n = moment_vector(M("12.7x0.8"))
    s = moment_vector(M("12.7x0.8", polarity="south"))
    # a quarter turn apart around the vertical axis through the sensor
    a, b = mag + [0.01, 0.0, 0.02], mag + [0.0, 0.01, 0.02]
    fa, fb = dipole_field(Dipole(n, a), mag), dipole_field(Dipole(s, b), mag)
    both = np.linalg.norm(fa + fb)
    assert both < np.linalg.norm(fa) and both < np.linalg.norm(fb)
    # mirrored across the axis only the vertical components cancel
    fm = dipole_field(Dipole(s, mag + [-0.01, 0.0, 0.02]), mag)
    assert abs((fa + fm)[2]) < 1e-15 and abs((fa + fm)[0]) > abs(fa[0])


@pytest.mark.parametrize("spec", STUDY_MAGNETS)
@pytest.mark.parametrize("make", [synth.study1, synth.study3])
def test_retracted_finger_is_below_half_microtesla(spec, make):
    s = make(M(spec))
    p = s.retraction_point()
    mag = s.device.magnetometer_pos
    assert np.linalg.norm(p - mag) >= s.retraction_distance - 1e-12
    # worst case over orientations is the on-axis field
    bound = 2e-7 * moment_from_spec(M(spec)) / np.linalg.norm(p - mag) ** 3 * 1e6
    assert bound < 0.5
    for tilt in (0, 45, 89):
        for az in (0, 90, 180, 270):
            f = FingerModel("middle", M(spec), tilt=tilt, tilt_azimuth=az)
            assert np.linalg.norm(dipole_field(Dipole(f.moment(), p), mag)) * 1e6 < 0.5


def test_idle_magnet_stays_retracted():
    s = synth.study1(M("12.7x0.8"), fingerprints=2, shuffle="none")
    s = replace(s, device=s.device.with_(noise_sigma=0.0, resolution=0.0), jitter=Jitter.none())
    tr = synthesize_session(s, 2)
    earth = np.asarray(tr.meta["earth"])
    # plain middle finger block: both magnets retracted
    for t in [t for t in tr.touches if t.true_label == "plain"]:
        i = tr.index_at(t.timestamp)
        assert np.linalg.norm(tr.fields[i - 20:i + 1] - earth, axis=1).max() < 1.0


def test_approach_trajectory():
    f = FingerModel("middle", M("7.9x0.8"))
    assert approach_trajectory(FingerModel("index"), (0.02, 0.03), 1.0) is None
    path = approach_trajectory(f, (0.02, 0.03), 1.0, start=2.0)
    end = path.positions(np.array([3.0]))[0]
    assert np.allclose(end, [0.02, 0.03, f.touch_standoff])
    assert path.positions(np.array([2.0]))[0][2] == pytest.approx(f.approach_height)
    z = path.positions(np.linspace(2.0, 3.0, 41))[:, 2]
    assert np.all(np.diff(z) <= 0)
    with pytest.raises(WindowTooShortError):
        approach_trajectory(f, (0.02, 0.03), 0.4)


def test_polarity_flip_negates_approach_contribution():
    dev = iphone4(noise_sigma=0.0, resolution=0.0)
    target = dev.magnetometer_pos[:2] - [0.02, 0.03]
    earth = EarthField()
    traces = []
    for pol in ("north", "south"):
        f = FingerModel("middle", M("7.9x0.8", polarity=pol), tilt=20, tilt_azimuth=250)
        traces.append(sample_trace([approach_trajectory(f, target, 1.0)], dev, 1.5, 0, earth))
    bn = traces[0].fields - earth.vector
    bs = traces[1].fields - earth.vector
    assert np.allclose(bs, -bn, rtol=0, atol=1e-9)
    assert np.abs(bn).max() > 10


def test_scenario_validation():
    dev = iphone4()
    g = Grid(4, 3)
    fingers = {"index": FingerModel("index")}
    with pytest.raises(ScenarioError):
        Scenario(dev, g, fingers, (Target(((0, 0),), ("ring",)),))
    with pytest.raises(ScenarioError):
        Scenario(dev, g, fingers, (Target(((4, 0),), ("index",)),))
    with pytest.raises(WindowTooShortError):
        Scenario(dev, g, fingers, (Target(((0, 0),), ("index",)),), timing=Timing(approach=0.3))
    with pytest.raises(ScenarioError):
        FingerModel("x", approach_height=0.01, touch_standoff=0.02)
    with pytest.raises(ScenarioError):
        FingerModel("x", tilt=90)


def test_study3_size():
    s = synth.study3(M("12.7x2.4"))
    assert s.device.name == "ipad4"
    assert len(s.targets) == 96
    assert s.policy is RetractionPolicy.HOVERING


def test_corner_subgrid_is_at_the_magnetometer():
    dev = ipad4()
    x0, x1, y0, y1 = synth.corner_subgrid(dev, Grid(6, 8), 4, 3)
    assert (x1, y0) == (dev.screen_width_px, 0.0)
    assert x1 - x0 == pytest.approx(dev.screen_width_px / 2)
    assert y1 - y0 == pytest.approx(dev.screen_height_px / 2)


@given(st.integers(0, 2**32 - 1))
def test_participant_seeds_are_distinct(seed):
    seeds = synth.participant_seeds(seed, 10)
    assert len(set(seeds)) == 10
    assert seeds == synth.participant_seeds(seed, 10)


def test_grid_tiles_screen():
    dev = iphone4()
    g = Grid(4, 3)
    area = sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in (g.bounds(dev, c) for c in g.cells))
    assert area == pytest.approx(dev.screen_width_px * dev.screen_height_px)
    assert math.isclose(g.bounds(dev, (3, 2))[1], dev.screen_width_px)
