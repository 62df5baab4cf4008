import math

import numpy as np
import pytest

from pedcross.gap_acceptance import (FEATURE_NAMES, FeatureVector, GapEvent, Label,
                                     detect_gap_start, evaluate, events_to_arrays,
                                     extract_features, fit_model, label_gap, load_model,
                                     platt_probability, poly_kernel, predict_proba,
                                     predict_probability, read_gap_events, save_model,
                                     stratified_split, train, traffic_gap_for,
                                     write_gap_events)
from pedcross.gap_acceptance.models import _svm_from_params
from pedcross.hybrid_core import ActionState, GeometryConfig, HybridState, Kinematics
from pedcross.metrics import classification_metrics
from pedcross.scenario_sim.vehicles import VehicleState

GEOM = GeometryConfig()


def waiting(x=1.0, y=-0.5, t=10.0, entry=5.0):
    return HybridState(Kinematics(x, y, 0.0, 0.0), action=ActionState.WAIT,
                       wait_entry_time=entry, t=t)


def test_traffic_gap_distance_over_speed():
    prev = [VehicleState(0, 0, 0.5, 15.6), VehicleState(1, 1, -31.76, 15.6)]
    now = [VehicleState(0, 0, 2.06, 15.6), VehicleState(1, 1, -30.2, 15.6)]
    ev = detect_gap_start(now, waiting(), prev, GEOM, prev_ped_x=1.0)
    assert ev is not None
    assert ev.traffic_gap == pytest.approx(2.0)
    assert ev.start_time == 10.0


def test_no_event_outside_decision_zone_or_while_crossing():
    prev = [VehicleState(0, 0, 4.5, 15.6)]
    now = [VehicleState(0, 0, 6.0, 15.6)]
    assert detect_gap_start(now, waiting(x=5.0), prev, GEOM, prev_ped_x=5.0) is None
    crossing = HybridState(Kinematics(1.0, 1.0, 0, 1.5), action=ActionState.CROSS, t=10.0)
    prev = [VehicleState(0, 0, 0.5, 15.6)]
    now = [VehicleState(0, 0, 2.0, 15.6)]
    assert detect_gap_start(now, crossing, prev, GEOM, prev_ped_x=1.0) is None


def test_entering_zone_mid_gap_and_empty_road():
    ped = HybridState(Kinematics(2.9, -0.5, -1.4, 0), action=ActionState.APPROACH, t=3.0)
    ev = detect_gap_start([], ped, [], GEOM, prev_ped_x=3.04)
    assert ev is not None and math.isinf(ev.traffic_gap)
    assert math.isinf(traffic_gap_for([], 0.0))
    # already inside the zone with nothing passing: no new gap
    assert detect_gap_start([], ped, [], GEOM, prev_ped_x=2.95) is None


def test_feature_geometry():
    hist = [waiting(t=9.0 + 0.1 * k) for k in range(11)]
    traffic = [VehicleState(0, 0, -40.0, 15.6)]
    out = extract_features(hist, traffic, [False] * 11, GEOM, 10.0)
    f = out.features
    assert (f.av_distance, f.av_speed, f.curb_distance, f.cw_distance) == pytest.approx(
        (41.0, 15.6, 0.5, 1.0))
    assert f.ped_speed == 0.0
    assert f.wait_time == pytest.approx(5.0)
    assert not out.partial


def test_gaze_ratio_and_partial_window():
    hist = [waiting(t=0.1 * k) for k in range(1, 11)]
    gaze = [True] * 7 + [False] * 3
    out = extract_features(hist, [], gaze, GEOM, 1.0)
    assert out.features.gaze_ratio == pytest.approx(0.7)
    assert out.partial


def test_extract_features_checks_alignment():
    with pytest.raises(ValueError):
        extract_features([waiting()], [], [True, False], GEOM, 10.0)


def test_feature_vector_invariants():
    with pytest.raises(ValueError):
        FeatureVector(1, 1, 0, 1.2, 0, 0, 0)
    with pytest.raises(ValueError):
        FeatureVector(-1, 1, 0, 0.5, 0, 0, 0)
    with pytest.raises(ValueError):
        GapEvent(start_time=0.0, traffic_gap=0.0)


def _y_track(cross_at, end=13.0):
    t = np.round(np.arange(9.0, end + 1e-9, 0.1), 10)
    y = np.where(t >= cross_at, 0.05 + (t - cross_at) * 1.5, -0.5)
    return t, y


def test_label_examples():
    ev = GapEvent(start_time=10.0, traffic_gap=2.0)
    t, y = _y_track(10.8)
    assert label_gap(ev, t, y, GEOM).label == Label.ACCEPTED
    t, y = _y_track(99.0)
    assert label_gap(ev, t, y, GEOM).label == Label.REJECTED
    t, y = _y_track(99.0, end=11.0)
    assert label_gap(ev, t, y, GEOM).label == Label.UNDETERMINED
    # the next gap closes the window early
    t, y = _y_track(11.5)
    assert label_gap(ev, t, y, GEOM, gap_end=11.0).label == Label.REJECTED


def test_confusion_example():
    y = np.array([1, 1, 1, 1, 0, 0, 0, 0, 0, 0])
    p = np.array([0.9, 0.8, 0.7, 0.2, 0.6, 0.1, 0.1, 0.3, 0.4, 0.0])
    m = classification_metrics(y, p)
    assert m == pytest.approx({"accuracy": 0.8, "precision": 0.75, "recall": 0.75, "f1": 0.75})


def _separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = np.where(y == 1, rng.uniform(0.5, 2.0, n), rng.uniform(-2.0, -0.5, n))
    return x[:, None], y


@pytest.mark.parametrize("kind", ["SVMPoly3", "Logistic"])
def test_separable_set_is_learned(kind):
    X, y = _separable()
    tr, te = stratified_split(y, 0)
    model = fit_model(kind, X[tr], y[tr], seed=0, features=("av_distance",))
    m = classification_metrics(y[te], predict_proba(model, X[te]))
    assert m["accuracy"] == 1.0


def test_condprob_independent_feature_returns_prior():
    rng = np.random.default_rng(3)
    n = 20000
    y = (rng.random(n) < 0.3).astype(int)
    X = rng.uniform(0, 10, size=(n, 1))
    model = fit_model("CondProb", X, y, features=("av_distance",))
    p = predict_proba(model, rng.uniform(0, 10, size=(500, 1)))
    assert np.all(np.abs(p - y.mean()) < 0.05)


def test_condprob_histograms_normalized(reference_events):
    model, _ = train("CondProb", reference_events, 42)
    lik = np.asarray(model.params["likelihood"])
    assert np.allclose(lik.sum(axis=-1), 1.0)


def test_stratified_split_proportions():
    y = np.array([1] * 50 + [0] * 150)
    tr, te = stratified_split(y, 5)
    assert len(te) == 40 and y[te].sum() == 10
    assert not set(tr) & set(te)
    again = stratified_split(y, 5)
    assert np.array_equal(te, again[1])


def test_train_rejects_small_or_single_class():
    fv = FeatureVector(10, 15, 0, 0.5, 0.5, 1, 0)
    few = [GapEvent(0.0, 2.0, fv, Label.ACCEPTED)] * 10
    with pytest.raises(ValueError):
        train("Logistic", few, 0)
    one_class = [GapEvent(0.0, 2.0, fv, Label.REJECTED)] * 60
    with pytest.raises(ValueError):
        train("Logistic", one_class, 0)


def test_platt_midpoint_and_range():
    assert platt_probability(np.array([0.0]), -3.0, 0.0)[0] == 0.5
    p = platt_probability(np.array([-1e4, 0.3, 1e4]), -2.0, 0.1)
    assert np.all((p >= 0) & (p <= 1))
    assert p[1] == pytest.approx(1 / (1 + math.exp(-0.6 + 0.1)))


def test_svm_decision_matches_direct_kernel_sum(svm_model, reference_events):
    X, _ = events_to_arrays(reference_events)
    Z = svm_model.normalize(X[:50])
    p = svm_model.params
    sv = np.asarray(p["support_vectors"])
    direct = np.array([sum(c * (p["gamma"] * float(z @ s) + p["coef0"]) ** 3
                           for c, s in zip(p["dual_coef"], sv)) + p["bias"] for z in Z])
    svm = _svm_from_params(p, Z.shape[1])
    assert svm.decision_function(Z) == pytest.approx(direct, rel=1e-9, abs=1e-9)
    assert poly_kernel(Z[:2], Z[:2], 0.5).shape == (2, 2)
    # a confidently accepted support vector maps above one half
    pos = sv[np.asarray(p["dual_coef"]) > 0]
    best = pos[np.argmax(svm.decision_function(pos))]
    raw = best * svm_model.std + svm_model.mean
    assert p["platt_A"] < 0
    assert predict_proba(svm_model, raw[None, :])[0] > 0.5


def test_affine_rescaling_invariance(reference_events):
    X, y = events_to_arrays(reference_events)
    X, y = X[:300], y[:300]
    scale = np.array([2.0, 0.5, 3.0, 1.5, 10.0, 0.1, 4.0])
    shift = np.array([1.0, -2.0, 0.5, 0.0, 3.0, 1.0, -1.0])
    for kind in ("SVMPoly3", "Logistic"):
        a = fit_model(kind, X, y, seed=1)
        b = fit_model(kind, X * scale + shift, y, seed=1)
        pa = predict_proba(a, X)
        pb = predict_proba(b, X * scale + shift)
        assert np.max(np.abs(pa - pb)) < 1e-6


def test_platt_calibration_by_decile(reference_config, reference_events):
    model, test = train("SVMPoly3", reference_events, reference_config.seed,
                        reference_config.model.for_kind("SVMPoly3"))
    X, y = events_to_arrays(test)
    p = predict_proba(model, X)
    assert np.all((p > 0) & (p < 1))
    for chunk in np.array_split(np.argsort(p, kind="stable"), 10):
        assert abs(p[chunk].mean() - y[chunk].mean()) <= 0.15


def test_model_json_round_trip(tmp_path, svm_model, reference_events):
    path = tmp_path / "m.json"
    save_model(svm_model, path)
    back = load_model(path)
    X, _ = events_to_arrays(reference_events[:40])
    assert np.array_equal(predict_proba(back, X), predict_proba(svm_model, X))
    f = reference_events[0].features
    assert 0 < predict_probability(back, f) < 1


def test_evaluate_report(svm_model, reference_events):
    rep = evaluate(svm_model, reference_events[:100])
    assert set(rep) >= {"accuracy", "precision", "recall", "f1", "n"}


def test_gap_csv_round_trip(tmp_path, reference_events):
    path = tmp_path / "gaps.csv"
    write_gap_events(path, reference_events[:20], comment="provenance test")
    back = read_gap_events(path)
    assert back == list(reference_events[:20])
    header = path.read_text().splitlines()[1]
    assert header.split(",")[3:10] == list(FEATURE_NAMES)


def test_events_disjoint_and_single_acceptance(reference_episodes):
    for ep in reference_episodes:
        starts = [ev.start_time for ev in ep.events]
        assert all(b > a for a, b in zip(starts, starts[1:]))
        assert sum(ev.label == Label.ACCEPTED for ev in ep.events) <= 1
