import csv
import math

import numpy as np
import pytest

from ncspred.matexp import expm, zoh_discretize
from ncspred.model import DelayProfile, Gain, LtiPlant, Scenario, TriggerParams
from ncspred.simulator import (
    SimConfig,
    delay_extremes,
    detect_switch_event,
    fit_decay,
    generate_timeline,
    run_continuous,
    run_sampled,
    run_unpredicted,
    trigger_decide,
    write_timeline_csv,
    write_trajectory_csv,
)

X0 = [0.98, 0.0, 0.2, 0.0]
PROFILE = DelayProfile(0.2, 0.2, 0.01, 0.01, 0.0369)


def _et(sigma, h):
    return TriggerParams(np.eye(1), sigma, h)


# timeline ------------------------------------------------------------------


def test_timeline_without_jitter():
    prof = DelayProfile(0.1, 0.2, 0.0, 0.0, 0.05)
    tl = generate_timeline(prof, 1.0, 3)
    k = np.arange(len(tl))
    np.testing.assert_allclose(tl.s, k * 0.05, atol=1e-15)
    np.testing.assert_allclose(tl.xi, k * 0.05 + 0.1, atol=1e-15)
    np.testing.assert_allclose(tl.t, k * 0.05 + 0.3, atol=1e-15)
    assert np.abs(tl.eta).max() < 1e-15 and np.abs(tl.mu).max() < 1e-15


def test_timeline_sample_count():
    assert len(generate_timeline(PROFILE, 20.0, 0)) == 543
    assert len(generate_timeline(DelayProfile(0, 0.2, 0, 0.01, 0.0646), 20.0, 0)) == 310


def test_timeline_seeded():
    a, b = generate_timeline(PROFILE, 5.0, 11), generate_timeline(PROFILE, 5.0, 11)
    np.testing.assert_array_equal(a.xi, b.xi)
    np.testing.assert_array_equal(a.t, b.t)
    assert not np.array_equal(a.xi, generate_timeline(PROFILE, 5.0, 12).xi)


def test_timeline_clamping_over_many_seeds():
    # eta_max > h makes raw controller times go backwards; clamping must fix them
    prof = DelayProfile(0.05, 0.1, 0.08, 0.07, 0.02)
    fired = 0
    for seed in range(1000):
        tl = generate_timeline(prof, 1.0, seed)
        tl.check(prof)
        rng = np.random.default_rng(seed)
        raw = tl.s + prof.r0 + rng.uniform(0, prof.eta_max, len(tl))
        fired += bool(np.any(np.diff(raw) < 0))
    assert fired > 900


# trigger -------------------------------------------------------------------


def test_trigger_examples():
    p = TriggerParams(np.eye(1), 0.04, 0.1)
    assert not trigger_decide(p, [1.0], [1.1])
    assert trigger_decide(p, [1.0], [1.3])
    assert not trigger_decide(p, [2.0], [2.0])
    assert trigger_decide(TriggerParams(np.eye(2), 0.0, 0.1), [0.0, 0.0], [0.0, 1e-9])
    assert not trigger_decide(TriggerParams(np.eye(1), 0.0, 0.1), [0.0], [0.0])


def test_switch_event_examples():
    p0 = TriggerParams(np.eye(1), 0.0, 0.105)
    assert detect_switch_event(lambda s: np.array([math.exp(-s)]), 0.3, p0) == pytest.approx(0.405, abs=1e-15)
    p = TriggerParams(np.eye(1), 0.13, 0.105)
    assert detect_switch_event(lambda s: np.array([2.0]), 0.0, p, horizon=5.0) == math.inf


def test_switch_event_closed_form_root():
    p = TriggerParams(np.eye(1), 0.13, 0.105)
    xi = detect_switch_event(lambda s: np.array([math.exp(-s)]), 0.0, p, horizon=10.0)
    assert xi == pytest.approx(math.log(1 + math.sqrt(0.13)), abs=1e-8)


def test_switch_event_after_horizon():
    p = TriggerParams(np.eye(1), 0.0, 0.5)
    assert detect_switch_event(lambda s: np.array([s]), 0.8, p, horizon=1.0) == math.inf


# sampled loops ---------------------------------------------------------------


def test_zero_gain_zero_state(pend):
    plant = pend[0]
    res = run_sampled(plant, Gain(np.zeros((1, 4))), PROFILE, _et(0.01, 0.0369),
                      Scenario.SAMPLED_EVENT_TRIGGERED, SimConfig(2.0, np.zeros(4), 1))
    assert np.all(res.x == 0) and res.scs == 0


def test_sampled_predictor_count(pend):
    plant, gain = pend
    res = run_sampled(plant, gain, PROFILE, _et(0.0, 0.0369), Scenario.SAMPLED_PREDICTOR,
                      SimConfig(20.0, X0, 1), compute_z=False)
    assert res.scs == res.measurements_sent == 543
    assert res.final_norm < 0.15 * np.linalg.norm(X0) and fit_decay(res, 0.01) > 0


def test_sampled_deterministic(pend):
    plant, gain = pend
    runs = [run_sampled(plant, gain, DelayProfile(0.2, 0.2, 0.01, 0.01, 0.0315), _et(0.01, 0.0315),
                        Scenario.SAMPLED_EVENT_TRIGGERED, SimConfig(5.0, X0, 4)) for _ in range(2)]
    np.testing.assert_array_equal(runs[0].x, runs[1].x)
    np.testing.assert_array_equal(runs[0].z, runs[1].z)
    assert runs[0].scs == runs[1].scs


def test_applied_input_changes_only_at_actuator_times(pend):
    plant, gain = pend
    prof = DelayProfile(0.2, 0.2, 0.01, 0.01, 0.0315)
    res = run_sampled(plant, gain, prof, _et(0.01, 0.0315), Scenario.SAMPLED_EVENT_TRIGGERED,
                      SimConfig(5.0, X0, 2), compute_z=False)
    change = np.flatnonzero(np.any(np.diff(res.u, axis=0) != 0, axis=1)) + 1
    assert np.all(np.isin(res.t[change], res.timeline.t))
    assert res.scs <= res.measurements_sent


def test_delay_extremes_within_bounds(pend):
    plant, gain = pend
    for seed in range(20):
        tl = generate_timeline(PROFILE, 20.0, seed)
        ext = delay_extremes(tl, PROFILE)
        r = PROFILE.r0 + PROFILE.r1
        tau_M = PROFILE.h + PROFILE.eta_max + PROFILE.mu_max + r
        assert 0 <= ext["tau_min"] and ext["tau_max"] <= PROFILE.h + PROFILE.eta_max + 1e-12
        assert r - 1e-12 <= ext["tau1_min"] and ext["tau1_max"] <= tau_M + 1e-12
        assert ext["tau1_min"] <= ext["tau2_min"] + 1e-12 and ext["tau2_max"] <= tau_M + 1e-12


def test_event_triggering_never_sends_more(pend):
    plant, gain = pend
    prof = DelayProfile(0.2, 0.2, 0.01, 0.01, 0.0315)
    for seed in (1, 2, 3):
        cfg = SimConfig(20.0, X0, seed)
        tl = generate_timeline(prof, 20.0, seed)
        et = run_sampled(plant, gain, prof, _et(0.01, 0.0315), Scenario.SAMPLED_EVENT_TRIGGERED, cfg,
                         timeline=tl, compute_z=False)
        per = run_sampled(plant, gain, prof, _et(0.0, 0.0315), Scenario.SAMPLED_EVENT_TRIGGERED, cfg,
                          timeline=tl, compute_z=False)
        assert et.scs <= per.scs


def test_prediction_exact_without_jitter(pend):
    plant, gain = pend
    prof = DelayProfile(0.2, 0.2, 0.0, 0.0, 0.0369)
    for scenario, sigma in ((Scenario.SAMPLED_PREDICTOR, 0.0), (Scenario.SAMPLED_EVENT_TRIGGERED, 0.05)):
        res = run_sampled(plant, gain, prof, _et(sigma, 0.0369), scenario, SimConfig(10.0, X0, 1),
                          compute_z=False)
        r = prof.r0 + prof.r1
        worst = 0.0
        for k, s in enumerate(res.timeline.s):
            if s + r > 10.0:
                break
            x = res.state_at(s + r)
            worst = max(worst, np.linalg.norm(res.z_pred[k] - x) / np.linalg.norm(x))
        assert worst <= 1e-8


def test_reduced_equation(pend):
    # eta = mu = 0, sigma = 0: x(s_k + r) = (Ad + Bd K)^k e^{A r} x0
    plant, gain = pend
    prof = DelayProfile(0.2, 0.2, 0.0, 0.0, 0.0369)
    res = run_sampled(plant, gain, prof, _et(0.0, 0.0369), Scenario.SAMPLED_PREDICTOR,
                      SimConfig(10.0, X0, 1), compute_z=False)
    zoh = zoh_discretize(plant, prof.h)
    F = zoh.Ad + zoh.Bd @ gain.K
    y = expm(plant.A, 0.4) @ np.asarray(X0)
    for k, s in enumerate(res.timeline.s):
        if s + 0.4 > 10.0:
            break
        x = res.state_at(s + 0.4)
        assert np.linalg.norm(x - y) <= 1e-6 * max(np.linalg.norm(y), 1e-3)
        y = F @ y


def test_sampled_z_matches_state_shift(pend):
    # with exact delays the logged predictor variable is x shifted by r0 + r1
    plant, gain = pend
    prof = DelayProfile(0.2, 0.2, 0.0, 0.0, 0.0369)
    res = run_sampled(plant, gain, prof, _et(0.0, 0.0369), Scenario.SAMPLED_PREDICTOR, SimConfig(3.0, X0, 1))
    for i in range(0, len(res.t), 37):
        if res.t[i] + 0.4 <= 3.0:
            x = res.state_at(res.t[i] + 0.4)
            assert np.linalg.norm(res.z[i] - x) <= 1e-8 * np.linalg.norm(x)


def test_short_horizon_warns(pend):
    plant, gain = pend
    with pytest.warns(UserWarning):
        run_sampled(plant, gain, PROFILE, _et(0.0, 0.0369), Scenario.SAMPLED_PREDICTOR, SimConfig(0.3, X0, 1))


def test_scenario_mismatch(pend):
    plant, gain = pend
    with pytest.raises(ValueError):
        run_sampled(plant, gain, PROFILE, _et(0.0, 0.0369), Scenario.CONTINUOUS_PREDICTOR, SimConfig(1.0, X0))
    with pytest.raises(ValueError):
        run_continuous(plant, gain, 0.2, 0.01, _et(0.0, 0.1), Scenario.SAMPLED_PREDICTOR, SimConfig(1.0, X0))


# unpredicted ---------------------------------------------------------------


def test_unpredicted_examples(pend):
    plant, gain = pend
    assert np.all(np.linalg.eigvals(plant.A + plant.B @ gain.K).real < 0)
    fast = run_unpredicted(plant, gain, DelayProfile(0, 0, 0, 0, 1e-3), SimConfig(20.0, X0, 0))
    assert fast.final_norm < 0.15 * np.linalg.norm(X0) and fit_decay(fast, 0.01) > 0
    zero = run_unpredicted(plant, gain, DelayProfile(0.1, 0.1, 0, 0, 0.0369), SimConfig(5.0, np.zeros(4), 0))
    assert np.all(zero.x == 0)


def test_unpredicted_loses_decay(pend):
    plant, gain = pend
    res = run_unpredicted(plant, gain, DelayProfile(0.1, 0.1, 0, 0, 0.0369), SimConfig(20.0, X0, 0))
    assert fit_decay(res, 0.0) < 0


# continuous ----------------------------------------------------------------


def test_continuous_zero_gain(pend):
    plant = pend[0]
    res = run_continuous(plant, Gain(np.zeros((1, 4))), 0.2, 0.01, _et(0.0, 0.105),
                         Scenario.CONTINUOUS_PREDICTOR, SimConfig(2.0, X0, 1))
    assert res.scs == 1
    assert np.all(res.u == 0)
    np.testing.assert_allclose(res.x[-1], expm(plant.A, 2.0) @ np.asarray(X0), rtol=1e-10)


def test_continuous_predictor_count(pend):
    plant, gain = pend
    res = run_continuous(plant, gain, 0.2, 0.01, _et(0.0, 0.105), Scenario.CONTINUOUS_PREDICTOR,
                         SimConfig(20.0, X0, 1))
    assert abs(res.scs - 191) <= 1
    assert res.final_norm < 0.15 * np.linalg.norm(X0) and fit_decay(res, 0.01) > 0


def test_continuous_held_variant_is_exact(pend):
    plant, gain = pend
    res = run_continuous(plant, gain, 0.2, 0.0, _et(0.13, 0.105), Scenario.SWITCHING_EVENT_TRIGGERED,
                         SimConfig(5.0, X0, 1))
    assert res.variant == "held"
    for i in range(0, len(res.t), 25):
        if res.t[i] + 0.2 <= 5.0:
            x = res.state_at(res.t[i] + 0.2)
            assert np.linalg.norm(res.z[i] - x) <= 1e-8 * np.linalg.norm(x)


def test_switching_sends_fewer(pend):
    plant, gain = pend
    cfg = SimConfig(20.0, X0, 3)
    sw = run_continuous(plant, gain, 0.2, 0.01, _et(0.13, 0.105), Scenario.SWITCHING_EVENT_TRIGGERED, cfg)
    assert sw.scs < 120
    assert sw.final_norm < 0.15 * np.linalg.norm(X0)
    assert np.all(np.diff(sw.timeline.xi) >= 0.105 - 1e-12)


def test_continuous_needs_delay(pend):
    plant, gain = pend
    with pytest.raises(ValueError):
        run_continuous(plant, gain, 0.0, 0.0, _et(0.0, 0.1), Scenario.CONTINUOUS_PREDICTOR, SimConfig(1.0, X0))


# post-processing -------------------------------------------------------------


def test_fit_decay_examples():
    plant = LtiPlant([[-1.0]], [[1.0]])
    res = run_unpredicted(plant, Gain([[0.0]]), DelayProfile(0, 0, 0, 0, 0.1), SimConfig(10.0, [1.0], 0))
    assert fit_decay(res, 0.5) == pytest.approx(0.5, abs=1e-6)
    grow = run_unpredicted(LtiPlant([[0.3]], [[1.0]]), Gain([[0.0]]), DelayProfile(0, 0, 0, 0, 0.1),
                           SimConfig(10.0, [1.0], 0))
    assert fit_decay(grow, 0.0) < 0


def test_csv_outputs(pend, tmp_path):
    plant, gain = pend
    res = run_sampled(plant, gain, PROFILE, _et(0.0, 0.0369), Scenario.SAMPLED_PREDICTOR, SimConfig(1.0, X0, 1))
    traj = write_trajectory_csv(res, tmp_path / "traj.csv")
    tl = write_timeline_csv(res, tmp_path / "tl.csv")
    with traj.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x1", "x2", "x3", "x4", "z1", "z2", "z3", "z4", "u1", "transmitted"]
    assert len(rows) == len(res.t) + 1
    with tl.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "s", "eta", "mu", "xi", "t", "transmitted"]
    assert len(rows) == len(res.timeline) + 1


def test_error_signal_views(pend):
    plant, gain = pend
    prof = DelayProfile(0.2, 0.2, 0.01, 0.01, 0.0315)
    res = run_sampled(plant, gain, prof, _et(0.01, 0.0315), Scenario.SAMPLED_EVENT_TRIGGERED,
                      SimConfig(3.0, X0, 1), compute_z=False)
    e = res.triggering_error()
    assert np.all(e[res.triggers] == 0)
    k = int(np.flatnonzero(~res.triggers)[0])
    np.testing.assert_array_equal(res.error_signal("e0", res.timeline.xi[k]), e[k])
    assert np.all(res.error_signal("e1", 0.0) == 0)
