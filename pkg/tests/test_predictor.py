import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rel
from ncspred.matexp import expm, zoh_discretize
from ncspred.model import DelayProfile, Gain, LtiPlant, Scenario, TriggerParams
from ncspred.predictor import (
    ControlHistory,
    PredictorState,
    append_control,
    consistency_residual,
    default_step,
    predict_sampled,
    predict_state,
    step_continuous,
)
from ncspred.simulator import SimConfig, run_continuous
from oracles import brute_lookup, midpoint_predictor


def _history(entries, m=1):
    h = ControlHistory(m)
    for s, v in entries:
        append_control(h, s, v)
    return h


def test_lookup_examples():
    h = _history([(0.0, [1.0]), (1.0, [2.0]), (1.0, [3.0]), (2.5, [4.0])])
    assert h.lookup(-0.1)[0] == 0.0
    assert h.lookup(0.0)[0] == 1.0
    assert h.lookup(0.999)[0] == 1.0
    assert h.lookup(1.0)[0] == 3.0  # later entry wins at a tie
    assert h.lookup(10.0)[0] == 4.0


def test_append_rejects_decreasing_time():
    h = _history([(1.0, [1.0])])
    with pytest.raises(ValueError):
        append_control(h, 0.5, [2.0])


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 5), st.floats(-3, 3)), min_size=0, max_size=12),
    st.floats(-1, 6),
)
def test_lookup_matches_linear_scan(raw, theta):
    entries = sorted(raw, key=lambda e: e[0])
    h = _history([(s, [v]) for s, v in entries])
    assert h.lookup(theta)[0] == brute_lookup([(s, [v]) for s, v in entries], theta, 1)[0]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=1, max_size=10), st.floats(0, 5), st.floats(0, 2))
def test_panels_cover_window(starts, lo, width):
    h = _history([(s, [i + 1.0]) for i, s in enumerate(sorted(starts))])
    hi = lo + width
    pieces = list(h.panels(lo, hi))
    if hi <= lo:
        assert pieces == []
        return
    assert pieces[0][0] == lo and pieces[-1][1] == hi
    for (a, b, v), nxt in zip(pieces, pieces[1:] + [None]):
        assert a < b
        if nxt is not None:
            assert nxt[0] == b
        np.testing.assert_array_equal(v, h.lookup(a))


def test_predict_examples_integrator():
    # xdot = u: prediction is x plus the control area over the delay window
    plant = LtiPlant([[0.0]], [[1.0]])
    prof = DelayProfile(0.1, 0.2, 0.0, 0.0, 0.05)
    hist = _history([(0.0, [1.0]), (0.15, [-2.0])])
    # s_k = 0.3, xi_k = 0.4; window [s_k - r1, s_k + r0] = [0.1, 0.4]
    z = predict_state(plant, prof, [1.0], 0.3, 0.0, hist)
    assert z[0] == pytest.approx(1.0 + 0.05 * 1.0 + 0.25 * (-2.0), abs=1e-14)
    u = predict_sampled(plant, Gain([[3.0]]), prof, [1.0], 0.3, 0.0, hist)
    assert u[0] == pytest.approx(3 * z[0], abs=1e-14)


def test_predict_without_history_is_free_response(pend):
    plant = pend[0]
    prof = DelayProfile(0.2, 0.2, 0.01, 0.01, 0.0369)
    x = np.array([0.98, 0.0, 0.2, 0.0])
    z = predict_state(plant, prof, x, 0.0, 0.0, ControlHistory(1))
    assert rel(z, expm(plant.A, 0.4) @ x) < 1e-14


def test_predict_argument_checks(pend):
    plant = pend[0]
    prof = DelayProfile(0.2, 0.2, 0.01, 0.01, 0.0369)
    with pytest.raises(ValueError):
        predict_state(plant, prof, np.zeros(4), 0.0, 0.02, ControlHistory(1))
    hist = _history([(5.0, [1.0])])
    with pytest.raises(RuntimeError):
        predict_state(plant, prof, np.zeros(4), 0.0, 0.0, hist)


def test_three_segment_pendulum_vs_midpoint(pend):
    plant = pend[0]
    prof = DelayProfile(0.2, 0.2, 0.01, 0.0, 0.05)
    segs = [(0.05, [0.7]), (0.17, [-1.3]), (0.31, [2.1])]
    hist = _history(segs)
    x = np.array([0.3, -0.1, 0.05, 0.2])
    s_k, eta = 0.4, 0.004
    z = predict_state(plant, prof, x, s_k, eta, hist)
    ref = expm(plant.A, 0.4) @ x + midpoint_predictor(plant.A, plant.B, segs, s_k - 0.2, s_k + 0.2, s_k + 0.2)
    assert rel(z, ref) < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_prediction_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    plant = LtiPlant(rng.normal(size=(3, 3)), rng.normal(size=(3, 1)))
    prof = DelayProfile(0.1, 0.15, 0.02, 0.0, 0.05)
    starts = np.sort(rng.uniform(0, 0.3, 4))
    v1, v2 = rng.normal(size=4), rng.normal(size=4)
    x1, x2 = rng.normal(size=3), rng.normal(size=3)
    h1 = _history([(s, [v]) for s, v in zip(starts, v1)])
    h2 = _history([(s, [v]) for s, v in zip(starts, v2)])
    h12 = _history([(s, [a * p + b * q]) for s, p, q in zip(starts, v1, v2)])
    z1 = predict_state(plant, prof, x1, 0.3, 0.01, h1)
    z2 = predict_state(plant, prof, x2, 0.3, 0.01, h2)
    z12 = predict_state(plant, prof, a * x1 + b * x2, 0.3, 0.01, h12)
    assert np.linalg.norm(z12 - (a * z1 + b * z2)) <= 1e-10 * max(1.0, np.linalg.norm(z12))


def test_default_step_divides_r1():
    dt = default_step(0.105, 0.2)
    assert dt <= 0.105 / 200 and abs(0.2 / dt - round(0.2 / dt)) < 1e-9
    with pytest.raises(ValueError):
        default_step(0.1, 0.0)


def test_buffer_interpolation():
    st_ = PredictorState([0.0], 0.1, 0.05)
    for k in range(1, 4):
        st_.t = 0.05 * k
        st_.push([float(k)])
    assert st_.delayed(0.125)[0] == pytest.approx(2.5)
    assert st_.delayed(-1.0)[0] == 0.0
    with pytest.raises(ValueError):
        st_.delayed(0.2)


def test_step_continuous_no_delay_is_zoh(pend):
    plant, gain = pend
    z0 = np.array([0.98, 0.0, 0.2, 0.0])
    zx = np.array([0.1, 0.0, -0.05, 0.0])
    dt, N = 0.001, 500
    st_ = PredictorState(z0, 0.0, dt)
    for _ in range(N):
        step_continuous(st_, plant, gain, 0.0, zx, dt)
    zoh = zoh_discretize(plant, N * dt)
    ref = zoh.Ad @ z0 + zoh.Bd @ (gain.K @ zx)
    assert st_.t == pytest.approx(0.5, abs=1e-15)
    assert rel(st_.z, ref) < 1e-8


def test_step_continuous_zero_equilibrium(pend):
    plant, gain = pend
    st_ = PredictorState(np.zeros(4), 0.2, 0.001)
    for _ in range(300):
        step_continuous(st_, plant, gain, 0.2, np.zeros(4), 0.001)
    assert np.all(st_.z == 0)


def test_step_continuous_argument_checks(pend):
    plant, gain = pend
    st_ = PredictorState(np.zeros(4), 0.2, 0.001)
    with pytest.raises(ValueError):
        step_continuous(st_, plant, gain, 0.2, None, 0.0)
    with pytest.raises(ValueError):
        step_continuous(st_, plant, gain, 0.1, None, 0.001)


def _closed_loop_ode(plant, gain, dt, T=5.0, r1=0.2, wait=0.1):
    """Predictor ODE with a transmission every ``wait`` seconds arriving ``r1`` later."""
    x0 = np.array([0.98, 0.0, 0.2, 0.0])
    st_ = PredictorState.initial(plant, x0, r1, dt)
    every, lag = int(round(wait / dt)), int(round(r1 / dt))
    sent, latch = {}, None
    for j in range(int(round(T / dt))):
        if j % every == 0:
            sent[j + lag] = st_.z.copy()
        latch = sent.pop(j, latch)
        step_continuous(st_, plant, gain, r1, latch, dt)
    return st_.z


def test_step_halving_convergence(pend):
    plant, gain = pend
    dt = min(0.1, 0.2) / 200
    z1 = _closed_loop_ode(plant, gain, dt)
    z2 = _closed_loop_ode(plant, gain, dt / 2)
    assert rel(z1, z2) < 1e-6


def test_consistency_residual_trivial(pend):
    plant, gain = pend
    x0 = np.array([0.98, 0.0, 0.2, 0.0])
    st_ = PredictorState.initial(plant, x0, 0.2, 0.001)
    assert consistency_residual(st_, plant, x0, (np.array([0.0]), np.zeros((1, 1)))) < 1e-15
    zero = PredictorState(np.zeros(4), 0.2, 0.001, t=3.0)
    times = np.arange(2.8, 3.0001, 0.001)
    assert consistency_residual(zero, plant, np.zeros(4), (times, np.zeros((len(times), 1)))) == 0.0


def test_consistency_residual_along_continuous_run(pend):
    plant, gain = pend
    trig = TriggerParams(np.eye(1), 0.0, 0.105)
    res = run_continuous(plant, gain, 0.2, 0.01, trig, Scenario.CONTINUOUS_PREDICTOR,
                         SimConfig(10.0, [0.98, 0.0, 0.2, 0.0], 1), variant="continuous")
    dt = res.extras["dt"]
    grid = res.extras["grid_z"]
    j = int(round(10.0 / dt))
    times = np.arange(j + 1) * dt
    values = grid[: j + 1] @ gain.K.T
    state = PredictorState(grid[j], 0.2, dt, t=10.0)
    x10 = res.x[np.argmin(np.abs(res.t - 10.0))]
    assert consistency_residual(state, plant, x10, (times, values)) <= 1e-4
