"""Discrete-event simulation of the networked closed loops.

Sampled scenarios run an event loop over measurement instants ``s_k``,
controller updates ``xi_k`` and actuator updates ``t_k``; the plant is
advanced exactly (ZOH) between consecutive events. Continuous scenarios
co-integrate the plant with the predictor and detect transmission instants
with the switching event-trigger (waiting time, then continuous monitoring).
"""

from __future__ import annotations

import bisect
import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .matexp import expm, zoh_discretize
from .model import DelayProfile, EventTimeline, Gain, LtiPlant, Scenario, TriggerParams
from .predictor import (
    ControlHistory,
    PredictorState,
    append_control,
    default_step,
    integrate_pieces,
    predict_state,
    predictor_integral,
    predictor_rhs,
    state_prediction,
    step_continuous,
)

DIVERGENCE_NORM = 1e12
_EPS = 1e-12

MEASURE, CONTROL, ACTUATE, LOG = 0, 1, 2, 3


@dataclass
class SimConfig:
    horizon: float = 20.0
    x0: np.ndarray | None = None
    seed: int = 0
    log_step: float = 0.01

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not self.log_step > 0:
            raise ValueError("log_step must be positive")
        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float)

    def initial_state(self, n: int) -> np.ndarray:
        if self.x0 is None:
            return np.zeros(n)
        if self.x0.shape != (n,):
            raise ValueError(f"x0 must have {n} entries, got shape {self.x0.shape}")
        return self.x0.copy()


@dataclass
class SimResult:
    """Logged trajectory plus transmission bookkeeping of one run.

    Trajectory rows are the ``log_step`` grid merged with every event
    instant up to the horizon; ``u`` is the actuator value held right after
    the row time and ``transmitted`` flags rows where a control value was
    sent.
    """

    scenario: Scenario | str
    plant: LtiPlant
    gain: Gain
    profile: DelayProfile
    trigger: TriggerParams
    horizon: float
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    transmitted: np.ndarray
    scs: int
    measurements_sent: int
    timeline: EventTimeline
    triggers: np.ndarray
    u_computed: np.ndarray
    u_sent: np.ndarray
    z: np.ndarray | None = None
    zdot: np.ndarray | None = None
    z_pred: np.ndarray | None = None
    history: ControlHistory | None = None
    variant: str = ""
    diverged: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def final_norm(self) -> float:
        if self.diverged:
            return math.inf
        return float(np.linalg.norm(self.x[-1]))

    def state_at(self, t: float) -> np.ndarray:
        """Exact plant state at ``t`` (ZOH propagation from the previous row)."""
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        if i < 0:
            raise ValueError(f"time {t} precedes the trajectory")
        d = t - self.t[i]
        if d == 0:
            return self.x[i].copy()
        zoh = zoh_discretize(self.plant, d)
        return zoh.Ad @ self.x[i] + zoh.Bd @ self.u[i]

    def triggering_error(self) -> np.ndarray:
        """``u_hat(xi_k) - u(xi_k)`` per controller update.

        This is the value of the sampled triggering errors e0 on
        ``[xi_k, xi_{k+1})`` and e1 on ``[t_k, t_{k+1})``.
        """
        return self.u_sent - self.u_computed

    def error_signal(self, kind: str, t: float) -> np.ndarray:
        """Evaluate e0 (controller side) or e1 (actuator side) at time ``t``."""
        times = {"e0": self.timeline.xi, "e1": self.timeline.t}[kind]
        k = int(np.searchsorted(times, t, side="right")) - 1
        if k < 0:
            return np.zeros(self.plant.m)
        return self.triggering_error()[k]


# ---------------------------------------------------------------------------
# timeline and trigger


def generate_timeline(profile: DelayProfile, T: float, seed: int) -> EventTimeline:
    """Uniform sampling ``s_k = k h`` with i.i.d. uniform delays, clamped monotone."""
    N = int(math.floor(T / profile.h + 1e-9)) + 1
    rng = np.random.default_rng(seed)
    s = np.arange(N) * profile.h
    eta_raw = rng.uniform(0.0, profile.eta_max, N)
    mu_raw = rng.uniform(0.0, profile.mu_max, N)
    xi = np.maximum.accumulate(s + profile.r0 + eta_raw)
    t = np.maximum.accumulate(xi + profile.r1 + mu_raw)
    # effective delays after clamping stay within [0, eta_max], [0, mu_max]
    eta = np.clip(xi - s - profile.r0, 0.0, None)
    mu = np.clip(t - xi - profile.r1, 0.0, None)
    return EventTimeline(s=s, eta=eta, mu=mu, xi=xi, t=t)


def trigger_decide(params: TriggerParams, u_hat_prev, u_k) -> bool:
    """True (transmit) iff the relative-change rule is violated (strictly)."""
    u_k = np.asarray(u_k, dtype=float)
    d = np.asarray(u_hat_prev, dtype=float) - u_k
    return bool(d @ params.omega @ d > params.sigma * (u_k @ params.omega @ u_k))


def detect_switch_event(
    u_of: Callable[[float], np.ndarray],
    xi_k: float,
    params: TriggerParams,
    horizon: float = math.inf,
    scan_step: float | None = None,
) -> float:
    """Next transmission instant of the switching event-trigger.

    Waits ``params.wait`` after ``xi_k``, then scans in steps of ``wait/50``
    for the first point where the weighted change of ``u`` exceeds the
    threshold and refines it by bisection to ``1e-9 * wait``. Returns
    ``math.inf`` if no crossing happens before ``horizon``.
    """
    omega, sigma, wait = params.omega, params.sigma, params.wait
    u_k = np.asarray(u_of(xi_k), dtype=float)

    def g(xi):
        u = np.asarray(u_of(xi), dtype=float)
        d = u_k - u
        return d @ omega @ d - sigma * (u @ omega @ u)

    step = wait / 50.0 if scan_step is None else scan_step
    a = xi_k + wait
    if a > horizon:
        return math.inf
    if g(a) > 0:
        return a
    tol = 1e-9 * wait
    while a < horizon:
        b = a + step
        if g(b) > 0:
            while b - a > tol:
                c = 0.5 * (a + b)
                if g(c) > 0:
                    b = c
                else:
                    a = c
            return b
        a = b
    return math.inf


# ---------------------------------------------------------------------------
# sampled loops


def _log_grid(T: float, step: float) -> np.ndarray:
    grid = np.arange(0.0, T + 0.5 * step, step)
    grid = grid[grid <= T + _EPS]
    if grid[-1] < T - _EPS:
        grid = np.append(grid, T)
    return grid


def _sampled_loop(plant, gain, profile, trigger, timeline, config, law, variant):
    n, m = plant.n, plant.m
    K = gain.K
    T = config.horizon
    N = len(timeline)
    x = config.initial_state(n)
    t_cur = 0.0
    u_app = np.zeros(m)
    u_hat = np.zeros(m)
    history = ControlHistory(m)
    xs = np.full((N, n), np.nan)
    z_pred = np.full((N, n), np.nan) if law == "predictor" else None
    u_comp = np.zeros((N, m))
    u_sent = np.zeros((N, m))
    trig = np.zeros(N, dtype=bool)
    scs = 0
    grid = _log_grid(T, config.log_step)

    times = np.concatenate([timeline.s, timeline.xi, timeline.t, grid])
    kinds = np.concatenate(
        [np.full(N, MEASURE), np.full(N, CONTROL), np.full(N, ACTUATE), np.full(len(grid), LOG)]
    )
    index = np.concatenate([np.arange(N)] * 3 + [np.arange(len(grid))])
    order = np.lexsort((index, kinds, times))

    rows_t, rows_x, rows_u, rows_tx = [], [], [], []
    diverged = False
    x_scale = max(1.0, float(np.linalg.norm(x)))
    for e in order:
        te, kind, k = float(times[e]), int(kinds[e]), int(index[e])
        if te > T and kind != CONTROL:
            continue
        if te <= T and te > t_cur:
            zoh = zoh_discretize(plant, te - t_cur)
            x = zoh.Ad @ x + zoh.Bd @ u_app
            t_cur = te
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM * x_scale:
                diverged = True
                break
        sent = False
        if kind == MEASURE:
            xs[k] = x
        elif kind == CONTROL:
            if law == "predictor":
                zk = predict_state(plant, profile, xs[k], timeline.s[k], timeline.eta[k], history)
                z_pred[k] = zk
                u = K @ zk
            else:
                u = K @ xs[k]
            sent = trigger_decide(trigger, u_hat, u)
            if sent:
                u_hat = u.copy()
                scs += 1
            trig[k] = sent
            u_comp[k] = u
            u_sent[k] = u_hat
            append_control(history, timeline.xi[k], u_hat if variant == "held" else u)
        elif kind == ACTUATE:
            u_app = u_sent[k]
        if te <= T:
            rows_t.append(te)
            rows_x.append(x.copy())
            rows_u.append(u_app.copy())
            rows_tx.append(sent)

    return dict(
        t=np.array(rows_t),
        x=np.array(rows_x).reshape(-1, n),
        u=np.array(rows_u).reshape(-1, m),
        transmitted=np.array(rows_tx, dtype=bool),
        scs=scs,
        measurements_sent=N,
        triggers=trig,
        u_computed=u_comp,
        u_sent=u_sent,
        z_pred=z_pred,
        history=history,
        diverged=diverged,
    )


def _sampled_z(plant, profile, out) -> tuple[np.ndarray, np.ndarray]:
    """Predictor variable and its derivative along the logged rows."""
    history = out["history"]
    A, B = plant.A, plant.B
    EB = expm(A, profile.r0 + profile.r1) @ B
    z = np.array(
        [state_prediction(plant, profile, xi, ti, history) for ti, xi in zip(out["t"], out["x"])]
    ).reshape(-1, plant.n)
    zdot = np.array(
        [
            A @ zi + B @ history.lookup(ti + profile.r0) + EB @ (ui - history.lookup(ti - profile.r1))
            for ti, zi, ui in zip(out["t"], z, out["u"])
        ]
    ).reshape(-1, plant.n)
    return z, zdot


def run_sampled(
    plant: LtiPlant,
    gain: Gain,
    profile: DelayProfile,
    trigger: TriggerParams,
    scenario: Scenario,
    config: SimConfig,
    timeline: EventTimeline | None = None,
    variant: str = "auto",
    compute_z: bool = True,
) -> SimResult:
    """Simulate the sampled-measurement loop with the integral predictor.

    ``variant`` selects what the predictor history stores: ``"held"`` keeps
    the last *sent* value (exact prediction when the actuator delay is
    known), ``"computed"`` keeps every computed value. ``"auto"`` picks
    ``held`` when ``mu_max == 0``.
    """
    scenario = Scenario(scenario)
    if scenario.continuous:
        raise ValueError(f"{scenario.value} is a continuous scenario; use run_continuous")
    gain.check(plant)
    if scenario is Scenario.SAMPLED_PREDICTOR:
        trigger = TriggerParams(np.eye(plant.m), 0.0, profile.h)
    if config.horizon < profile.r0 + profile.r1:
        warnings.warn("horizon is shorter than the transport delay r0 + r1", stacklevel=2)
    if variant == "auto":
        variant = "held" if profile.mu_max == 0 else "computed"
    if variant not in ("held", "computed"):
        raise ValueError(f"unknown predictor variant {variant!r}")
    if timeline is None:
        timeline = generate_timeline(profile, config.horizon, config.seed)
    out = _sampled_loop(plant, gain, profile, trigger, timeline, config, "predictor", variant)
    z = zdot = None
    if compute_z and not out["diverged"]:
        z, zdot = _sampled_z(plant, profile, out)
    return SimResult(
        scenario=scenario,
        plant=plant,
        gain=gain,
        profile=profile,
        trigger=trigger,
        horizon=config.horizon,
        timeline=timeline,
        z=z,
        zdot=zdot,
        variant=variant,
        **out,
    )


def run_unpredicted(
    plant: LtiPlant,
    gain: Gain,
    profile: DelayProfile,
    config: SimConfig,
    timeline: EventTimeline | None = None,
) -> SimResult:
    """Same network loop, but the controller sends ``K x(s_k)`` (no predictor)."""
    gain.check(plant)
    trigger = TriggerParams(np.eye(plant.m), 0.0, profile.h)
    if timeline is None:
        timeline = generate_timeline(profile, config.horizon, config.seed)
    out = _sampled_loop(plant, gain, profile, trigger, timeline, config, "state", "computed")
    out.pop("z_pred")
    return SimResult(
        scenario="Unpredicted",
        plant=plant,
        gain=gain,
        profile=profile,
        trigger=trigger,
        horizon=config.horizon,
        timeline=timeline,
        variant="none",
        **out,
    )


# ---------------------------------------------------------------------------
# continuous measurements


class _ContinuousPredictorRun:
    """Predictor ODE on a fixed grid with off-grid evaluation for the trigger.

    With ``anchor`` set, every RK4 grid step is followed by a correction to
    ``e^{A r1} x(t) + int_{t-r1}^t e^{A(t-s)} B v(s) ds`` evaluated from the
    measured plant state, with ``v = K z`` interpolated linearly between grid
    nodes. Without it, the ODE error obeys ``edot = A e`` and grows with the
    unstable open-loop modes.
    """

    def __init__(self, plant, gain, r1, x0, wait, T, anchor=True):
        self.plant, self.gain, self.r1 = plant, gain, r1
        self.anchor = anchor
        self.dt = default_step(wait, r1)
        self.state = PredictorState.initial(plant, x0, r1, self.dt)
        self.Acl, self.EBK = self.state.matrices(plant, gain)
        cap = int(math.ceil((T + wait) / self.dt)) + 8
        self.grid = np.zeros((cap, plant.n))
        self.grid[0] = self.state.z
        self.j = 0
        self.arr_t: list[float] = []
        self.arr_z: list[np.ndarray] = []
        # plant state and held input at every grid node
        self.zoh_dt = zoh_discretize(plant, self.dt)
        self.xg = np.zeros_like(self.grid)
        self.xg[0] = x0
        self.ug = np.zeros((cap, plant.m))
        self.x = np.array(x0, dtype=float)
        self.u_now = np.zeros(plant.m)
        if anchor:
            self._setup_anchor()

    def _setup_anchor(self):
        A, B = self.plant.A, self.plant.B
        n, m = self.plant.n, self.plant.m
        dt = self.dt
        self.N = int(round(self.r1 / dt))
        # first-order-hold panel weights from one augmented exponential
        Mx = np.zeros((n + 2 * m, n + 2 * m))
        Mx[:n, :n] = A
        Mx[:n, n:n + m] = B
        Mx[n:n + m, n + m:] = np.eye(m) / dt
        E = expm(Mx, dt)
        whole, late = E[:n, n:n + m], E[:n, n + m:]
        step = expm(A, dt)
        G0 = np.zeros((self.N, n, m))
        G1 = np.zeros((self.N, n, m))
        P = np.eye(n)
        for p in range(self.N):
            G0[p] = P @ (whole - late)
            G1[p] = P @ late
            P = P @ step
        # reorder so that index i pairs with the panel starting i panels back from t - r1
        self.G0 = G0[::-1].copy()
        self.G1 = G1[::-1].copy()
        self.Er1 = expm(A, self.r1)
        self.v = np.zeros((len(self.grid), m))
        self.v[0] = self.gain.K @ self.grid[0]

    def applied(self, t):
        zl = self.latch(t)
        return np.zeros(self.plant.m) if zl is None else self.gain.K @ zl

    def _propagate(self, x, u, a, b):
        """Exact plant flow from ``a`` to ``b`` starting with input ``u``."""
        for c in self._breaks(a, b) + [b]:
            if c - a == self.dt:
                x = self.zoh_dt.Ad @ x + self.zoh_dt.Bd @ u
            elif c > a:
                zoh = zoh_discretize(self.plant, c - a)
                x = zoh.Ad @ x + zoh.Bd @ u
            a = c
            u = self.applied(c)
        return x

    def x_at(self, tau):
        self.advance_to(tau)
        i = int(math.floor(tau / self.dt + 1e-9))
        if abs(tau - i * self.dt) <= 1e-9 * self.dt:
            return self.xg[i]
        return self._propagate(self.xg[i], self.ug[i], i * self.dt, tau)

    def _anchored(self, j, z_pred):
        """Integral-form predictor at grid index ``j`` using ``z_pred`` for the newest node."""
        self.v[j] = self.gain.K @ z_pred
        lo = j - self.N
        start = max(lo, 0)
        va = self.v[start:j]
        vb = self.v[start + 1:j + 1]
        off = start - lo
        z = self.Er1 @ self.x
        z = z + np.einsum("pnm,pm->n", self.G0[off:], va) + np.einsum("pnm,pm->n", self.G1[off:], vb)
        return z

    def latch(self, t):
        i = bisect.bisect_right(self.arr_t, t + _EPS) - 1
        return None if i < 0 else self.arr_z[i]

    def add_arrival(self, t_k, z_xi):
        if t_k < self.j * self.dt - _EPS:
            raise RuntimeError("actuator update lies inside an already integrated step")
        self.arr_t.append(t_k)
        self.arr_z.append(z_xi)

    def _grid_read(self, tau):
        if tau < -_EPS:
            return np.zeros(self.plant.n)
        pos = max(tau, 0.0) / self.dt
        i = min(int(math.floor(pos)), max(self.j - 1, 0))
        w = pos - i
        if self.j == 0 or w <= 0:
            return self.grid[i]
        return (1.0 - w) * self.grid[i] + w * self.grid[i + 1]

    def _breaks(self, a, b):
        lo = bisect.bisect_right(self.arr_t, a + _EPS)
        hi = bisect.bisect_left(self.arr_t, b - _EPS)
        return self.arr_t[lo:hi]

    def advance_to(self, tau):
        while self.j * self.dt < tau - _EPS:
            t = self.j * self.dt
            breaks = self._breaks(t, t + self.dt)
            step_continuous(self.state, self.plant, self.gain, self.r1, self.latch, self.dt, breaks)
            self.j += 1
            if self.j >= len(self.grid):
                self.grid = np.vstack([self.grid, np.zeros_like(self.grid)])
                self.xg = np.vstack([self.xg, np.zeros_like(self.xg)])
                self.ug = np.vstack([self.ug, np.zeros_like(self.ug)])
                if self.anchor:
                    self.v = np.vstack([self.v, np.zeros_like(self.v)])
            self.x = self._propagate(self.x, self.u_now, t, t + self.dt)
            self.u_now = self.applied(t + self.dt)
            self.xg[self.j] = self.x
            self.ug[self.j] = self.u_now
            if self.anchor:
                z = self._anchored(self.j, self.state.z)
                self.state.replace_latest(z)
                self.v[self.j] = self.gain.K @ z
            self.grid[self.j] = self.state.z

    def z_at(self, tau):
        self.advance_to(tau)
        i = int(math.floor(tau / self.dt + 1e-9))
        t_i = i * self.dt
        if abs(tau - t_i) <= 1e-9 * self.dt:
            return self.grid[i]
        return integrate_pieces(
            self.Acl, self.EBK, self.r1, self._grid_read, t_i, self.grid[i], tau,
            self.latch, self._breaks(t_i, tau),
        )

    def zdot_at(self, tau, z):
        zd = self._grid_read(tau - self.r1)
        return predictor_rhs(self.Acl, self.EBK, z, self.latch(tau), zd)


class _HeldPredictorRun:
    """Integral predictor over the piecewise-constant sent controls (measured x)."""

    def __init__(self, plant, gain, r1, x0):
        self.plant, self.gain, self.r1 = plant, gain, r1
        self.E = expm(plant.A, r1)
        self.EB = self.E @ plant.B
        self.history = ControlHistory(plant.m)
        self.arr_t: list[float] = []
        self.arr_u: list[np.ndarray] = []
        self.checkpoints: list[np.ndarray] = []
        self.x0 = x0

    def add_arrival(self, t_k, u_k):
        self.arr_t.append(t_k)
        self.arr_u.append(u_k)

    def x_at(self, tau):
        i = bisect.bisect_right(self.arr_t, tau + _EPS) - 1
        while len(self.checkpoints) <= i:
            c = len(self.checkpoints)
            if c == 0:
                x_prev, t_prev, u_prev = self.x0, 0.0, np.zeros(self.plant.m)
            else:
                x_prev, t_prev, u_prev = self.checkpoints[c - 1], self.arr_t[c - 1], self.arr_u[c - 1]
            zoh = zoh_discretize(self.plant, self.arr_t[c] - t_prev)
            self.checkpoints.append(zoh.Ad @ x_prev + zoh.Bd @ u_prev)
        if i < 0:
            x_prev, t_prev, u_prev = self.x0, 0.0, np.zeros(self.plant.m)
        else:
            x_prev, t_prev, u_prev = self.checkpoints[i], self.arr_t[i], self.arr_u[i]
        zoh = zoh_discretize(self.plant, max(tau - t_prev, 0.0))
        return zoh.Ad @ x_prev + zoh.Bd @ u_prev

    def applied(self, tau):
        i = bisect.bisect_right(self.arr_t, tau + _EPS) - 1
        return np.zeros(self.plant.m) if i < 0 else self.arr_u[i]

    def z_at(self, tau):
        return self.E @ self.x_at(tau) + predictor_integral(self.plant, self.history, tau - self.r1, tau)

    def zdot_at(self, tau, z):
        A, B = self.plant.A, self.plant.B
        v_now = self.history.lookup(tau)
        v_del = self.history.lookup(tau - self.r1)
        return A @ z + B @ v_now + self.EB @ (self.applied(tau) - v_del)


def run_continuous(
    plant: LtiPlant,
    gain: Gain,
    r1: float,
    mu_max: float,
    trigger: TriggerParams,
    scenario: Scenario,
    config: SimConfig,
    variant: str = "auto",
    anchor: bool = True,
) -> SimResult:
    """Simulate continuous measurements with a switching event-triggered link.

    ``variant="continuous"`` runs the predictor ODE with ``v = K z``;
    ``variant="held"`` uses the sent piecewise-constant controls in the
    integral predictor (exact when ``mu_max == 0``). ``"auto"`` picks
    ``held`` iff ``mu_max == 0``. ``anchor=False`` integrates the predictor
    ODE open loop (no correction from the measured state).
    """
    scenario = Scenario(scenario)
    if not scenario.continuous:
        raise ValueError(f"{scenario.value} is a sampled scenario; use run_sampled")
    gain.check(plant)
    if r1 <= 0:
        raise ValueError("continuous scenarios need a positive actuator delay r1")
    if scenario is Scenario.CONTINUOUS_PREDICTOR:
        omega = trigger.omega if trigger.omega_positive_definite else np.eye(plant.m)
        trigger = TriggerParams(omega, 0.0, trigger.wait)
    if variant == "auto":
        variant = "held" if mu_max == 0 else "continuous"
    T = config.horizon
    x0 = config.initial_state(plant.n)
    K = gain.K
    rng = np.random.default_rng(config.seed)
    if variant == "continuous":
        run = _ContinuousPredictorRun(plant, gain, r1, x0, trigger.wait, T, anchor)
    elif variant == "held":
        run = _HeldPredictorRun(plant, gain, r1, x0)
    else:
        raise ValueError(f"unknown predictor variant {variant!r}")

    xi, mu, tk, zx = [], [], [], []

    def transmit(at):
        z = np.array(run.z_at(at))
        m_k = float(rng.uniform(0.0, mu_max))
        arrival = at + r1 + m_k
        if tk:
            arrival = max(arrival, tk[-1])
        xi.append(at)
        mu.append(arrival - at - r1)
        tk.append(arrival)
        zx.append(z)
        if variant == "continuous":
            run.add_arrival(arrival, z)
        else:
            append_control(run.history, at, K @ z)
            run.add_arrival(arrival, K @ z)

    transmit(0.0)
    scan_step = min(trigger.wait / 50.0, r1 / 2.0)
    while True:
        nxt = detect_switch_event(lambda s: K @ run.z_at(s), xi[-1], trigger, T, scan_step)
        if not nxt <= T:
            break
        transmit(nxt)
    if variant == "continuous":
        run.advance_to(T)

    grid = _log_grid(T, config.log_step)
    ev = np.array([v for v in xi + tk if v <= T])
    row_t = np.sort(np.concatenate([grid, ev]))
    u_arr = [K @ z for z in zx]
    x_rows = np.array([run.x_at(t) for t in row_t]).reshape(-1, plant.n)
    u_rows = np.array([run.applied(t) for t in row_t]).reshape(-1, plant.m)
    z_rows = np.array([run.z_at(t) for t in row_t]).reshape(-1, plant.n)
    zdot_rows = np.array([run.zdot_at(t, z) for t, z in zip(row_t, z_rows)]).reshape(-1, plant.n)
    xi_arr = np.array(xi)
    transmitted = np.isin(row_t, xi_arr)
    u_comp = np.array(u_arr).reshape(-1, plant.m)
    timeline = EventTimeline(
        s=xi_arr.copy(), eta=np.zeros(len(xi)), mu=np.array(mu), xi=xi_arr, t=np.array(tk)
    )
    profile = DelayProfile(0.0, r1, 0.0, mu_max, trigger.wait)
    extras = {"dt": getattr(run, "dt", None)}
    if variant == "continuous":
        extras["grid_z"] = run.grid[: run.j + 1].copy()
    return SimResult(
        scenario=scenario,
        plant=plant,
        gain=gain,
        profile=profile,
        trigger=trigger,
        horizon=T,
        t=row_t,
        x=x_rows,
        u=u_rows,
        transmitted=transmitted,
        scs=len(xi),
        measurements_sent=len(xi),
        timeline=timeline,
        triggers=np.ones(len(xi), dtype=bool),
        u_computed=u_comp,
        u_sent=u_comp.copy(),
        z=z_rows,
        zdot=zdot_rows,
        history=getattr(run, "history", None),
        variant=variant,
        extras=extras,
    )


# ---------------------------------------------------------------------------
# post-processing


def fit_decay(result: SimResult, alpha: float) -> float:
    """Decay margin: fitted exponential rate of ``|x(t)|`` on ``[T/2, T]`` minus ``alpha``."""
    if result.diverged:
        return -math.inf
    T = result.horizon
    mask = result.t >= 0.5 * T
    t = result.t[mask]
    norms = np.maximum(np.linalg.norm(result.x[mask], axis=1), 1e-300)
    slope = np.polyfit(t, np.log(norms), 1)[0]
    return float(-slope - alpha)


def delay_extremes(timeline: EventTimeline, profile: DelayProfile) -> dict[str, float]:
    """Extremes of the closed-loop delays tau, tau1, tau2 realized by a timeline.

    ``tau(t) = t - s_k`` on ``[xi_k - r0, xi_{k+1} - r0)``, ``tau1`` on
    ``[xi_k + r1, xi_{k+1} + r1)`` and ``tau2`` on ``[t_k, t_{k+1})``.
    Empty intervals (equal update times) are skipped.
    """
    s, xi, t = timeline.s, timeline.xi, timeline.t
    r0, r1 = profile.r0, profile.r1
    tau_max = tau1_max = tau2_max = 0.0
    tau_min = tau1_min = tau2_min = math.inf
    for k in range(len(s) - 1):
        if xi[k + 1] > xi[k]:
            tau_min = min(tau_min, xi[k] - r0 - s[k])
            tau_max = max(tau_max, xi[k + 1] - r0 - s[k])
            tau1_min = min(tau1_min, xi[k] + r1 - s[k])
            tau1_max = max(tau1_max, xi[k + 1] + r1 - s[k])
        if t[k + 1] > t[k]:
            tau2_min = min(tau2_min, t[k] - s[k])
            tau2_max = max(tau2_max, t[k + 1] - s[k])
    return dict(
        tau_min=tau_min, tau_max=tau_max,
        tau1_min=tau1_min, tau1_max=tau1_max,
        tau2_min=tau2_min, tau2_max=tau2_max,
    )


def write_trajectory_csv(result: SimResult, path: str | Path) -> Path:
    path = Path(path)
    n, m = result.plant.n, result.plant.m
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"z{i + 1}" for i in range(n)]
    header += [f"u{i + 1}" for i in range(m)] + ["transmitted"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in range(len(result.t)):
            z = result.z[r] if result.z is not None else [float("nan")] * n
            w.writerow(
                [repr(float(result.t[r]))]
                + [repr(float(v)) for v in result.x[r]]
                + [repr(float(v)) for v in z]
                + [repr(float(v)) for v in result.u[r]]
                + [int(result.transmitted[r])]
            )
    return path


def write_timeline_csv(result: SimResult, path: str | Path) -> Path:
    path = Path(path)
    tl = result.timeline
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "s", "eta", "mu", "xi", "t", "transmitted"])
        for k in range(len(tl)):
            w.writerow(
                [k, repr(float(tl.s[k])), repr(float(tl.eta[k])), repr(float(tl.mu[k])),
                 repr(float(tl.xi[k])), repr(float(tl.t[k])), int(result.triggers[k])]
            )
    return path
