"""State predictors that compensate the transport delays r0 + r1.

Two forms are provided:

* ``predict_state``/``predict_sampled`` evaluate the integral predictor
  exactly over a piecewise-constant control history (no quadrature: the
  window is split at segment boundaries and each panel is an input
  integral).
* ``PredictorState``/``step_continuous`` integrate the continuous-time
  predictor ODE

      zdot = (A + BK) z + e^{A r1} B K [z(xi_k) - z(t - r1)]

  with classical RK4 on a fixed grid; the delayed value comes from a ring
  buffer by linear interpolation and ``z(theta) = 0`` for ``theta < 0``.
"""

from __future__ import annotations

import bisect
import math
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .matexp import expm, input_integral
from .model import DelayProfile, Gain, LtiPlant

_TIME_EPS = 1e-12


class ControlHistory:
    """Piecewise-constant control signal ``v``; zero before the first start."""

    def __init__(self, m: int):
        self.m = m
        self.starts: list[float] = []
        self.values: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.starts)

    def copy(self) -> "ControlHistory":
        other = ControlHistory(self.m)
        other.starts = list(self.starts)
        other.values = list(self.values)
        return other

    def lookup(self, theta: float) -> np.ndarray:
        """Value on ``[start_k, start_{k+1})``; the later entry wins at ties."""
        i = bisect.bisect_right(self.starts, theta) - 1
        if i < 0:
            return np.zeros(self.m)
        return self.values[i]

    def panels(self, lo: float, hi: float):
        """Yield ``(a, b, value)`` for the maximal constant pieces of ``[lo, hi)``."""
        if hi <= lo:
            return
        i = bisect.bisect_right(self.starts, lo)
        cuts = [lo]
        while i < len(self.starts) and self.starts[i] < hi:
            if self.starts[i] > cuts[-1]:
                cuts.append(self.starts[i])
            i += 1
        cuts.append(hi)
        for a, b in zip(cuts[:-1], cuts[1:]):
            yield a, b, self.lookup(a)


def append_control(history: ControlHistory, xi_k: float, value) -> ControlHistory:
    """Append a segment starting at ``xi_k``; start times must not decrease."""
    if history.starts and xi_k < history.starts[-1]:
        raise ValueError(
            f"control update at {xi_k} precedes the last update at {history.starts[-1]}"
        )
    value = np.asarray(value, dtype=float).reshape(history.m)
    history.starts.append(float(xi_k))
    history.values.append(value.copy())
    return history


def predictor_integral(plant: LtiPlant, history: ControlHistory, lo: float, hi: float) -> np.ndarray:
    """``int_lo^hi e^{A(hi - theta)} B v(theta) dtheta`` over the history's panels."""
    acc = np.zeros(plant.n)
    for a, b, v in history.panels(lo, hi):
        if not np.any(v):
            continue
        acc += input_integral(plant, a, b, hi) @ v
    return acc


def predict_state(
    plant: LtiPlant,
    profile: DelayProfile,
    x_sk,
    s_k: float,
    eta_k: float,
    history: ControlHistory,
) -> np.ndarray:
    """Predicted state ``z(s_k)``, i.e. ``x(s_k + r0 + r1)`` when delays are exact."""
    if not -_TIME_EPS <= eta_k <= profile.eta_max + _TIME_EPS:
        raise ValueError(f"eta_k={eta_k} outside [0, {profile.eta_max}]")
    r = profile.r0 + profile.r1
    xi_k = s_k + profile.r0 + eta_k
    if history.starts and history.starts[-1] > xi_k + _TIME_EPS:
        raise RuntimeError(
            f"history holds an update at {history.starts[-1]} after controller time {xi_k}"
        )
    hi = xi_k - eta_k
    z = expm(plant.A, r) @ np.asarray(x_sk, dtype=float)
    return z + predictor_integral(plant, history, hi - r, hi)


def predict_sampled(
    plant: LtiPlant,
    gain: Gain,
    profile: DelayProfile,
    x_sk,
    s_k: float,
    eta_k: float,
    history: ControlHistory,
) -> np.ndarray:
    """Control value ``u(xi_k) = K z(s_k)`` computed at the controller."""
    return gain.K @ predict_state(plant, profile, x_sk, s_k, eta_k, history)


def state_prediction(plant: LtiPlant, profile: DelayProfile, x_t, t: float, history: ControlHistory):
    """Evaluate the predictor variable ``z(t)`` for arbitrary ``t >= 0``.

    Needs the history to be complete up to ``t + r0``.
    """
    r = profile.r0 + profile.r1
    z = expm(plant.A, r) @ np.asarray(x_t, dtype=float)
    return z + predictor_integral(plant, history, t - profile.r1, t + profile.r0)


# ---------------------------------------------------------------------------
# continuous-time predictor


def default_step(wait: float, r1: float) -> float:
    """Grid step no larger than ``min(wait, r1)/200`` that divides ``r1`` exactly."""
    if r1 <= 0:
        raise ValueError("the continuous predictor needs r1 > 0")
    target = min(wait, r1) / 200.0
    return r1 / math.ceil(r1 / target - 1e-9)


class PredictorState:
    """Current time and value of ``z`` plus a ring buffer covering ``[t - r1, t]``."""

    def __init__(self, z0, r1: float, dt: float, t: float = 0.0):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.t0 = float(t)
        self.t = float(t)
        self.z = np.array(z0, dtype=float)
        self.r1 = float(r1)
        self.dt = float(dt)
        self.size = math.ceil(self.r1 / self.dt) + 2
        self._ring = np.zeros((self.size, len(self.z)))
        self._ring[0] = self.z
        self._head = 0
        self._count = 1
        self.steps = 0
        self._cache: tuple | None = None

    @classmethod
    def initial(cls, plant: LtiPlant, x0, r1: float, dt: float) -> "PredictorState":
        """``z(0) = e^{A r1} x(0)``."""
        return cls(expm(plant.A, r1) @ np.asarray(x0, dtype=float), r1, dt)

    def push(self, z) -> None:
        self._head = (self._head + 1) % self.size
        self._ring[self._head] = z
        self._count = min(self._count + 1, self.size)

    def replace_latest(self, z) -> None:
        """Overwrite the newest value (used when a step is corrected after the fact)."""
        self.z = np.array(z, dtype=float)
        self._ring[self._head] = self.z

    def delayed(self, tau: float) -> np.ndarray:
        """``z(tau)`` for ``tau`` inside the buffer, linearly interpolated."""
        if tau < -_TIME_EPS:
            return np.zeros_like(self.z)
        age = (self.t - tau) / self.dt
        if age < -1e-9 or age > self._count - 1 + 1e-9:
            raise ValueError(f"delayed read at {tau} outside the buffer ending at {self.t}")
        i = min(max(int(math.floor(age)), 0), max(self._count - 2, 0))
        newer = self._ring[(self._head - i) % self.size]
        if self._count == 1:
            return newer
        w = age - i
        older = self._ring[(self._head - i - 1) % self.size]
        return (1.0 - w) * newer + w * older

    def matrices(self, plant: LtiPlant, gain: Gain):
        key = (id(plant), id(gain))
        if self._cache is None or self._cache[0] != key:
            Acl = plant.A + plant.B @ gain.K
            EBK = expm(plant.A, self.r1) @ plant.B @ gain.K
            self._cache = (key, Acl, EBK)
        return self._cache[1], self._cache[2]


def _latch_fn(z_xi) -> Callable[[float], np.ndarray | None]:
    if callable(z_xi):
        return z_xi
    return lambda _t: z_xi


def predictor_rhs(Acl, EBK, z, zxi, zdel):
    bracket = -zdel if zxi is None else zxi - zdel
    return Acl @ z + EBK @ bracket


def rk4_segment(Acl, EBK, r1, delayed, t0, z0, t1, zxi):
    """One RK4 step from ``t0`` to ``t1`` with a fixed latched value.

    ``delayed(tau)`` supplies ``z(tau)``. A step whose delayed window starts
    before time 0 reads zeros throughout, so the jump of ``z`` at 0 lands on a
    step boundary.
    """
    h = t1 - t0
    if h <= 0:
        return z0
    left = t0 - r1 < -_TIME_EPS

    def zd(t):
        return np.zeros_like(z0) if left else delayed(t - r1)

    k1 = predictor_rhs(Acl, EBK, z0, zxi, zd(t0))
    zm = zd(t0 + 0.5 * h)
    k2 = predictor_rhs(Acl, EBK, z0 + 0.5 * h * k1, zxi, zm)
    k3 = predictor_rhs(Acl, EBK, z0 + 0.5 * h * k2, zxi, zm)
    k4 = predictor_rhs(Acl, EBK, z0 + h * k3, zxi, zd(t1))
    return z0 + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_pieces(Acl, EBK, r1, delayed, t0, z0, t1, latch, breaks: Sequence[float] = ()):
    """RK4 from ``t0`` to ``t1``, split at every break strictly inside."""
    cuts = [t0] + sorted(b for b in breaks if t0 + _TIME_EPS < b < t1 - _TIME_EPS) + [t1]
    z = z0
    for a, b in zip(cuts[:-1], cuts[1:]):
        z = rk4_segment(Acl, EBK, r1, delayed, a, z, b, latch(a))
    return z


def step_continuous(
    state: PredictorState,
    plant: LtiPlant,
    gain: Gain,
    r1: float,
    z_xi,
    dt: float,
    breaks: Sequence[float] = (),
) -> PredictorState:
    """Advance ``state`` by one grid step and push the new value into the buffer.

    ``z_xi`` is the latched ``z(xi_k)`` (``None`` before the first actuator
    update) or a callable ``t -> z_xi`` when the latch changes at one of
    ``breaks`` inside the step.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if abs(r1 - state.r1) > _TIME_EPS:
        raise ValueError("r1 does not match the predictor buffer")
    Acl, EBK = state.matrices(plant, gain)
    if r1 == 0:
        # delay-free collapse: the delayed read is the current stage value
        latch = _latch_fn(z_xi)
        K = gain.K

        def f(t, z):
            zx = latch(t)
            u = np.zeros(plant.m) if zx is None else K @ zx
            return plant.A @ z + plant.B @ u

        t0, z0, h = state.t, state.z, dt
        k1 = f(t0, z0)
        k2 = f(t0, z0 + 0.5 * h * k1)
        k3 = f(t0, z0 + 0.5 * h * k2)
        k4 = f(t0, z0 + h * k3)
        z = z0 + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    else:
        z = integrate_pieces(
            Acl, EBK, r1, state.delayed, state.t, state.z, state.t + dt, _latch_fn(z_xi), breaks
        )
    state.steps += 1
    state.t = state.t0 + state.steps * dt
    state.z = z
    state.push(z)
    return state


def consistency_residual(
    state: PredictorState,
    plant: LtiPlant,
    measured_x,
    history_v: tuple[np.ndarray, np.ndarray],
) -> float:
    """Relative gap between the ODE predictor and the integral predictor at ``state.t``.

    ``history_v = (times, values)`` samples ``v = K z`` on the predictor grid;
    the integral is evaluated with the trapezoid rule over ``[t - r1, t]``
    (``v = 0`` before time 0).
    """
    t, r1 = state.t, state.r1
    times, values = (np.asarray(a, dtype=float) for a in history_v)
    values = values.reshape(len(times), -1)
    z_int = expm(plant.A, r1) @ np.asarray(measured_x, dtype=float)
    mask = (times >= max(t - r1, 0.0) - 1e-9) & (times <= t + 1e-9)
    tt, vv = times[mask], values[mask]
    if len(tt) >= 2:
        integrand = np.array([expm(plant.A, t - th) @ plant.B @ v for th, v in zip(tt, vv)])
        z_int = z_int + trapezoid(integrand, tt, axis=0)
    return float(np.linalg.norm(state.z - z_int) / max(1.0, np.linalg.norm(z_int)))
