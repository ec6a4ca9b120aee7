"""Lyapunov-Krasovskii functionals evaluated along simulated trajectories."""

from __future__ import annotations

import numpy as np
from scipy.integrate import trapezoid


def functional_terms(family: str, params: dict):
    """Return ``(singles, doubles, history)`` describing V for a family.

    ``singles`` holds ``(name, lo, hi)`` for ``int_{t-hi}^{t-lo} e^{2a(s-t)} z'Xz ds``;
    ``doubles`` holds ``(name, c, lo, hi)`` for
    ``c int_{-hi}^{-lo} int_{t+th}^t e^{2a(s-t)} zdot'X zdot ds dth``;
    ``history`` is the length of the past window V depends on.
    """
    p = params
    if family == "lemma1":
        tb, tM, r = p["tau_bar"], p["tau_M"], p["r0"] + p["r1"]
        singles = [("S0", 0.0, tb), ("S", tb, r), ("S1", r, tM)]
        doubles = [("R0", tb, 0.0, tb), ("R1", tM - r, r, tM)]
        return singles, doubles, tM
    if family == "prop1":
        tb = p["tau_bar"]
        return [("S", 0.0, tb)], [("R", tb, 0.0, tb)], tb
    if family == "lemma2":
        r1, mu, tt, h = p["r1"], p["mu_max"], p["tau_tilde"], p["h"]
        singles = [("S", 0.0, r1), ("S0", r1, r1 + mu), ("S1", r1 + mu, r1 + tt)]
        doubles = [("R0", mu, r1, r1 + mu), ("R1", h, r1 + mu, r1 + tt)]
        return singles, doubles, r1 + tt
    if family == "prop3":
        h = p["h"]
        return [("S", 0.0, h)], [("R", h, 0.0, h)], h
    raise ValueError(f"no functional for family {family!r}")


def _derivative(times, z):
    """Central differences on the distinct time nodes."""
    keep = np.concatenate([[True], np.diff(times) > 0])
    t, zz = times[keep], z[keep]
    d = np.gradient(zz, t, axis=0)
    idx = np.cumsum(keep) - 1
    return d[idx]


def _window(times, values, a, b):
    """Rows of ``values`` on ``[a, b]`` with linearly interpolated end points."""
    inside = (times > a) & (times < b)
    ends = [np.array([np.interp(s, times, values[:, k]) for k in range(values.shape[1])]) for s in (a, b)]
    t = np.concatenate([[a], times[inside], [b]])
    v = np.vstack([ends[0], values[inside], ends[1]])
    return t, v


def _form(v, X):
    """Row-wise quadratic forms ``v_i' X v_i``."""
    return np.einsum("ij,jk,ik->i", v, X, v)


def evaluate_V(cert, result, t: float) -> float:
    """Value of the family's functional at time ``t`` along ``result``.

    ``result`` needs arrays ``t``, ``z`` and (optionally) ``zdot``; without
    ``zdot`` the derivative is taken by central differences on the grid.
    Double integrals are reduced to single ones by swapping the order of
    integration and evaluated with the trapezoid rule.
    """
    values, params = cert.values, cert.params
    alpha = params.get("alpha", 0.0)
    singles, doubles, history = functional_terms(cert.family, params)
    times = np.asarray(result.t, dtype=float)
    z = np.asarray(result.z, dtype=float)
    zdot = getattr(result, "zdot", None)
    zdot = _derivative(times, z) if zdot is None else np.asarray(zdot, dtype=float)
    if t - history < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise ValueError(
            f"V at t={t} needs the trajectory on [{t - history}, {t}], have [{times[0]}, {times[-1]}]"
        )
    zt = np.array([np.interp(t, times, z[:, k]) for k in range(z.shape[1])])
    V = float(zt @ values["P"] @ zt)
    for name, lo, hi in singles:
        if hi <= lo:
            continue
        s, v = _window(times, z, t - hi, t - lo)
        V += float(trapezoid(np.exp(2 * alpha * (s - t)) * _form(v, values[name]), s))
    for name, c, lo, hi in doubles:
        if hi <= lo or c == 0:
            continue
        s, v = _window(times, zdot, t - hi, t)
        weight = np.minimum(s - t + hi, hi - lo)
        V += float(c * trapezoid(weight * np.exp(2 * alpha * (s - t)) * _form(v, values[name]), s))
    return V
