"""Matrix-exponential kernels: e^{At}, ZOH discretization and input integrals.

All input integrals go through one augmented block exponential

    expm([[A, B], [0, 0]] * d) = [[e^{Ad}, int_0^d e^{As} B ds], [0, I]]

so no inverse of ``A`` is ever needed (the pendulum ``A`` is singular).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .model import LtiPlant


@dataclass(frozen=True)
class ZohPair:
    Ad: np.ndarray
    Bd: np.ndarray
    delta: float


def expm(A, t: float = 1.0) -> np.ndarray:
    """Return ``e^{A t}`` (scaling-and-squaring Pade, via scipy)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {A.shape}")
    if t == 0:
        return np.eye(A.shape[0])
    return la.expm(A * t)


def _augmented(A: np.ndarray, B: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray]:
    n, m = B.shape
    if delta == 0:
        return np.eye(n), np.zeros((n, m))
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = la.expm(M * delta)
    return E[:n, :n], E[:n, n:]


def zoh_discretize(plant: LtiPlant, delta: float) -> ZohPair:
    """Exact one-step map for a constant input held over ``delta`` seconds."""
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    Ad, Bd = _augmented(plant.A, plant.B, float(delta))
    return ZohPair(Ad, Bd, float(delta))


def input_integral(plant: LtiPlant, a: float, b: float, c: float) -> np.ndarray:
    """Return ``int_a^b e^{A(c - theta)} B dtheta`` (n x m)."""
    if a > b:
        raise ValueError(f"empty or reversed interval: a={a} > b={b}")
    # int_a^b e^{A(c-th)} B dth = e^{A(c-b)} int_0^{b-a} e^{As} B ds
    _, gamma = _augmented(plant.A, plant.B, b - a)
    if c == b:
        return gamma
    return expm(plant.A, c - b) @ gamma


def riemann_oracle(plant: LtiPlant, a: float, b: float, c: float, panels: int) -> np.ndarray:
    """Midpoint-rule approximation of ``input_integral``; independent check only.

    The exponential at each midpoint is built from repeated products of a
    single-step exponential, not from the augmented block kernel.
    """
    if panels < 1:
        raise ValueError("panels must be >= 1")
    A, B = plant.A, plant.B
    width = (b - a) / panels
    if width == 0:
        return np.zeros_like(B)
    # midpoints theta_j = a + (j + 1/2) w, weights e^{A(c - theta_j)} = first @ step^j
    step = la.expm(-A * width)
    first = la.expm(A * (c - a - 0.5 * width))
    return width * (first @ _power_sum(step, panels) @ B)


def _power_sum(S: np.ndarray, count: int) -> np.ndarray:
    """Return sum_{j < count} S^j using sqrt(count)-sized blocks."""
    n = S.shape[0]
    k = max(1, int(np.ceil(np.sqrt(count))))

    def partial(r):
        acc, P = np.zeros((n, n)), np.eye(n)
        for _ in range(r):
            acc += P
            P = P @ S
        return acc, P

    inner, big = partial(k)
    q, r = divmod(count, k)
    total, Bq = np.zeros((n, n)), np.eye(n)
    for _ in range(q):
        total += Bq @ inner
        Bq = Bq @ big
    return total + Bq @ partial(r)[0]
