"""Core value types for networked control with transport delays.

Every quantity that parameterizes a problem instance lives here: the plant
matrices, the feedback gain, the delay profile of the two network links, the
event-trigger parameters and the realized event timeline.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

PSD_RTOL = 1e-12


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if name == "K" else arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LtiPlant:
    """Linear plant ``xdot = A x + B u``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B must have {A.shape[0]} rows, got {B.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class Gain:
    """State-feedback gain K (m x n)."""

    K: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", _as_matrix(self.K, "K"))

    def check(self, plant: LtiPlant) -> "Gain":
        if self.K.shape != (plant.m, plant.n):
            raise ValueError(f"K must be {plant.m}x{plant.n}, got {self.K.shape}")
        return self


@dataclass(frozen=True)
class DelayProfile:
    """Known transport delays r0, r1, uncertainty bounds and max sampling interval.

    r0, eta_max describe the sensor-to-controller link, r1, mu_max the
    controller-to-actuator link. All values are in seconds.
    """

    r0: float
    r1: float
    eta_max: float
    mu_max: float
    h: float

    def __post_init__(self):
        for name in ("r0", "r1", "eta_max", "mu_max", "h"):
            val = float(getattr(self, name))
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {val}")
            object.__setattr__(self, name, val)
        if self.h <= 0:
            raise ValueError(f"h must be positive, got {self.h}")

    def with_h(self, h: float) -> "DelayProfile":
        return DelayProfile(self.r0, self.r1, self.eta_max, self.mu_max, h)

    @property
    def tau_bar(self) -> float:
        return self.h + self.eta_max

    @property
    def tau_M(self) -> float:
        return self.r0 + self.r1 + self.h + self.eta_max + self.mu_max

    @property
    def tau_tilde(self) -> float:
        return self.h + self.mu_max


def derived_bounds(profile: DelayProfile) -> tuple[float, float, float]:
    """Return ``(tau_bar, tau_M, tau_tilde)`` for a delay profile."""
    return profile.tau_bar, profile.tau_M, profile.tau_tilde


def validate_assumption(profile: DelayProfile) -> bool:
    """True iff ``h + eta_max <= r0 + r1``, required by the sampled certificate."""
    return profile.h + profile.eta_max <= profile.r0 + profile.r1


@dataclass(frozen=True)
class TriggerParams:
    """Event-trigger weight ``omega`` (m x m, PSD), threshold ``sigma`` and waiting time.

    ``sigma == 0`` with a positive definite ``omega`` means every new control
    value is sent.
    """

    omega: np.ndarray
    sigma: float = 0.0
    wait: float = 1.0

    def __post_init__(self):
        omega = np.atleast_2d(np.array(self.omega, dtype=float))
        if omega.shape[0] != omega.shape[1]:
            raise ValueError(f"omega must be square, got {omega.shape}")
        if not np.allclose(omega, omega.T, rtol=0, atol=1e-12 * max(1.0, np.abs(omega).max())):
            raise ValueError("omega must be symmetric")
        omega = 0.5 * (omega + omega.T)
        lam = np.linalg.eigvalsh(omega)
        if lam.min() < -PSD_RTOL * max(np.abs(lam).max(), 0.0):
            raise ValueError(f"omega must be positive semidefinite, min eigenvalue {lam.min()}")
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        sigma = float(self.sigma)
        if not 0 <= sigma < 1:
            raise ValueError(f"sigma must lie in [0, 1), got {sigma}")
        object.__setattr__(self, "sigma", sigma)
        if not float(self.wait) > 0:
            raise ValueError(f"wait must be positive, got {self.wait}")
        object.__setattr__(self, "wait", float(self.wait))

    @property
    def omega_positive_definite(self) -> bool:
        return bool(np.linalg.eigvalsh(self.omega).min() > 0)

    @classmethod
    def periodic(cls, m: int, wait: float = 1.0) -> "TriggerParams":
        return cls(np.eye(m), 0.0, wait)


class Scenario(str, enum.Enum):
    SAMPLED_PREDICTOR = "SampledPredictor"
    SAMPLED_EVENT_TRIGGERED = "SampledEventTriggered"
    CONTINUOUS_PREDICTOR = "ContinuousPredictor"
    SWITCHING_EVENT_TRIGGERED = "SwitchingEventTriggered"

    @property
    def continuous(self) -> bool:
        return self in (Scenario.CONTINUOUS_PREDICTOR, Scenario.SWITCHING_EVENT_TRIGGERED)

    def check(self, profile: DelayProfile) -> None:
        if self.continuous and (profile.r0 != 0 or profile.eta_max != 0):
            raise ValueError(
                f"{self.value} has no sensor-to-controller network: requires r0 = eta_max = 0"
            )


@dataclass
class EventTimeline:
    """Realized sampling, controller-update and actuator-update instants."""

    s: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    xi: np.ndarray
    t: np.ndarray

    def __len__(self) -> int:
        return len(self.s)

    def check(self, profile: DelayProfile, atol: float = 1e-12) -> None:
        """Raise AssertionError if any ordering or bound constraint fails."""
        s, xi, t = self.s, self.xi, self.t
        if len(s) > 1:
            assert np.all(np.diff(s) > 0), "sampling instants must increase"
            assert np.all(np.diff(s) <= profile.h + atol), "sampling gap exceeds h"
            assert np.all(np.diff(xi) >= 0), "controller updates must be nondecreasing"
            assert np.all(np.diff(t) >= 0), "actuator updates must be nondecreasing"
        assert np.all(self.eta >= 0) and np.all(self.eta <= profile.eta_max + atol)
        assert np.all(self.mu >= 0) and np.all(self.mu <= profile.mu_max + atol)
        assert np.all(xi >= s + profile.r0 - atol)
        assert np.all(t >= xi + profile.r1 - atol)


@dataclass
class Config:
    """Parsed run configuration (see ``load_config``)."""

    plant: LtiPlant
    gain: Gain | None
    delays: DelayProfile
    trigger: TriggerParams
    scenario: Scenario
    sim: dict[str, Any] = field(default_factory=dict)
    certify: dict[str, Any] = field(default_factory=dict)


def config_from_dict(data: dict[str, Any]) -> Config:
    plant = LtiPlant(data["plant"]["A"], data["plant"]["B"])
    gain = None
    if "gain" in data and "K" in data["gain"]:
        gain = Gain(data["gain"]["K"]).check(plant)
    d = data["delays"]
    delays = DelayProfile(
        r0=d.get("r0", 0.0),
        r1=d.get("r1", 0.0),
        eta_max=d.get("eta_max", 0.0),
        mu_max=d.get("mu_max", 0.0),
        h=d["h"],
    )
    trig = data.get("trigger", {})
    trigger = TriggerParams(
        omega=trig.get("omega", np.eye(plant.m)),
        sigma=trig.get("sigma", 0.0),
        wait=trig.get("wait", delays.h),
    )
    scenario = Scenario(data.get("scenario", Scenario.SAMPLED_PREDICTOR.value))
    return Config(
        plant=plant,
        gain=gain,
        delays=delays,
        trigger=trigger,
        scenario=scenario,
        sim=dict(data.get("sim", {})),
        certify=dict(data.get("certify", {})),
    )


def load_config(path: str | Path) -> Config:
    """Load a TOML run configuration.

    Recognized keys: ``plant.A``, ``plant.B``, ``gain.K``,
    ``delays.{r0,r1,eta_max,mu_max,h}``, ``trigger.{omega,sigma,wait}``,
    ``scenario``, ``sim.{horizon,x0,seed}``, ``certify.{alpha,method}``.
    """
    with open(path, "rb") as fh:
        return config_from_dict(tomllib.load(fh))
