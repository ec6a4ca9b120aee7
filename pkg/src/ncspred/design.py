"""Gain synthesis, maximum-sampling-period bisection and sigma sweeps."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lmi.families import FAMILIES, DesignContext, build_family
from .lmi.solve import Certificate, check_feasible
from .model import DelayProfile, Gain, LtiPlant, Scenario, TriggerParams
from .simulator import SimConfig, run_continuous, run_sampled

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


def default_eps1_grid() -> np.ndarray:
    return np.logspace(np.log10(0.05), np.log10(20.0), 20)


def default_eps2_grid() -> np.ndarray:
    return np.logspace(-3, 3, 20)


@dataclass
class DesignParams:
    """Tuning grids and fixed problem parameters for gain synthesis."""

    family: str
    profile: DelayProfile
    alpha: float = 0.01
    sigma: float = 0.0
    eps1_grid: np.ndarray = field(default_factory=default_eps1_grid)
    eps2_grid: np.ndarray = field(default_factory=default_eps2_grid)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        self.eps1_grid = np.atleast_1d(np.asarray(self.eps1_grid, dtype=float))
        self.eps2_grid = np.atleast_1d(np.asarray(self.eps2_grid, dtype=float))
        for name in ("eps1_grid", "eps2_grid"):
            g = getattr(self, name)
            if g.size == 0 or not np.all(g > 0):
                raise ValueError(f"{name} must be nonempty and strictly positive")


@dataclass
class Synthesis:
    gain: Gain
    eps1: float
    eps2: float
    design_certificate: Certificate
    analysis_certificate: Certificate | None


def synthesize(plant: LtiPlant, design: DesignParams, backend=None, recheck: bool = True):
    """Search the (eps1, eps2) grid; return the first verified ``Synthesis`` or None.

    With ``recheck`` a candidate gain is kept only if the untransformed
    analysis problem at the same parameters is feasible as well.
    """
    for e1 in design.eps1_grid:
        for e2 in design.eps2_grid:
            ctx = DesignContext(plant, e1, e2)
            problem = build_family(design.family, plant, None, design.profile, design.alpha,
                                   design.sigma, ctx=ctx)
            cert = check_feasible(problem, backend)
            if not isinstance(cert, Certificate):
                continue
            Q = cert.values["Q"]
            cond = np.linalg.cond(Q)
            if not cond < COND_LIMIT:
                warnings.warn(f"skipping eps1={e1:.3g}, eps2={e2:.3g}: cond(Q) = {cond:.2e}")
                continue
            gain = Gain(np.linalg.solve(Q.T, cert.values["Y"].T).T)
            analysis = None
            if recheck:
                analysis = check_feasible(
                    build_family(design.family, plant, gain, design.profile, design.alpha, design.sigma),
                    backend,
                )
                if not isinstance(analysis, Certificate):
                    log.info("eps1=%.3g eps2=%.3g: gain failed the analysis re-check", e1, e2)
                    continue
            return Synthesis(gain, float(e1), float(e2), cert, analysis)
    return None


def synthesize_gain(plant: LtiPlant, design: DesignParams, backend=None) -> Gain | None:
    """``K = Y Q^{-1}`` from the first verified grid point, or None."""
    out = synthesize(plant, design, backend)
    return None if out is None else out.gain


def h_upper_limit(family: str, profile: DelayProfile) -> float:
    """Largest h the family's builder accepts (sampled families need h + eta <= r0 + r1)."""
    if family in ("lemma1", "prop1"):
        return profile.r0 + profile.r1 - profile.eta_max
    return np.inf


@dataclass
class Bisection:
    h: float | None
    certificate: Certificate | None
    path: list[tuple[float, bool]]


def bisect_h(plant, gain, profile: DelayProfile, alpha: float, sigma: float, family: str,
             h_lo: float = 1e-4, h_hi: float = 1.0, tol: float = 1e-4, backend=None) -> Bisection:
    """Largest feasible h (to ``tol``) with the full search path.

    ``Unknown`` solver outcomes count as infeasible. ``h_hi`` is clipped to
    the family's admissible range.
    """
    if not h_lo < h_hi:
        raise ValueError("need h_lo < h_hi")
    h_hi = min(h_hi, h_upper_limit(family, profile))
    path = []

    def test(h):
        cert = check_feasible(build_family(family, plant, gain, profile.with_h(h), alpha, sigma), backend)
        ok = isinstance(cert, Certificate)
        path.append((float(h), ok))
        return cert if ok else None

    best = test(h_lo) if h_lo <= h_hi else None
    if best is None:
        return Bisection(None, None, path)
    top = test(h_hi)
    if top is not None:
        return Bisection(float(h_hi), top, path)
    lo, hi = h_lo, h_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        cert = test(mid)
        if cert is not None:
            lo, best = mid, cert
        else:
            hi = mid
    return Bisection(float(lo), best, path)


def max_h_bisection(plant, gain, profile: DelayProfile, alpha: float, sigma: float, family: str,
                    h_lo: float = 1e-4, h_hi: float = 1.0, tol: float = 1e-4, backend=None) -> float | None:
    """Largest certified sampling period, or None if ``h_lo`` is already infeasible."""
    return bisect_h(plant, gain, profile, alpha, sigma, family, h_lo, h_hi, tol, backend).h


@dataclass
class SweepRow:
    sigma: float
    h_max: float | None
    scs_runs: list[int] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.h_max is not None

    @property
    def scs_mean(self) -> float | None:
        return float(np.mean(self.scs_runs)) if self.scs_runs else None


def simulate_point(plant, gain, profile: DelayProfile, family: str, sigma: float, h: float,
                   config: SimConfig):
    """One closed-loop run at ``(sigma, h)`` in the scenario the family certifies."""
    m = plant.m
    if family in ("lemma1", "prop1"):
        scenario = Scenario.SAMPLED_EVENT_TRIGGERED if sigma > 0 else Scenario.SAMPLED_PREDICTOR
        trig = TriggerParams(np.eye(m), sigma, h)
        return run_sampled(plant, gain, profile.with_h(h), trig, scenario, config, compute_z=False)
    scenario = Scenario.SWITCHING_EVENT_TRIGGERED if sigma > 0 else Scenario.CONTINUOUS_PREDICTOR
    trig = TriggerParams(np.eye(m), sigma, h)
    return run_continuous(plant, gain, profile.r1, profile.mu_max, trig, scenario, config)


def sweep_sigma(plant, gain, profile: DelayProfile, family: str, sigma_grid, config: SimConfig,
                runs_per_point: int = 20, alpha: float = 0.01, seeds=None, **bisect_kw):
    """Bisect ``h_max`` for each sigma, then simulate at ``(sigma, h_max)``.

    Returns ``(rows, best)`` where ``best`` is the feasible row with the
    smallest mean SCS (None if no sigma is feasible). ``seeds`` defaults to
    ``1..runs_per_point``.
    """
    seeds = list(range(1, runs_per_point + 1)) if seeds is None else list(seeds)
    rows = []
    for sigma in sigma_grid:
        sigma = float(sigma)
        h = max_h_bisection(plant, gain, profile, alpha, sigma, family, **bisect_kw)
        row = SweepRow(sigma, h)
        if h is not None:
            for seed in seeds:
                cfg = SimConfig(config.horizon, config.x0, seed, config.log_step)
                row.scs_runs.append(simulate_point(plant, gain, profile, family, sigma, h, cfg).scs)
        log.info("sigma=%.3f h_max=%s scs_mean=%s", sigma, h, row.scs_mean)
        rows.append(row)
    feasible = [r for r in rows if r.feasible and r.scs_runs]
    best = min(feasible, key=lambda r: r.scs_mean) if feasible else None
    return rows, best


def write_sweep_csv(rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sigma", "h_max", "scs_mean", "scs_min", "scs_max", "feasible"])
        for r in rows:
            runs = r.scs_runs
            w.writerow([
                repr(r.sigma),
                "" if r.h_max is None else repr(r.h_max),
                "" if not runs else repr(r.scs_mean),
                "" if not runs else min(runs),
                "" if not runs else max(runs),
                int(r.feasible),
            ])
    return path
