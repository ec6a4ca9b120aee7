"""Inverted pendulum on a cart and the SCS comparison table."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import bisect_h, simulate_point
from .model import DelayProfile, Gain, LtiPlant
from .simulator import SimConfig

X0 = np.array([0.98, 0.0, 0.2, 0.0])
ALPHA = 0.01
HORIZON = 20.0


@dataclass(frozen=True)
class PendulumSpec:
    M: float = 10.0  # cart mass, kg
    m: float = 1.0  # bob mass, kg
    l: float = 3.0  # arm length, m
    g: float = 10.0  # gravity, m/s^2

    def __post_init__(self):
        for name in ("M", "m", "l", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


DEFAULT_GAIN = [2.0, 12.0, 378.0, 210.0]


def pendulum(spec: PendulumSpec = PendulumSpec()) -> tuple[LtiPlant, Gain]:
    """Linearized cart-pendulum: state (cart pos, cart vel, angle, angular vel)."""
    A = np.zeros((4, 4))
    A[0, 1] = 1.0
    A[1, 2] = -spec.m * spec.g / spec.M
    A[2, 3] = 1.0
    A[3, 2] = spec.g / spec.l
    B = np.array([[0.0], [1.0 / spec.M], [0.0], [-1.0 / (spec.M * spec.l)]])
    return LtiPlant(A, B), Gain(np.array([DEFAULT_GAIN]))


# The two delay columns of the table; both share r1 = 0.2 and mu_max = 0.01.
COLUMNS = {
    "r0=0.2": dict(r0=0.2, eta_max=0.01),
    "r0=0": dict(r0=0.0, eta_max=0.0),
}


@dataclass(frozen=True)
class Cell:
    strategy: str
    column: str
    family: str
    sigma: float
    h_ref: float
    scs_ref: int
    deterministic: bool = False

    def profile(self, h: float) -> DelayProfile:
        c = COLUMNS[self.column]
        return DelayProfile(c["r0"], 0.2, c["eta_max"], 0.01, h)


# The r0=0 sampled cells keep mu_max = 0.01, so they are certified with the
# general sampled family rather than the mu_max = 0 simplification.
CELLS = (
    Cell("sampled predictor", "r0=0.2", "lemma1", 0.0, 0.0369, 543, True),
    Cell("sampled event-triggered", "r0=0.2", "lemma1", 0.01, 0.0315, 116),
    Cell("sampled predictor", "r0=0", "lemma1", 0.0, 0.0646, 310, True),
    Cell("sampled event-triggered", "r0=0", "lemma1", 0.07, 0.046, 56),
    Cell("continuous predictor", "r0=0", "lemma2", 0.0, 0.105, 191, True),
    Cell("switching event-triggered", "r0=0", "lemma2", 0.13, 0.105, 48),
)
NOT_APPLICABLE = (("continuous predictor", "r0=0.2"), ("switching event-triggered", "r0=0.2"))


@dataclass
class CellResult:
    cell: Cell
    h_bisect: float | None = None
    scs: list[int] = field(default_factory=list)
    periodic_scs: list[int] = field(default_factory=list)
    final_norms: list[float] = field(default_factory=list)
    note: str = ""

    @property
    def scs_mean(self) -> float | None:
        return float(np.mean(self.scs)) if self.scs else None


@dataclass
class Table1Report:
    seed_base: int
    runs_per_cell: int
    results: list[CellResult]
    not_applicable: tuple = NOT_APPLICABLE

    def find(self, strategy: str, column: str) -> CellResult:
        for r in self.results:
            if r.cell.strategy == strategy and r.cell.column == column:
                return r
        raise KeyError((strategy, column))

    def rows(self):
        out = []
        for r in self.results:
            c = r.cell
            out.append(dict(
                strategy=c.strategy, column=c.column, family=c.family, sigma=c.sigma,
                h_ref=c.h_ref, h_bisect=r.h_bisect, runs=len(r.scs),
                scs_mean=r.scs_mean, scs_min=min(r.scs, default=None), scs_max=max(r.scs, default=None),
                scs_ref=c.scs_ref, note=r.note,
            ))
        for strategy, column in self.not_applicable:
            out.append(dict(strategy=strategy, column=column, family="", sigma=None, h_ref=None,
                            h_bisect=None, runs=0, scs_mean=None, scs_min=None, scs_max=None,
                            scs_ref=None, note="not applicable"))
        return out


def run_cell(cell: Cell, plant, gain, seeds, bisect: bool = True, horizon: float = HORIZON,
             backend=None) -> CellResult:
    res = CellResult(cell)
    if bisect:
        b = bisect_h(plant, gain, cell.profile(1.0), ALPHA, cell.sigma, cell.family, backend=backend)
        res.h_bisect = b.h
        if b.h is None:
            res.note = "infeasible"
    for seed in seeds:
        cfg = SimConfig(horizon, X0, seed)
        out = simulate_point(plant, gain, cell.profile(cell.h_ref), cell.family, cell.sigma, cell.h_ref, cfg)
        res.scs.append(out.scs)
        res.periodic_scs.append(out.measurements_sent)
        res.final_norms.append(out.final_norm)
    return res


def table1(seed_base: int = 0, runs_per_cell: int = 20, bisect: bool = True,
           horizon: float = HORIZON, cells=CELLS, backend=None) -> Table1Report:
    """Simulate every applicable (strategy, column) cell at the reference h.

    Stochastic cells use seeds ``seed_base + 1 .. seed_base + runs_per_cell``;
    deterministic cells (no triggering) run once. With ``bisect`` the
    certified maximum h is computed alongside.
    """
    plant, gain = pendulum()
    seeds = [seed_base + i for i in range(1, runs_per_cell + 1)]
    results = []
    for cell in cells:
        try:
            results.append(run_cell(cell, plant, gain, seeds[:1] if cell.deterministic else seeds,
                                    bisect, horizon, backend))
        except Exception as exc:  # report the failure and keep going
            results.append(CellResult(cell, note=f"error: {exc}"))
    return Table1Report(seed_base, runs_per_cell, results)


def _cell_text(v, fmt):
    return "-" if v is None else format(v, fmt)


def format_report(report: Table1Report) -> str:
    header = ["strategy", "column", "family", "sigma", "h_ref", "h_bisect", "runs",
              "scs_mean", "scs_min", "scs_max", "scs_ref", "note"]
    fmts = {"sigma": "g", "h_ref": "g", "h_bisect": ".4f", "scs_mean": ".1f", "scs_min": "d",
            "scs_max": "d", "scs_ref": "d", "runs": "d"}
    lines = [[_cell_text(r[k], fmts[k]) if k in fmts else str(r[k]) for k in header]
             for r in report.rows()]
    widths = [max(len(h), *(len(ln[i]) for ln in lines)) for i, h in enumerate(header)]
    out = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    out += ["  ".join(c.ljust(w) for c, w in zip(ln, widths)).rstrip() for ln in lines]
    return "\n".join(out)


def write_report_csv(report: Table1Report, path) -> Path:
    path = Path(path)
    rows = report.rows()
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: "" if v is None else v for k, v in r.items()})
    return path
