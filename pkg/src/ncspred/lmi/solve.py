"""Feasibility checking with an independent re-verification of solver output."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .problem import LmiProblem

STRICTNESS_EPS = 1e-6
RECHECK_TOL = 1e-7


@dataclass
class SolveOutcome:
    status: str  # "feasible" | "infeasible" | "unknown"
    values: dict[str, np.ndarray] | None = None
    info: str = ""


class SolverContract(Protocol):
    """Anything that can decide feasibility of an ``LmiProblem``.

    ``strict`` maps each strict-cone variable name to the lower bound ``c``
    in ``X >= c I``. A backend may also accept ``min_norm=True`` (advertised
    by a true ``supports_min_norm`` attribute): return the feasible point of
    smallest largest-variable spectral norm instead of an arbitrary one.
    """

    def solve(self, problem: LmiProblem, strict: dict[str, float]) -> SolveOutcome: ...


class CvxpyBackend:
    """Interior-point backend through cvxpy (Clarabel by default)."""

    supports_min_norm = True

    def __init__(self, solver: str = "CLARABEL", **options):
        self.solver = solver
        self.options = options

    def solve(self, problem: LmiProblem, strict: dict[str, float], min_norm: bool = False) -> SolveOutcome:
        import cvxpy as cp

        cvars = {}
        for name, v in problem.variables.items():
            cvars[name] = cp.Variable(v.shape, symmetric=v.symmetric, name=name)
        cons = []
        for name, v in problem.variables.items():
            if v.cone == "psd":
                cons.append(cvars[name] >> 0)
            elif v.cone == "pd":
                cons.append(cvars[name] >> strict.get(name, 0.0) * np.eye(v.rows))
        for c in problem.constraints:
            M = c.matrix.to_cvxpy(cvars)
            cons.append(M << 0 if c.sense == "nsd" else M >> 0)
        objective = 0
        if min_norm:
            bound = cp.Variable()
            cons += [cp.norm(x, 2) <= bound for x in cvars.values()]
            objective = bound
        prob = cp.Problem(cp.Minimize(objective), cons)
        try:
            with warnings.catch_warnings():
                # inaccurate solutions are reported through the status below
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(solver=self.solver, **self.options)
        except cp.error.SolverError as exc:
            return SolveOutcome("unknown", info=f"solver error: {exc}")
        status = prob.status
        if status == cp.OPTIMAL or (min_norm and status == cp.OPTIMAL_INACCURATE):
            values = {k: np.array(x.value, dtype=float) for k, x in cvars.items()}
            return SolveOutcome("feasible", values, status)
        if status == cp.INFEASIBLE:
            return SolveOutcome("infeasible", info=status)
        return SolveOutcome("unknown", info=str(status))


@dataclass
class Certificate:
    """Verified variable values for one family instance."""

    family: str
    values: dict[str, np.ndarray]
    params: dict[str, float]
    residuals: dict[str, float]
    margins: dict[str, float]
    scale: float = 1.0
    design: dict = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        data = {
            "family": self.family,
            "params": self.params,
            "residuals": self.residuals,
            "margins": self.margins,
            "scale": self.scale,
            "design": self.design,
            "values": {k: v.tolist() for k, v in self.values.items()},
        }
        path.write_text(json.dumps(data, indent=1))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Certificate":
        data = json.loads(Path(path).read_text())
        values = {k: np.array(v, dtype=float) for k, v in data.pop("values").items()}
        return cls(values=values, **data)


@dataclass
class Infeasible:
    family: str
    info: str = ""

    def __bool__(self):
        return False


@dataclass
class Unknown:
    family: str
    info: str = ""

    def __bool__(self):
        return False


def verify(problem: LmiProblem, values, strictness_eps=STRICTNESS_EPS, tol=RECHECK_TOL):
    """Independent eigenvalue check. Returns ``(ok, residuals, margins, reason)``.

    Residuals are the wrong-sign eigenvalue extremes of every constraint and
    cone; margins are the smallest eigenvalues of the strict-cone variables.
    """
    residuals, margins = {}, {}
    for c in problem.constraints:
        M = c.matrix.value(values)
        if not np.array_equal(M, M.T):
            return False, residuals, margins, f"{c.name} is not exactly symmetric"
        residuals[c.name] = c.violation(values)
    for name, v in problem.variables.items():
        if v.cone == "free":
            continue
        X = np.asarray(values[name])
        lam = float(np.linalg.eigvalsh(0.5 * (X + X.T))[0])
        if v.cone == "pd":
            margins[name] = lam
        residuals[f"{name}>=0"] = -lam
    for name, r in residuals.items():
        if not r <= tol:
            return False, residuals, margins, f"{name} violated by {r:.3e} > {tol:.1e}"
    for name, lam in margins.items():
        if not lam >= strictness_eps:
            return False, residuals, margins, f"{name} margin {lam:.3e} below {strictness_eps:.1e}"
    return True, residuals, margins, ""


def check_feasible(
    problem: LmiProblem,
    backend: SolverContract | None = None,
    strictness_eps: float = STRICTNESS_EPS,
    tol: float = RECHECK_TOL,
):
    """Decide feasibility; returns ``Certificate``, ``Infeasible`` or ``Unknown``.

    Homogeneous problems are solved with the strict cones normalized to
    ``X >= I`` and the solution is rescaled to unit max-entry before the
    re-check, so ``tol`` and ``strictness_eps`` act relative to the
    certificate's size. Other problems use ``X >= strictness_eps I`` and
    absolute tolerances.

    A pure feasibility solve can land on a badly scaled point (one variable
    orders of magnitude above the strict ones). When the re-check fails or
    the solver is unsure, backends that support it are asked once more for
    the minimum-norm feasible point. Its answer replaces the first one only if
    it is a verified certificate or a clean infeasibility report.
    """
    if not problem.constraints:
        raise ValueError("problem has no constraints")
    backend = backend or CvxpyBackend()
    bound = 1.0 if problem.homogeneous else strictness_eps
    strict = {v.name: bound for v in problem.cone_vars("pd")}
    out = _attempt(backend, problem, strict, strictness_eps, tol)
    if not isinstance(out, (Certificate, Infeasible)) and getattr(backend, "supports_min_norm", False):
        retry = _attempt(backend, problem, strict, strictness_eps, tol, min_norm=True)
        if isinstance(retry, (Certificate, Infeasible)):
            return retry
    return out


def _attempt(backend, problem, strict, strictness_eps, tol, **kw):
    try:
        out = backend.solve(problem, strict, **kw)
    except Exception as exc:  # a backend bug must not look like infeasibility
        return Unknown(problem.family, f"backend failure: {exc!r}")
    if out.status == "infeasible":
        return Infeasible(problem.family, out.info)
    if out.status != "feasible":
        return Unknown(problem.family, out.info)
    values = out.values
    scale = 1.0
    if problem.homogeneous and values:
        scale = max(float(np.abs(v).max()) for v in values.values()) or 1.0
        values = {k: v / scale for k, v in values.items()}
    values = {k: 0.5 * (v + v.T) if problem.variables[k].symmetric else v for k, v in values.items()}
    ok, residuals, margins, reason = verify(problem, values, strictness_eps, tol)
    if not ok:
        return Unknown(problem.family, f"solver reported {out.info} but re-check failed: {reason}")
    return Certificate(problem.family, values, dict(problem.params), residuals, margins, scale,
                       dict(problem.design))


def is_feasible(result) -> bool:
    return isinstance(result, Certificate)

