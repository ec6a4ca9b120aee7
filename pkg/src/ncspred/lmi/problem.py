"""LMI problem container shared by the builders, backends and exporters."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .affine import Affine, BlockMatrix, Var

SENSES = ("nsd", "psd")


@dataclass
class LmiConstraint:
    """``matrix <= 0`` (``nsd``) or ``matrix >= 0`` (``psd``) in the semidefinite order."""

    name: str
    matrix: BlockMatrix
    sense: str = "nsd"

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ValueError(f"unknown sense {self.sense!r}")

    def violation(self, values) -> float:
        """Largest eigenvalue of the wrong sign (<= 0 means satisfied)."""
        M = self.matrix.value(values)
        lam = np.linalg.eigvalsh(M)
        return float(lam[-1]) if self.sense == "nsd" else float(-lam[0])


@dataclass
class LmiProblem:
    """Named variables with cone tags plus a list of block LMIs.

    ``homogeneous`` problems have no constant terms, so any positive multiple
    of a solution is again a solution; backends may then normalize strict
    cones to ``X >= I``.
    """

    family: str
    variables: dict[str, Var]
    constraints: list[LmiConstraint]
    params: dict[str, float] = field(default_factory=dict)
    homogeneous: bool = True
    design: dict = field(default_factory=dict)

    def __post_init__(self):
        for c in self.constraints:
            for name, var in c.matrix.variables().items():
                if name not in self.variables:
                    raise ValueError(f"constraint {c.name} uses undeclared variable {name}")
                if self.variables[name] != var:
                    raise ValueError(f"variable {name} declared twice with different specs")

    def constraint(self, name: str) -> LmiConstraint:
        for c in self.constraints:
            if c.name == name:
                return c
        raise KeyError(name)

    def cone_vars(self, cone: str) -> list[Var]:
        return [v for v in self.variables.values() if v.cone == cone]

    @property
    def n_scalars(self) -> int:
        return sum(v.size for v in self.variables.values())

    def evaluate(self, values) -> dict[str, np.ndarray]:
        return {c.name: c.matrix.value(values) for c in self.constraints}

    def digest(self) -> str:
        """SHA-256 over every number that defines the problem (bit-level identity)."""
        h = hashlib.sha256()
        h.update(self.family.encode())
        for k in sorted(self.params):
            h.update(k.encode())
            h.update(np.float64(self.params[k]).tobytes())
        for name in sorted(self.variables):
            v = self.variables[name]
            h.update(f"{v.name}:{v.rows}x{v.cols}:{v.symmetric}:{v.cone}".encode())
        for c in self.constraints:
            h.update(f"{c.name}:{c.sense}:{c.matrix.sizes}".encode())
            for key in sorted(c.matrix.blocks):
                b: Affine = c.matrix.blocks[key]
                h.update(repr(key).encode())
                h.update(np.ascontiguousarray(b.const).tobytes())
                for t in b.terms:
                    h.update(f"{t.var.name}:{t.transposed}".encode())
                    h.update(np.ascontiguousarray(t.left).tobytes())
                    h.update(np.ascontiguousarray(t.right).tobytes())
        return h.hexdigest()
