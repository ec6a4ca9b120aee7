"""Small affine matrix-expression layer for LMI construction.

An ``Affine`` is ``C + sum_k L_k X_k R_k`` (or with ``X_k^T``) where ``C``,
``L_k``, ``R_k`` are constant arrays and ``X_k`` are named matrix variables.
Keeping the coefficients explicit lets the same expression be evaluated
numerically, handed to cvxpy, or scalarized for SDPA export.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

CONES = ("free", "psd", "pd")


@dataclass(frozen=True)
class Var:
    """Matrix decision variable. ``symmetric`` variables may carry a cone tag."""

    name: str
    rows: int
    cols: int
    symmetric: bool = False
    cone: str = "free"

    def __post_init__(self):
        if self.cone not in CONES:
            raise ValueError(f"unknown cone {self.cone!r}")
        if self.symmetric and self.rows != self.cols:
            raise ValueError("symmetric variables must be square")
        if self.cone != "free" and not self.symmetric:
            raise ValueError("only symmetric variables can carry a cone")

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def basis(self):
        """Yield ``(label, E)`` for the scalar coordinates of this variable.

        Symmetric variables use the upper triangle with ``E = e_a e_b^T + e_b e_a^T``.
        """
        if self.symmetric:
            for a in range(self.rows):
                for b in range(a, self.cols):
                    E = np.zeros(self.shape)
                    E[a, b] = 1.0
                    E[b, a] = 1.0
                    yield (a, b), E
        else:
            for a in range(self.rows):
                for b in range(self.cols):
                    E = np.zeros(self.shape)
                    E[a, b] = 1.0
                    yield (a, b), E

    @property
    def size(self) -> int:
        return self.rows * (self.rows + 1) // 2 if self.symmetric else self.rows * self.cols


@dataclass(frozen=True)
class Term:
    left: np.ndarray
    var: Var
    right: np.ndarray
    transposed: bool = False

    @property
    def shape(self):
        return self.left.shape[0], self.right.shape[1]


def _const(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


class Affine:
    """Affine matrix expression in named variables."""

    __array_ufunc__ = None  # make ``ndarray @ Affine`` defer to __rmatmul__

    def __init__(self, shape, const=None, terms=()):
        self.shape = tuple(shape)
        self.const = np.zeros(self.shape) if const is None else _const(const)
        if self.const.shape != self.shape:
            raise ValueError(f"constant of shape {self.const.shape} in a {self.shape} expression")
        self.terms = list(terms)
        for t in self.terms:
            if t.shape != self.shape:
                raise ValueError(f"term of shape {t.shape} in a {self.shape} expression")

    @classmethod
    def of(cls, var: Var) -> "Affine":
        return cls(var.shape, None, [Term(np.eye(var.rows), var, np.eye(var.cols))])

    @classmethod
    def constant(cls, value) -> "Affine":
        value = _const(value)
        return cls(value.shape, value)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Affine":
        return cls((rows, cols))

    # arithmetic ---------------------------------------------------------

    @staticmethod
    def lift(x) -> "Affine":
        return x if isinstance(x, Affine) else Affine.constant(x)

    def __add__(self, other):
        if isinstance(other, (int, float)) and other == 0:
            return self
        other = Affine.lift(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} + {other.shape}")
        return Affine(self.shape, self.const + other.const, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-Affine.lift(other))

    def __rsub__(self, other):
        return Affine.lift(other) + (-self)

    def __mul__(self, c):
        if not np.isscalar(c):
            raise TypeError("Affine supports only scalar '*'; use '@' for products")
        c = float(c)
        return Affine(
            self.shape,
            self.const * c,
            [Term(t.left * c, t.var, t.right, t.transposed) for t in self.terms],
        )

    __rmul__ = __mul__

    def __matmul__(self, M):
        M = _const(M)
        if M.shape[0] != self.shape[1]:
            raise ValueError(f"shape mismatch {self.shape} @ {M.shape}")
        return Affine(
            (self.shape[0], M.shape[1]),
            self.const @ M,
            [Term(t.left, t.var, t.right @ M, t.transposed) for t in self.terms],
        )

    def __rmatmul__(self, M):
        M = _const(M)
        if M.shape[1] != self.shape[0]:
            raise ValueError(f"shape mismatch {M.shape} @ {self.shape}")
        return Affine(
            (M.shape[0], self.shape[1]),
            M @ self.const,
            [Term(M @ t.left, t.var, t.right, t.transposed) for t in self.terms],
        )

    @property
    def T(self) -> "Affine":
        # (L X R)^T = R^T X^T L^T
        return Affine(
            (self.shape[1], self.shape[0]),
            self.const.T,
            [Term(t.right.T, t.var, t.left.T, not t.transposed) for t in self.terms],
        )

    # evaluation -----------------------------------------------------------

    def variables(self) -> dict[str, Var]:
        return {t.var.name: t.var for t in self.terms}

    def value(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        out = self.const.copy()
        for t in self.terms:
            X = np.asarray(values[t.var.name], dtype=float)
            out += t.left @ (X.T if t.transposed else X) @ t.right
        return out

    def linear_part(self, var: Var, X: np.ndarray) -> np.ndarray:
        """Contribution of ``var = X`` alone (no constant, other variables zero)."""
        out = np.zeros(self.shape)
        for t in self.terms:
            if t.var.name == var.name:
                out += t.left @ (X.T if t.transposed else X) @ t.right
        return out

    def to_cvxpy(self, cvars):
        expr = self.const
        for t in self.terms:
            X = cvars[t.var.name]
            expr = expr + t.left @ (X.T if t.transposed else X) @ t.right
        return expr

    def is_zero(self) -> bool:
        return not self.terms and not np.any(self.const)


class BlockMatrix:
    """Symmetric block matrix given by its upper-triangle blocks.

    The assembled matrix is ``U + U^T`` where ``U`` holds the strictly upper
    blocks and half of each diagonal block, so every numeric instantiation
    is exactly symmetric.
    """

    def __init__(self, sizes, blocks: Mapping[tuple[int, int], Affine]):
        self.sizes = list(sizes)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.blocks: dict[tuple[int, int], Affine] = {}
        for (i, j), b in blocks.items():
            if i > j:
                raise ValueError(f"block ({i},{j}) below the diagonal; give the upper block")
            b = Affine.lift(b)
            if b.shape != (self.sizes[i], self.sizes[j]):
                raise ValueError(
                    f"block ({i},{j}) has shape {b.shape}, slot sizes {self.sizes[i]}x{self.sizes[j]}"
                )
            if not b.is_zero():
                self.blocks[(i, j)] = b

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    def _upper(self, fill):
        U = np.zeros((self.dim, self.dim))
        for (i, j), b in self.blocks.items():
            r0, c0 = self.offsets[i], self.offsets[j]
            v = fill(b)
            U[r0:r0 + self.sizes[i], c0:c0 + self.sizes[j]] += 0.5 * v if i == j else v
        return U

    def value(self, values) -> np.ndarray:
        U = self._upper(lambda b: b.value(values))
        return U + U.T

    def constant(self) -> np.ndarray:
        U = self._upper(lambda b: b.const)
        return U + U.T

    def linear_part(self, var: Var, X: np.ndarray) -> np.ndarray:
        U = self._upper(lambda b: b.linear_part(var, X))
        return U + U.T

    def variables(self) -> dict[str, Var]:
        out: dict[str, Var] = {}
        for b in self.blocks.values():
            out.update(b.variables())
        return out

    def to_cvxpy(self, cvars):
        import cvxpy as cp

        rows = []
        for i, si in enumerate(self.sizes):
            row = []
            for j, sj in enumerate(self.sizes):
                if i <= j and (i, j) in self.blocks:
                    e = self.blocks[(i, j)].to_cvxpy(cvars)
                    row.append(0.5 * e if i == j else e)
                else:
                    row.append(np.zeros((si, sj)))
            rows.append(row)
        U = cp.bmat(rows)
        return U + U.T

    def block_value(self, values, i: int, j: int) -> np.ndarray:
        """Numeric value of block (i, j) of the assembled matrix."""
        M = self.value(values)
        oi, oj = self.offsets[i], self.offsets[j]
        return M[oi:oi + self.sizes[i], oj:oj + self.sizes[j]]
