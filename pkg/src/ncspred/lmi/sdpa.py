"""Sparse SDPA (".dat-s") export of an ``LmiProblem``.

Layout, in order:

* comment line ``"<family> <n_scalars> scalars`` (prefixed by a double quote)
* ``m`` = number of scalar unknowns ``y``
* number of blocks
* block sizes: one block per constraint (in problem order), then one block
  per ``psd``/``pd`` variable (in declaration order)
* objective ``c``: all zeros (pure feasibility)
* entries ``k blk i j value`` for the upper triangle (1-based ``i <= j``) of
  every nonzero ``F_k``; ``F_0`` first, then monomials ``k = 1..m``

The unknowns are the upper-triangle (symmetric) or row-major (free)
coordinates of each variable, in declaration order. SDPA's primal-dual pair
asks for ``sum_k y_k F_k - F_0 >= 0``; an ``nsd`` constraint ``G <= 0`` is
written with ``F_k = -G_k`` and ``F_0 = G_0``, a ``psd`` constraint with the
signs flipped, and a cone variable ``X >= b I`` with ``F_k = E_k``,
``F_0 = b I``. ``read_sdpa`` inverts the layout.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .problem import LmiProblem


def _fmt(x: float) -> str:
    return f"{x:.17g}" if x != int(x) or abs(x) >= 1e15 else str(int(x))


def scalarize(problem: LmiProblem, strict_bound: float | None = None):
    """Return ``(block_sizes, F0_blocks, F_blocks, labels)`` for ``problem``.

    ``F_blocks[k]`` is the list of per-block matrices of monomial ``k``.
    ``strict_bound`` sets ``b`` in ``X >= b I`` for ``pd`` variables; by
    default 1 for homogeneous problems and 1e-6 otherwise.
    """
    if not problem.constraints:
        raise ValueError("refusing to export a problem with no constraints")
    if strict_bound is None:
        strict_bound = 1.0 if problem.homogeneous else 1e-6
    cones = [v for v in problem.variables.values() if v.cone != "free"]
    sizes = [c.matrix.dim for c in problem.constraints] + [v.rows for v in cones]
    signs = [1.0 if c.sense == "psd" else -1.0 for c in problem.constraints]
    F0 = [-s * c.matrix.constant() for s, c in zip(signs, problem.constraints)]
    F0 += [(strict_bound if v.cone == "pd" else 0.0) * np.eye(v.rows) for v in cones]
    F, labels = [], []
    for var in problem.variables.values():
        for label, E in var.basis():
            mats = [s * c.matrix.linear_part(var, E) for s, c in zip(signs, problem.constraints)]
            mats += [E if v.name == var.name else np.zeros((v.rows, v.rows)) for v in cones]
            F.append(mats)
            labels.append((var.name, label))
    return sizes, F0, F, labels


def export_sdpa(problem: LmiProblem, path, strict_bound: float | None = None) -> Path:
    """Write ``problem`` to ``path`` in sparse SDPA format (see module docstring)."""
    sizes, F0, F, _ = scalarize(problem, strict_bound)
    lines = [f'"{problem.family} {len(F)} scalars', str(len(F)), str(len(sizes)),
             " ".join(str(s) for s in sizes), " ".join("0" for _ in F)]
    for k, mats in enumerate([F0] + F):
        for b, M in enumerate(mats, start=1):
            rows, cols = np.nonzero(np.triu(M))
            for i, j in zip(rows, cols):
                lines.append(f"{k} {b} {i + 1} {j + 1} {_fmt(float(M[i, j]))}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_sdpa(path):
    """Parse a sparse SDPA file into ``(c, sizes, F)`` with ``F[k][b]`` dense.

    ``F[0]`` is the constant matrix list; ``F[k]`` for ``k >= 1`` the monomials.
    """
    body = [ln for ln in Path(path).read_text().splitlines()
            if ln.strip() and ln[0] not in '"*']
    m = int(body[0].split()[0])
    nblocks = int(body[1].split()[0])
    sizes = [abs(int(s)) for s in body[2].replace(",", " ").replace("{", " ").replace("}", " ").split()]
    if len(sizes) != nblocks:
        raise ValueError("block count does not match the size list")
    c = np.array([float(x) for x in body[3].replace(",", " ").split()])
    F = [[np.zeros((s, s)) for s in sizes] for _ in range(m + 1)]
    for ln in body[4:]:
        k, b, i, j, v = ln.split()
        M = F[int(k)][int(b) - 1]
        M[int(i) - 1, int(j) - 1] = M[int(j) - 1, int(i) - 1] = float(v)
    return c, sizes, F
