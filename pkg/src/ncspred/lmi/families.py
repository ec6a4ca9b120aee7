"""Builders for the four certificate families.

Each builder writes its block table once against a *context*. The analysis
context uses the gain ``K`` and the slack matrices ``P2``, ``P3`` as given;
the design context applies the congruence with ``Q = P2^{-1}`` so that the
same table yields LMIs that are linear in ``Q`` and ``Y = K Q``:

    P2^T (C0 + C1 K)   ->  C0 Q + C1 Y        (n-slot columns)
    P2^T C             ->  C                  (m-slot columns)
    P2^T               ->  Q
    P3                 ->  eps1 P2
    Omega              ->  eps2 I
    sigma K^T Omega K  ->  Schur complement on an extra m-slot

Slot orderings
--------------
lemma1 (Phi):  z, zdot, z(t-tau), z(t-tau_bar), z(t-r0-r1), z(t-tau1), z(t-tau2), z(t-tau_M), e1
prop1  (Psi):  z, zdot, z(t-tau), z(t-tau_bar), e0
lemma2 (Sigma): z, zdot, z(t-r1), z(t-r1-mu_M), z(t-r1-tau4), z(t-r1-tau_tilde)
lemma2 (Xi):   z, zdot, z(t-r1), z(t-r1-mu(t)), z(t-r1-mu_M), z(t-r1-tau_tilde), e3
prop3  (M):    z, zdot, z(t-tau3), z(t-h)
prop3  (N):    z, zdot, z(t-h), e2
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from ..matexp import expm
from ..model import DelayProfile, Gain, LtiPlant, validate_assumption
from .affine import Affine, BlockMatrix, Var
from .problem import LmiConstraint, LmiProblem

FAMILIES = ("lemma1", "prop1", "lemma2", "prop3")


class AnalysisContext:
    """Plain block entries for a fixed gain."""

    homogeneous = True

    def __init__(self, plant: LtiPlant, gain: Gain):
        gain.check(plant)
        self.plant, self.K = plant, gain.K
        self.n, self.m = plant.n, plant.m
        self.vars: dict[str, Var] = {}

    def _declare(self, var: Var) -> Affine:
        self.vars[var.name] = var
        return Affine.of(var)

    def sym(self, name: str, cone: str = "psd") -> Affine:
        return self._declare(Var(name, self.n, self.n, True, cone))

    def full(self, name: str) -> Affine:
        return self._declare(Var(name, self.n, self.n))

    def omega(self, strict: bool) -> Affine:
        return self._declare(Var("Omega", self.m, self.m, True, "pd" if strict else "psd"))

    def _slack(self, name):
        if name not in self.vars:
            self._declare(Var(name, self.n, self.n))
        return Affine.of(self.vars[name])

    def _right(self, C0, C1):
        R = np.zeros((self.n, self.n))
        if C0 is not None:
            R = R + C0
        if C1 is not None:
            R = R + C1 @ self.K
        return R

    def p2t(self) -> Affine:
        return self._slack("P2").T

    def p3t(self) -> Affine:
        return self._slack("P3").T

    def p2(self, C0=None, C1=None) -> Affine:
        """``P2^T (C0 + C1 K)``."""
        return self.p2t() @ self._right(C0, C1)

    def p3(self, C0=None, C1=None) -> Affine:
        return self.p3t() @ self._right(C0, C1)

    def p2m(self, C) -> Affine:
        """``P2^T C`` for a block whose column slot has size m."""
        return self.p2t() @ C

    def p3m(self, C) -> Affine:
        return self.p3t() @ C

    def kok(self, sigma: float, omega: Affine, slot: int) -> Affine:
        """``sigma K^T Omega K`` placed in diagonal block ``slot``."""
        if sigma == 0:
            return Affine.zeros(self.n, self.n)
        return (self.K.T @ omega @ self.K) * sigma

    def assemble(self, sizes, blocks) -> BlockMatrix:
        return BlockMatrix(sizes, blocks)


class DesignContext(AnalysisContext):
    """Congruence-transformed entries: variables ``Q`` (n x n) and ``Y`` (m x n)."""

    homogeneous = False

    def __init__(self, plant: LtiPlant, eps1: float, eps2: float):
        if eps1 <= 0 or eps2 <= 0:
            raise ValueError("eps1 and eps2 must be positive")
        self.plant = plant
        self.n, self.m = plant.n, plant.m
        self.eps1, self.eps2 = float(eps1), float(eps2)
        self.vars = {}
        self.Q = self._declare(Var("Q", self.n, self.n))
        self.Y = self._declare(Var("Y", self.m, self.n))
        self._pending: list[tuple[int, Affine]] = []

    def omega(self, strict: bool) -> Affine:
        return Affine.constant(self.eps2 * np.eye(self.m))

    def p2t(self) -> Affine:
        return self.Q

    def p3t(self) -> Affine:
        return self.Q * self.eps1

    def p2(self, C0=None, C1=None) -> Affine:
        out = Affine.zeros(self.n, self.n)
        if C0 is not None:
            out = out + np.asarray(C0) @ self.Q
        if C1 is not None:
            out = out + np.asarray(C1) @ self.Y
        return out

    def p3(self, C0=None, C1=None) -> Affine:
        return self.p2(C0, C1) * self.eps1

    def p2m(self, C) -> Affine:
        return Affine.constant(C)

    def p3m(self, C) -> Affine:
        return Affine.constant(np.asarray(C) * self.eps1)

    def kok(self, sigma: float, omega: Affine, slot: int) -> Affine:
        if sigma > 0:
            self._pending.append((slot, self.Y.T * math.sqrt(sigma * self.eps2)))
        return Affine.zeros(self.n, self.n)

    def assemble(self, sizes, blocks) -> BlockMatrix:
        sizes = list(sizes)
        blocks = dict(blocks)
        for slot, col in self._pending:
            k = len(sizes)
            sizes.append(self.m)
            blocks[(slot, k)] = col
            blocks[(k, k)] = Affine.constant(-np.eye(self.m))
        self._pending = []
        return BlockMatrix(sizes, blocks)


def _coupling(name, R, G) -> LmiConstraint:
    n = R.shape[0]
    return LmiConstraint(name, BlockMatrix([n, n], {(0, 0): R, (0, 1): G, (1, 1): R}), "psd")


def _check_alpha(alpha):
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")


def _problem(ctx, family, constraints, params) -> LmiProblem:
    design = {}
    if isinstance(ctx, DesignContext):
        design = {"eps1": ctx.eps1, "eps2": ctx.eps2}
    return LmiProblem(family, dict(ctx.vars), constraints, params, ctx.homogeneous, design)


def build_lemma1(plant, gain, profile: DelayProfile, alpha: float, sigma: float, ctx=None) -> LmiProblem:
    """Sampled predictor with both networks (certificate for sampled event-triggering)."""
    _check_alpha(alpha)
    if not validate_assumption(profile):
        raise ValueError(
            f"needs h + eta_max <= r0 + r1, got {profile.h} + {profile.eta_max} > "
            f"{profile.r0} + {profile.r1}"
        )
    ctx = ctx or AnalysisContext(plant, gain)
    n, m = plant.n, plant.m
    A, B = plant.A, plant.B
    r = profile.r0 + profile.r1
    tb, tM = profile.tau_bar, profile.tau_M
    rb, rM = math.exp(-2 * alpha * tb), math.exp(-2 * alpha * tM)
    EB = expm(A, r) @ B

    P = ctx.sym("P", "pd")
    S, S0, S1, R0, R1 = (ctx.sym(k) for k in ("S", "S0", "S1", "R0", "R1"))
    Om = ctx.omega(strict=sigma == 0)
    G0, G1, G2, G3 = (ctx.full(k) for k in ("G0", "G1", "G2", "G3"))
    P3t = ctx.p3t()

    F = {}
    F[0, 0] = 2 * alpha * P + S0 - rb * R0 + ctx.p2(A) + ctx.p2(A).T
    F[0, 1] = P - ctx.p2t() + ctx.p3(A).T
    F[0, 2] = rb * (R0 - G0) + ctx.p2(None, B)
    F[0, 3] = rb * G0
    F[0, 8] = ctx.p2m(EB)
    F[0, 6] = ctx.p2(None, EB)
    F[0, 5] = -F[0, 6]
    F[1, 1] = tb**2 * R0 + (tM - r) ** 2 * R1 - P3t - P3t.T
    F[1, 2] = ctx.p3(None, B)
    F[1, 8] = ctx.p3m(EB)
    F[1, 6] = ctx.p3(None, EB)
    F[1, 5] = -F[1, 6]
    F[2, 3] = rb * (R0 - G0)
    F[2, 2] = -F[2, 3] - F[2, 3].T
    F[3, 3] = rb * (S - S0 - R0)
    F[4, 4] = math.exp(-2 * alpha * r) * (S1 - S) - rM * R1
    F[4, 5] = rM * (R1 - G1)
    F[4, 6] = rM * (G1 - G2)
    F[4, 7] = rM * G2
    F[5, 5] = -F[4, 5] - F[4, 5].T
    F[5, 6] = rM * (R1 - G1 + G2 - G3)
    F[5, 7] = rM * (G3 - G2)
    F[6, 7] = rM * (R1 - G3)
    F[6, 6] = -F[6, 7] - F[6, 7].T + ctx.kok(sigma, Om, 6)
    F[7, 7] = -rM * (S1 + R1)
    F[8, 8] = -Om
    Phi = ctx.assemble([n] * 8 + [m], F)

    constraints = [LmiConstraint("Phi", Phi, "nsd"), _coupling("R0G0", R0, G0)]
    constraints += [_coupling(f"R1G{i}", R1, G) for i, G in enumerate((G1, G2, G3), start=1)]
    params = dict(
        alpha=alpha, sigma=sigma, r0=profile.r0, r1=profile.r1, eta_max=profile.eta_max,
        mu_max=profile.mu_max, h=profile.h, tau_bar=tb, tau_M=tM, rho_bar=rb, rho_M=rM,
    )
    return _problem(ctx, "lemma1", constraints, params)


def build_prop1(plant, gain, profile: DelayProfile, alpha: float, sigma: float, ctx=None) -> LmiProblem:
    """Known actuator delay (mu_M = 0): conditions independent of r0 and r1."""
    _check_alpha(alpha)
    if profile.mu_max != 0:
        raise ValueError(f"prop1 needs mu_max = 0, got {profile.mu_max}")
    if not validate_assumption(profile):
        raise ValueError(
            f"needs h + eta_max <= r0 + r1, got {profile.h} + {profile.eta_max} > "
            f"{profile.r0} + {profile.r1}"
        )
    ctx = ctx or AnalysisContext(plant, gain)
    n, m = plant.n, plant.m
    A, B = plant.A, plant.B
    tb = profile.tau_bar
    rb = math.exp(-2 * alpha * tb)

    P = ctx.sym("P", "pd")
    S, R = ctx.sym("S"), ctx.sym("R")
    Om = ctx.omega(strict=sigma == 0)
    G = ctx.full("G")
    P3t = ctx.p3t()

    F = {}
    F[0, 0] = 2 * alpha * P + S - rb * R + ctx.p2(A) + ctx.p2(A).T
    F[0, 1] = P - ctx.p2t() + ctx.p3(A).T
    F[0, 2] = rb * (R - G) + ctx.p2(None, B)
    F[0, 3] = rb * G
    F[0, 4] = ctx.p2m(B)
    F[1, 1] = tb**2 * R - P3t - P3t.T
    F[1, 2] = ctx.p3(None, B)
    F[1, 4] = ctx.p3m(B)
    F[2, 3] = rb * (R - G)
    F[2, 2] = -F[2, 3] - F[2, 3].T + ctx.kok(sigma, Om, 2)
    F[3, 3] = -rb * (S + R)
    F[4, 4] = -Om
    Psi = ctx.assemble([n] * 4 + [m], F)

    constraints = [LmiConstraint("Psi", Psi, "nsd"), _coupling("RG", R, G)]
    params = dict(alpha=alpha, sigma=sigma, eta_max=profile.eta_max, h=profile.h, tau_bar=tb, rho_bar=rb)
    return _problem(ctx, "prop1", constraints, params)


def build_lemma2(plant, gain, r1: float, mu_max: float, wait_h: float, alpha: float, sigma: float,
                 ctx=None) -> LmiProblem:
    """Continuous measurements with switching event-triggering and uncertain actuator delay."""
    _check_alpha(alpha)
    if r1 < 0 or mu_max < 0 or wait_h <= 0:
        raise ValueError("need r1 >= 0, mu_max >= 0 and wait_h > 0")
    if mu_max == 0:
        warnings.warn("mu_max = 0: the prop3 family is the sharper certificate here", stacklevel=2)
    ctx = ctx or AnalysisContext(plant, gain)
    n, m = plant.n, plant.m
    A, B = plant.A, plant.B
    tt = wait_h + mu_max
    rt = math.exp(-2 * alpha * (r1 + tt))
    rM = math.exp(-2 * alpha * (r1 + mu_max))
    EB = expm(A, r1) @ B

    P = ctx.sym("P", "pd")
    S, S0, S1, R0, R1 = (ctx.sym(k) for k in ("S", "S0", "S1", "R0", "R1"))
    Om = ctx.omega(strict=sigma == 0)
    G0, G1 = ctx.full("G0"), ctx.full("G1")
    P3t = ctx.p3t()

    head = {}
    head[0, 0] = 2 * alpha * P + S + ctx.p2(A, B) + ctx.p2(A, B).T
    head[0, 1] = P - ctx.p2t() + ctx.p3(A, B).T
    head[1, 1] = mu_max**2 * R0 + wait_h**2 * R1 - P3t - P3t.T
    head[2, 2] = math.exp(-2 * alpha * r1) * (S0 - S) - rM * R0

    Sg = dict(head)
    Sg[0, 4] = ctx.p2(None, EB)
    Sg[0, 2] = -Sg[0, 4]
    Sg[1, 4] = ctx.p3(None, EB)
    Sg[1, 2] = -Sg[1, 4]
    Sg[2, 3] = rM * R0
    Sg[3, 3] = -rM * (R0 + S0 - S1) - rt * R1
    Sg[3, 4] = rt * (R1 - G1)
    Sg[3, 5] = rt * G1
    Sg[4, 4] = -Sg[3, 4] - Sg[3, 4].T
    Sg[4, 5] = rt * (R1 - G1)
    Sg[5, 5] = -rt * (S1 + R1)
    Sigma = ctx.assemble([n] * 6, Sg)

    Xi = dict(head)
    Xi[0, 3] = ctx.p2(None, EB)
    Xi[0, 2] = -Xi[0, 3]
    Xi[0, 6] = ctx.p2m(EB)
    Xi[1, 3] = ctx.p3(None, EB)
    Xi[1, 2] = -Xi[1, 3]
    Xi[1, 6] = ctx.p3m(EB)
    Xi[2, 3] = rM * (R0 - G0)
    Xi[3, 4] = rM * (R0 - G0)
    Xi[2, 4] = rM * G0
    Xi[3, 3] = -Xi[2, 3] - Xi[2, 3].T + ctx.kok(sigma, Om, 3)
    Xi[4, 4] = rM * (S1 - S0 - R0) - rt * R1
    Xi[4, 5] = rt * R1
    Xi[5, 5] = -rt * (S1 + R1)
    Xi[6, 6] = -Om
    XiM = ctx.assemble([n] * 6 + [m], Xi)

    constraints = [
        LmiConstraint("Sigma", Sigma, "nsd"),
        LmiConstraint("Xi", XiM, "nsd"),
        _coupling("R0G0", R0, G0),
        _coupling("R1G1", R1, G1),
    ]
    params = dict(alpha=alpha, sigma=sigma, r1=r1, mu_max=mu_max, h=wait_h, tau_tilde=tt,
                  rho_tilde=rt, rho_M=rM)
    return _problem(ctx, "lemma2", constraints, params)


def build_prop3(plant, gain, wait_h: float, alpha: float, sigma: float, ctx=None) -> LmiProblem:
    """Continuous measurements, known actuator delay: a delay-free certificate."""
    _check_alpha(alpha)
    if wait_h <= 0:
        raise ValueError("wait_h must be positive")
    ctx = ctx or AnalysisContext(plant, gain)
    n, m = plant.n, plant.m
    A, B = plant.A, plant.B
    rh = math.exp(-2 * alpha * wait_h)

    P = ctx.sym("P", "pd")
    S, R = ctx.sym("S"), ctx.sym("R")
    Om = ctx.omega(strict=sigma == 0)
    G = ctx.full("G")
    P3t = ctx.p3t()

    Mb = {}
    Mb[0, 0] = 2 * alpha * P + S - rh * R + ctx.p2(A) + ctx.p2(A).T
    Mb[0, 1] = P - ctx.p2t() + ctx.p3(A).T
    Mb[0, 2] = rh * (R - G) + ctx.p2(None, B)
    Mb[0, 3] = rh * G
    Mb[1, 1] = wait_h**2 * R - P3t - P3t.T
    Mb[1, 2] = ctx.p3(None, B)
    Mb[2, 3] = rh * (R - G)
    Mb[2, 2] = -Mb[2, 3] - Mb[2, 3].T
    Mb[3, 3] = -rh * (S + R)
    Mmat = ctx.assemble([n] * 4, Mb)

    Nb = {}
    Nb[0, 0] = (2 * alpha * P + S - rh * R + ctx.kok(sigma, Om, 0)
                + ctx.p2(A, B) + ctx.p2(A, B).T)
    Nb[0, 1] = P - ctx.p2t() + ctx.p3(A, B).T
    Nb[0, 2] = rh * R
    Nb[0, 3] = ctx.p2m(B)
    Nb[1, 1] = wait_h**2 * R - P3t - P3t.T
    Nb[1, 3] = ctx.p3m(B)
    Nb[2, 2] = -rh * (S + R)
    Nb[3, 3] = -Om
    Nmat = ctx.assemble([n] * 3 + [m], Nb)

    constraints = [LmiConstraint("M", Mmat, "nsd"), LmiConstraint("N", Nmat, "nsd"), _coupling("RG", R, G)]
    params = dict(alpha=alpha, sigma=sigma, h=wait_h, rho_h=rh)
    return _problem(ctx, "prop3", constraints, params)


def build_family(family: str, plant, gain, profile: DelayProfile, alpha: float, sigma: float,
                 ctx=None) -> LmiProblem:
    """Dispatch on the family tag with a common ``DelayProfile`` argument."""
    if family == "lemma1":
        return build_lemma1(plant, gain, profile, alpha, sigma, ctx)
    if family == "prop1":
        return build_prop1(plant, gain, profile, alpha, sigma, ctx)
    if family == "lemma2":
        return build_lemma2(plant, gain, profile.r1, profile.mu_max, profile.h, alpha, sigma, ctx)
    if family == "prop3":
        if profile.mu_max != 0:
            raise ValueError(f"prop3 needs mu_max = 0, got {profile.mu_max}")
        return build_prop3(plant, gain, profile.h, alpha, sigma, ctx)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
