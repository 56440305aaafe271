"""Cone automorphisms, the braiding intertwiner and the statistics estimator."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .dynamics import perturbation_unitary, propagate
from .geometry import AB, AD, LAMBDA1, LAMBDA2, LAMBDA3, Cone, halfplane_of_cone
from .hall import HallContext, Qbar_operator, flux_automorphism, k_gamma, qbar
from .interaction import Interaction, restrict
from .opalg import BlockOp


def _cone_sites(ctx: HallContext, cone: Cone):
    return frozenset(x for x in ctx.window.sites if cone.contains(x))


@dataclass
class ConeAutomorphism:
    """rho^Lambda = Ad[R], R = exp(2 pi i sum_S (qbar^{Gamma_Lambda}|_Lambda)_S)."""

    cone: Cone
    halfplane: str
    generator: BlockOp
    unitary: BlockOp
    restricted: Interaction

    def __call__(self, A: BlockOp):
        return self.unitary @ A @ self.unitary.adjoint()

    def inverse(self, A: BlockOp):
        return self.unitary.adjoint() @ A @ self.unitary

    def power_unitary(self, p):
        return self.generator.expi(2 * math.pi * p)


def rho_lambda(ctx: HallContext, cone: Cone):
    if not cone.avoids_forbidden_direction():
        raise ValueError(f"cone {cone} contains the forbidden direction")
    Gam = halfplane_of_cone(cone)
    sites = _cone_sites(ctx, cone)
    qb = qbar(ctx, Gam, within=sites)
    r = restrict(qb, sites)
    G = r.window_operator(ctx.alg) if len(r) else ctx.alg.zero()
    return ConeAutomorphism(cone, Gam.name, G, G.expi(2 * math.pi), r)


def rho_lambda_magnus(ctx: HallContext, rho: ConeAutomorphism, tol=1e-10):
    """Propagator at 2 pi of phi -> -alpha^{Gamma}_phi(k^Gamma|_Lambda); tau(A) = U^* A U."""
    from .geometry import NAMED

    Gam = NAMED[rho.halfplane]
    sites = _cone_sites(ctx, rho.cone)
    kres = k_gamma(ctx, Gam, within=sites)
    kl = restrict(kres.interaction, sites)
    Kl = kl.window_operator(ctx.alg) if len(kl) else ctx.alg.zero()
    Q = ctx.Q(Gam)

    def gen(phi):
        return Kl.phase_twist(Q, phi) * (-1.0)

    U, stats = propagate(gen, 0.0, 2 * math.pi, ctx.alg, tol=tol)
    return U, stats


def rho_route_gap(ctx: HallContext, rho: ConeAutomorphism, samples, tol=1e-10):
    """max over samples of ||rho(A) - tau^{k~|Lambda}_{2pi}(A)||."""
    U, _ = rho_lambda_magnus(ctx, rho, tol=tol)
    worst = 0.0
    for A in samples:
        worst = max(worst, (rho(A) - U.adjoint() @ A @ U).norm() / max(A.norm(), 1e-300))
    return float(worst)


# ------------------------------------------------------------------ intertwiner


@dataclass
class IntertwinerReport:
    V: BlockOp
    route_gap: float
    identity_residual: float
    unitarity: float


def intertwiner_Vrt(ctx: HallContext, r, t, samples=(), tol=1e-10):
    """V_{r,t} with beta^AB_{2pi} o Ad[V] = rho^{Lambda_2(r)} o (rho^{Lambda_3(t)})^{-1}.

    The pair generated by k~^AB and its restriction to Lambda_2(r) u Lambda_3(t)
    is fed to the perturbation construction; the returned V is the one acting
    before beta.
    """
    L2, L3 = LAMBDA2.shifted(r), LAMBDA3.shifted(t)
    cones = _cone_sites(ctx, L2) | _cone_sites(ctx, L3)
    kres = k_gamma(ctx, AB)
    k = kres.interaction
    kr = restrict(k, cones)
    K = kres.operator
    Kr = kr.window_operator(ctx.alg) if len(kr) else ctx.alg.zero()
    Q = ctx.Q(AB)

    def twisted(X):
        def gen(phi):
            return X.phase_twist(Q, phi) * (-1.0)

        return gen

    D = K - Kr
    res = perturbation_unitary(twisted(K), twisted(Kr), twisted(D), 2 * math.pi, ctx.alg, tol=tol)
    beta = flux_automorphism(ctx, AB, 2 * math.pi)
    V = beta.inverse(res.V)
    rho2, rho3 = rho_lambda(ctx, L2), rho_lambda(ctx, L3)
    worst = 0.0
    for A in samples:
        lhs = beta(V @ A @ V.adjoint())
        rhs = rho2(rho3.inverse(A))
        worst = max(worst, (lhs - rhs).norm() / max(A.norm(), 1e-300))
    return IntertwinerReport(V, res.route_gap, float(worst), res.unitarity)


# ------------------------------------------------------------------ statistics


@dataclass
class ThetaPoint:
    window: list
    r: float
    theta: complex
    residual_to_phase: float


def theta_unitary(ctx: HallContext, rho: ConeAutomorphism, p=1):
    """Implementing unitary of (beta^AD_{2pi})^{-p} o rho^p."""
    return Qbar_operator(ctx, AD).expi(-2 * math.pi * p) @ rho.power_unitary(p)


def theta_from_unitary(ctx: HallContext, Z: BlockOp):
    """omega(e^{-2 pi i Qbar_AB} Z e^{2 pi i Qbar_AB} Z^*)."""
    E = Qbar_operator(ctx, AB).expi(2 * math.pi)
    return complex(ctx.omega(E.adjoint() @ Z @ E @ Z.adjoint()))


def theta_estimate(ctx: HallContext, r=0, cone: Cone = LAMBDA1):
    """theta_r = omega(e^{-2 pi i Qbar_AB} theta_r(e^{2 pi i Qbar_AB})) on the window."""
    rho = rho_lambda(ctx, cone.shifted(r))
    th = theta_from_unitary(ctx, theta_unitary(ctx, rho))
    return ThetaPoint(ctx.window.to_json(), r, th, abs(abs(th) - 1.0))


def theta_sweep(contexts, radii):
    """theta over (window, r); returns points and the max deviation from the largest-window value."""
    pts = [theta_estimate(ctx, r) for ctx in contexts for r in radii]
    ref = pts[-1].theta
    return pts, [abs(p.theta - ref) for p in pts]


def theta_power_check(ctx: HallContext, p, r=0, cone: Cone = LAMBDA1):
    rho = rho_lambda(ctx, cone.shifted(r))
    th = theta_from_unitary(ctx, theta_unitary(ctx, rho))
    thp = theta_from_unitary(ctx, theta_unitary(ctx, rho, p))
    return thp, th**p, abs(thp - th**p)


def identity_theta(ctx: HallContext):
    """Estimator with rho = id; equals 1 whenever Qbar_AB, Qbar_AD fix the ground state."""
    return theta_from_unitary(ctx, Qbar_operator(ctx, AD).expi(-2 * math.pi))


def gauge_invariance(ctx: HallContext, r=0, chi=0.7, cone: Cone = LAMBDA1):
    """The estimator does not see a global phase on the implementing unitary."""
    rho = rho_lambda(ctx, cone.shifted(r))
    Z = theta_unitary(ctx, rho)
    return abs(theta_from_unitary(ctx, Z * cmath.exp(1j * chi)) - theta_from_unitary(ctx, Z))


def theta_phase(kappa):
    """e^{2 pi i kappa}, the value theta should take."""
    return cmath.exp(2j * math.pi * kappa)


@dataclass
class QuantizationReport:
    value: float
    p: int
    scaled: float
    nearest: int
    residual: float


def quantization_check(two_pi_kappa, p=1):
    """Distance of p * 2 pi kappa to the nearest integer."""
    s = p * two_pi_kappa
    n = int(round(s))
    return QuantizationReport(float(two_pi_kappa), p, float(s), n, float(abs(s - n)))
