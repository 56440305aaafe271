"""Dressed charges, flux insertion and the Hall current on a window.

With tau_t(A) = e^{iHt} A e^{-iHt} and the filter multiplier w(omega) = -i/omega
beyond the gap, K_Gamma = F_W(i[H, Q_Gamma]) has K_{m0} = Q_{m0} on every
excited state m, which is what makes Qbar_Gamma = Q_Gamma - K_Gamma fix the
ground state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    AssumptionError,
    ConvergenceError,
    SpectralData,
    diagonalize,
    evolve_interaction,
    filtered_evolution,
    propagate,
)
from .filter import FilterFunction, SwitchProfile, build_filter
from .geometry import AB, AD, LatticeWindow, Region, boundary
from .interaction import TDI, Interaction, commutator, is_anchored
from .models import SpinModel, hamiltonian
from .opalg import BlockOp, LocalOperator, WindowAlgebra


@dataclass
class HallContext:
    model: SpinModel
    alg: WindowAlgebra
    sd: SpectralData
    F: FilterFunction
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, model: SpinModel, g=None, profile: SwitchProfile = None, gap_fraction=0.9):
        H, alg = hamiltonian(model)
        sd = diagonalize(H)
        if g is None:
            g = gap_fraction * sd.gap
        if g > sd.gap + 1e-12:
            raise AssumptionError(f"filter gap g={g:.4g} exceeds the window gap {sd.gap:.4g}")
        return cls(model, alg, sd, build_filter(g, profile))

    @property
    def window(self) -> LatticeWindow:
        return self.model.window

    @property
    def H(self):
        return self.sd.H

    def realize(self, region):
        """Finite site set of a Region (or an explicit site collection) inside the window."""
        if isinstance(region, Region):
            return region.realize(self.window)
        return frozenset(tuple(x) for x in region)

    def key(self, region):
        return region.name if isinstance(region, Region) else tuple(sorted(self.realize(region)))

    def omega(self, A: BlockOp):
        return self.sd.omega(A)

    def Q(self, region):
        return self.alg.charge(self.realize(region))

    def boundary_of(self, region):
        if isinstance(region, Region):
            return boundary(region, self.model.range, self.window).realize(self.window)
        raise TypeError("boundary needs a Region")


def delta_q(ctx: HallContext, region):
    """Termwise i[h_S, Q_{Gamma n S}]; its window sum is i[H, Q_Gamma]."""
    G = ctx.realize(region)
    out = Interaction(decay=ctx.model.h.decay, d=ctx.model.h.d)
    for S, op in ctx.model.h:
        part = [x for x in S if x in G]
        if not part:
            continue
        mask = _region_charge(ctx, S, part)
        c = 1j * (op.matrix @ mask - mask @ op.matrix)
        if np.max(np.abs(c)) > 1e-15:
            out.add(S, LocalOperator(S, c, op.d))
    return out


def _region_charge(ctx, S, part):
    """Diagonal Q_{part} on the tensor factors of S."""
    q = np.asarray(ctx.model.charge.charges, dtype=float)
    d = len(q)
    n = len(S)
    diag = np.zeros(d**n)
    for pos, x in enumerate(S):
        if x in part:
            diag += np.tile(np.repeat(q, d ** (n - 1 - pos)), d**pos)
    return np.diag(diag.astype(complex))


def K_operator(ctx: HallContext, region):
    key = ("K", ctx.key(region))
    if key not in ctx._cache:
        Q = ctx.Q(region)
        A = (ctx.H @ Q - Q @ ctx.H) * 1j
        ctx._cache[key] = filtered_evolution(ctx.sd, ctx.F, A)
    return ctx._cache[key]


def Qbar_operator(ctx: HallContext, region):
    key = ("Qbar", ctx.key(region))
    if key not in ctx._cache:
        ctx._cache[key] = ctx.Q(region) - K_operator(ctx, region)
    return ctx._cache[key]


@dataclass
class KResult:
    interaction: Interaction
    operator: BlockOp
    anchor_used: frozenset
    anchored_in_boundary: bool
    offender: tuple


def k_gamma(ctx: HallContext, region, within=None):
    """k^Gamma in interaction form (anchored in the boundary) and K_Gamma as an operator.

    If the termwise charge commutators are not anchored in the boundary (a
    charge non-conserving model), the anchor falls back to the boundary plus
    the offending supports so the construction still runs and the anchoring
    check reports the failure. With within set, only balls inside that site
    set are formed.
    """
    within = None if within is None else frozenset(within)
    key = ("k", ctx.key(region), within)
    if key in ctx._cache:
        return ctx._cache[key]
    X = set(ctx.boundary_of(region)) if isinstance(region, Region) else set()
    dq = delta_q(ctx, region)
    ok, offender = is_anchored(dq, X)
    used = set(X)
    if not ok:
        for S in dq.terms:
            if not set(S) & X:
                used |= set(S)
    beta = lambda op: filtered_evolution(ctx.sd, ctx.F, ctx.alg.local(op))
    keep = None if within is None else (lambda sup: all(x in within for x in sup))
    k = evolve_interaction(beta, dq, used, ctx.alg, keep=keep)
    k.anchor = frozenset(used)
    res = KResult(k, K_operator(ctx, region), frozenset(used), bool(ok), offender)
    ctx._cache[key] = res
    return res


def qbar(ctx: HallContext, region, within=None):
    """qbar^Gamma = q|_Gamma - k^Gamma as an interaction."""
    k = k_gamma(ctx, region, within=within).interaction
    q = ctx.model.charge.as_interaction(ctx.realize(region))
    return q - k


@dataclass
class FluxAutomorphism:
    region: object
    phi: float
    generator: BlockOp
    unitary: BlockOp

    def __call__(self, A: BlockOp):
        return self.unitary @ A @ self.unitary.adjoint()

    def inverse(self, A: BlockOp):
        return self.unitary.adjoint() @ A @ self.unitary


def flux_automorphism(ctx: HallContext, region, phi):
    """beta^Gamma_phi = Ad[exp(i phi Qbar_Gamma)]."""
    G = Qbar_operator(ctx, region)
    return FluxAutomorphism(region, phi, G, G.expi(phi))


def qbar_eigen_residual(ctx: HallContext, region):
    """|| Qbar_Gamma Omega - omega(Q_Gamma) Omega ||."""
    Qb = Qbar_operator(ctx, region)
    Om = ctx.sd.ground
    return float(np.linalg.norm(Qb.apply(Om) - ctx.omega(ctx.Q(region)) * Om))


def invariance_residual(ctx: HallContext, region, phis, samples):
    worst = 0.0
    Om = ctx.sd.ground
    for phi in phis:
        U = flux_automorphism(ctx, region, phi).unitary
        UO = U.adjoint().apply(Om)
        for A in samples:
            val = np.vdot(UO, A.apply(UO))
            worst = max(worst, abs(val - ctx.omega(A)))
    return float(worst)


def invariance_residual_local(ctx: HallContext, region, phis, ops):
    """Same as invariance_residual for LocalOperators, through reduced density matrices.

    Avoids lifting each observable to the window, which for non-conserving
    observables on large windows means a nearly dense matrix per sample.
    """
    Om = ctx.sd.ground
    ref = [ctx.alg.expect_local(Om, A) for A in ops]
    worst = 0.0
    for phi in phis:
        UO = flux_automorphism(ctx, region, phi).unitary.adjoint().apply(Om)
        for A, r in zip(ops, ref):
            worst = max(worst, abs(ctx.alg.expect_local(UO, A) - r))
    return float(worst)


def twist_tdi(ctx: HallContext, region):
    """phi -> -alpha_phi(k^Gamma) on [0, 2 pi], termwise and as a window generator."""
    kres = k_gamma(ctx, region)
    qdiag = ctx.Q(region)
    K = kres.operator

    G = ctx.realize(region)

    def sampler(phi):
        out = Interaction(decay=kres.interaction.decay, anchor=kres.interaction.anchor)
        for S, op in kres.interaction:
            qS = _region_charge(ctx, S, [x for x in S if x in G])
            ph = np.exp(1j * phi * np.diag(qS))
            out.add(S, LocalOperator(S, -(ph[:, None] * op.matrix * ph.conj()[None, :]), op.d))
        return out

    tdi = TDI((0.0, 2 * math.pi), sampler, label=f"twist[{ctx.key(region)}]")
    generator = lambda phi: K.phase_twist(qdiag, phi) * (-1.0)
    return tdi, generator


@dataclass
class TwistReport:
    residual: float
    steps: int
    anchored: bool


def twist_check(ctx: HallContext, region, samples, tol=1e-10):
    """tau^{k~}_{2pi} against Ad[e^{2 pi i Qbar}] on sample observables."""
    _, gen = twist_tdi(ctx, region)
    U, stats = propagate(gen, 0.0, 2 * math.pi, ctx.alg, tol=tol)
    beta = flux_automorphism(ctx, region, 2 * math.pi)
    worst = 0.0
    for A in samples:
        lhs = U.adjoint() @ A @ U
        worst = max(worst, (lhs - beta(A)).norm() / max(A.norm(), 1e-300))
    anchored, _ = is_anchored(k_gamma(ctx, region).interaction, ctx.boundary_of(region))
    return TwistReport(float(worst), stats["steps"], bool(anchored))


@dataclass
class CurrentReport:
    J: BlockOp
    kappa: float
    kappa_imag: float
    kappa_operator_path: float
    path_discrepancy: float
    kappa_qbar: float


def current_J(ctx: HallContext, path="interaction"):
    """J = sum_S i[k^AB, k^AD]_S; kappa = omega(J). Also i[K_AB, K_AD] for comparison."""
    K1, K2 = K_operator(ctx, AB), K_operator(ctx, AD)
    Jop = (K1 @ K2 - K2 @ K1) * 1j
    if path == "interaction":
        c = commutator(k_gamma(ctx, AB).interaction, k_gamma(ctx, AD).interaction)
        J = c.window_operator(ctx.alg) * 1j
    else:
        J = Jop
    kap = ctx.omega(J)
    kop = ctx.omega(Jop)
    Q1, Q2 = Qbar_operator(ctx, AB), Qbar_operator(ctx, AD)
    if path == "interaction":
        cq = commutator(qbar(ctx, AB), qbar(ctx, AD))
        R = cq.window_operator(ctx.alg) * (-1j)
    else:
        R = (Q1 @ Q2 - Q2 @ Q1) * (-1j)
    return CurrentReport(J, float(kap.real), float(kap.imag), float(kop.real), float(abs(kap - kop)), float(ctx.omega(R).real))


@dataclass
class CornerTail:
    distances: list
    norms: list
    rate: float
    remainder: float


def corner_tail(ctx: HallContext):
    """Summed norms of [k^AB, k^AD]_S by the distance of S from the quadrant corner.

    The distance of a support is the largest l-infinity distance of its sites
    to (-1/2, -1/2), minus 1/2: how far the term reaches out from the corner. An exponential fit through the outermost shells
    estimates the part of the sum lying outside the window.
    """
    c = commutator(k_gamma(ctx, AB).interaction, k_gamma(ctx, AD).interaction)
    shells: dict = {}
    for S, op in c:
        d = int(max(max(abs(x[0] + 0.5), abs(x[1] + 0.5)) for x in S) - 0.5)
        shells[d] = shells.get(d, 0.0) + op.norm()
    ds = sorted(shells)
    norms = [shells[d] for d in ds]
    pos = [(d, v) for d, v in zip(ds, norms) if v > 0]
    rate, remainder = math.nan, math.nan
    if len(pos) >= 2:
        (d1, v1), (d2, v2) = pos[-2], pos[-1]
        rate = math.log(v1 / v2) / (d2 - d1)
        remainder = v2 * math.exp(-rate) / (1 - math.exp(-rate)) if rate > 0 else math.inf
    return CornerTail(ds, norms, float(rate), float(remainder))


def _qbar_commutator(ctx, path):
    if path == "interaction":
        cq = commutator(qbar(ctx, AB), qbar(ctx, AD))
        return cq.window_operator(ctx.alg) * 1j
    Q1, Q2 = Qbar_operator(ctx, AB), Qbar_operator(ctx, AD)
    return (Q1 @ Q2 - Q2 @ Q1) * 1j


@dataclass
class J0Report:
    J0: BlockOp
    omega_J0: float
    nodes: int
    quadrature_change: float
    spectral_gap: float


def current_J0(ctx: HallContext, order=32, tol=1e-6, path="interaction", max_order=1024):
    """J0 = int_0^{2pi} (beta^AD_phi)^{-1}(i sum_S [qbar^AB, qbar^AD]_S) dphi.

    Gauss-Legendre in phi, doubled until successive results agree to tol; the
    exact spectral integral in the eigenbasis of Qbar_AD is the second route.
    """
    X = _qbar_commutator(ctx, path)
    G = Qbar_operator(ctx, AD)

    def gl(n):
        x, w = np.polynomial.legendre.leggauss(n)
        phis = math.pi * (x + 1.0)
        total = ctx.alg.zero()
        for p, wi in zip(phis, w):
            U = G.expi(p)
            total = total + (U.adjoint() @ X @ U) * (math.pi * wi)
        return total

    n = order
    cur = gl(n)
    while True:
        nxt = gl(2 * n)
        change = (nxt - cur).max_abs()
        n *= 2
        cur = nxt
        if change <= tol:
            break
        if n >= max_order:
            raise ConvergenceError(f"J0 quadrature unstable at {n} nodes (change {change:.2e})")
    exact = _spectral_phase_integral(G, X)
    gap = (exact - cur).max_abs()
    return J0Report(cur, float(ctx.omega(cur).real), n, float(change), float(gap))


def _spectral_phase_integral(G: BlockOp, X: BlockOp):
    """int_0^{2pi} e^{-i phi G} X e^{i phi G} dphi, exactly, for Hermitian block-diagonal G."""
    eig = {}
    for (a, _), m in G.blocks.items():
        eig[a] = np.linalg.eigh(0.5 * (m + m.conj().T))
    out = {}
    for (a, b), m in X.blocks.items():
        ea, Va = eig.get(a, (np.zeros(m.shape[0]), np.eye(m.shape[0])))
        eb, Vb = eig.get(b, (np.zeros(m.shape[1]), np.eye(m.shape[1])))
        d = ea[:, None] - eb[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(np.abs(d) < 1e-13, 2 * math.pi, (1 - np.exp(-2j * math.pi * d)) / (1j * d))
        mt = Va.conj().T @ m @ Vb
        out[(a, b)] = Va @ (mt * f) @ Vb.conj().T
    return BlockOp(G.alg, out)


@dataclass
class PumpReport:
    sizes: list
    distances_to_J0: list
    cauchy: list
    charge_part_residual: float


def pumped_charge(ctx: HallContext, gamma=None, sizes=None, J0=None):
    """gamma(Qbar_{(AB)_N}) - Qbar_{(AB)_N} over sub-squares [-N, N]^2 of the window.

    gamma defaults to (beta^AD_{2pi})^{-1}, the r -> infinity form of theta_r.
    """
    betaAD = flux_automorphism(ctx, AD, 2 * math.pi)
    gamma = gamma or betaAD.inverse
    J0 = J0 if J0 is not None else current_J0(ctx, path="operator").J0
    if sizes is None:
        sizes = list(range(0, ctx.window.diameter + 1))
    diffs, dist = [], []
    for N in sizes:
        region = [x for x in ctx.realize(AB) if abs(x[0]) <= N and abs(x[1]) <= N]
        Qb = Qbar_operator(ctx, region)
        D = gamma(Qb) - Qb
        diffs.append(D)
        dist.append(float((D - J0).norm()))
    cauchy = [float((b - a).norm()) for a, b in zip(diffs, diffs[1:])]
    # charge part: gamma(Q_AB) - Q_AB against int (beta_phi^AD)^{-1}(i[Q_AB, Qbar_AD]) dphi
    Q = ctx.Q(AB)
    G = Qbar_operator(ctx, AD)
    lhs = gamma(Q) - Q
    rhs = _spectral_phase_integral(G, (Q @ G - G @ Q) * 1j)
    return PumpReport(list(sizes), dist, cauchy, float((lhs - rhs).norm()))
