"""Exact window dynamics: spectra, Heisenberg and filtered evolution, Magnus propagation."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .filter import FilterFunction, w_from_time_samples
from .interaction import Interaction, is_anchored
from .opalg import BlockOp, WindowAlgebra, _canon, ball

DENSE_CAP = 2**13
DEGENERACY_TOL = 1e-8


class AssumptionError(RuntimeError):
    """A modelling assumption (unique gapped ground state, anchoring, ...) fails."""


class ConvergenceError(RuntimeError):
    pass


@dataclass
class SpectralData:
    alg: WindowAlgebra
    H: BlockOp
    evals: dict
    evecs: dict
    ground_sector: int
    ground_index: int
    ground_energy: float
    gap: float
    residual: float

    @property
    def ground(self):
        v = np.zeros(self.alg.dim, dtype=complex)
        v[self.alg.slices[self.ground_sector]] = self.evecs[self.ground_sector][:, self.ground_index]
        return v

    def omega(self, A: BlockOp):
        """Ground-state expectation."""
        blk = A.blocks.get((self.ground_sector, self.ground_sector))
        if blk is None:
            return 0.0j
        g = self.evecs[self.ground_sector][:, self.ground_index]
        return complex(np.vdot(g, blk @ g))

    def energies(self):
        return np.sort(np.concatenate(list(self.evals.values())))

    def to_eigen(self, A: BlockOp):
        return {(a, b): self.evecs[a].conj().T @ m @ self.evecs[b] for (a, b), m in A.blocks.items()}

    def from_eigen(self, blocks):
        return BlockOp(self.alg, {(a, b): self.evecs[a] @ m @ self.evecs[b].conj().T for (a, b), m in blocks.items()})

    def omega_vector(self, A: BlockOp):
        """A|Omega>."""
        return A.apply(self.ground)


def diagonalize(H: BlockOp, degeneracy_tol=DEGENERACY_TOL, gap_only=False):
    """Full per-sector eigendecomposition; rejects degenerate ground states."""
    alg = H.alg
    if alg.dim > DENSE_CAP and not gap_only:
        raise AssumptionError(f"window dimension {alg.dim} exceeds dense cap {DENSE_CAP}")
    evals, evecs, raw = {}, {}, {}
    for a, n in alg.sizes.items():
        blk = H.blocks.get((a, a), np.zeros((n, n), dtype=complex))
        blk = 0.5 * (blk + blk.conj().T)
        if gap_only and n > 64:
            e, v = spla.eigsh(blk, k=2, which="SA")
        else:
            e, v = np.linalg.eigh(blk)
        evals[a], evecs[a], raw[a] = e, v, blk
    hnorm = max(max(float(np.max(np.abs(e))) for e in evals.values()), 1e-300)
    resid = max(float(np.max(np.linalg.norm(raw[a] @ evecs[a] - evecs[a] * evals[a], axis=0))) for a in evals) / hnorm
    lows = sorted((evals[a][i], a, i) for a in evals for i in range(min(2, evals[a].size)))
    e0, a0, i0 = lows[0]
    e1 = lows[1][0] if len(lows) > 1 else math.inf
    gap = e1 - e0
    if gap <= degeneracy_tol:
        raise AssumptionError(f"ground state not unique within {degeneracy_tol:g} (gap {gap:.3e})")
    return SpectralData(alg, H, evals, evecs, a0, i0, float(e0), float(gap), resid)


def algebraic_gap_check(sd: SpectralData, samples):
    """min over samples of omega(A*[H, A]) / omega(A*A); requires omega(A) = 0."""
    ratios = []
    for A in samples:
        if abs(sd.omega(A)) > 1e-10:
            raise ValueError("algebraic gap check needs omega(A) = 0")
        AO = A.apply(sd.ground)
        num = np.vdot(AO, sd.H.apply(AO)) - sd.ground_energy * np.vdot(AO, AO)
        den = np.vdot(AO, AO).real
        if den > 1e-14:
            ratios.append(float(num.real / den))
    return min(ratios) if ratios else math.inf


def centred(sd: SpectralData, A: BlockOp):
    """A - omega(A)."""
    return A - sd.alg.identity() * sd.omega(A)


def heisenberg_evolve(sd: SpectralData, A: BlockOp, t):
    eb = sd.to_eigen(A)
    out = {}
    for (a, b), m in eb.items():
        ph = np.exp(1j * t * sd.evals[a])[:, None] * np.exp(-1j * t * sd.evals[b])[None, :]
        out[(a, b)] = m * ph
    return sd.from_eigen(out)


def filtered_evolution(sd: SpectralData, F: FilterFunction, A: BlockOp, kernel=None):
    """int W(t) tau_t(A) dt: matrix elements A_mn w(E_m - E_n) in the eigenbasis."""
    kernel = kernel or F.w
    eb = sd.to_eigen(A)
    out = {}
    for (a, b), m in eb.items():
        out[(a, b)] = m * kernel(sd.evals[a][:, None] - sd.evals[b][None, :])
    return sd.from_eigen(out)


def filtered_evolution_time(sd: SpectralData, F: FilterFunction, A: BlockOp, decimals=10):
    """Same map through the sampled W(t) grid instead of the Fourier data."""

    def kernel(om):
        flat = np.round(om.ravel(), decimals)
        uniq, inv = np.unique(flat, return_inverse=True)
        vals = w_from_time_samples(F, uniq)
        return vals[inv].reshape(om.shape)

    return filtered_evolution(sd, F, A, kernel=kernel)


def evolve_interaction(beta, h: Interaction, X, alg: WindowAlgebra, n_max=None, keep=None):
    """beta(h)_{B_k(x)} = sum_{S: x in S n X} beta(h_S)_{x,k} / |S n X|.

    beta maps a LocalOperator to a window BlockOp. Balls are realized inside
    the window; coinciding balls are summed. keep(support) -> bool skips
    decomposition terms whose ball is not needed (their partial traces are
    never formed).
    """
    X = set(tuple(x) for x in X)
    ok, offender = is_anchored(h, X)
    if not ok:
        raise AssumptionError(f"interaction not anchored in X (offending set {offender})")
    sites = alg.sites
    if n_max is None:
        xs = [s[0] for s in sites]
        ys = [s[1] for s in sites]
        n_max = max(max(xs) - min(xs), max(ys) - min(ys))
    out = Interaction(decay=h.decay, anchor=X, d=h.d)
    for S, op in h:
        hit = sorted(set(S) & X)
        B = beta(op)
        for x in hit:
            prev = None
            for k in range(n_max + 1):
                sup = _canon(ball(x, k, sites))
                if keep is not None and not keep(sup):
                    prev = None
                    continue
                cur = B.restrict_to(sup)
                if prev is None and k > 0:
                    inner = _canon(ball(x, k - 1, sites))
                    prev = B.restrict_to(inner)
                term = cur if k == 0 else cur - prev
                if np.any(np.abs(term.matrix) > 0):
                    out.add(sup, term.scaled(1.0 / len(hit)))
                prev = cur
    return out.pruned()


# ------------------------------------------------------------------ propagation


def _magnus_step(gen, s, h):
    r = math.sqrt(3.0) / 6.0
    H1 = gen(s + h * (0.5 - r))
    H2 = gen(s + h * (0.5 + r))
    M = (H1 + H2) * (h / 2.0) + (H1 @ H2 - H2 @ H1) * (1j * math.sqrt(3.0) / 12.0 * h * h)
    return M.expi(-1.0)


def propagate(gen, s0, s1, alg: WindowAlgebra, tol=1e-8, h0=None, U0=None, checkpoints=None):
    """U with dU/ds = -i H_s U, U(s0) = U0 (default 1); 4th-order Magnus, step doubling.

    tol is the local error per unit time. Returns (U(s1), stats).
    """
    U = U0 if U0 is not None else alg.identity()
    if s1 == s0:
        return U, {"steps": 0, "rejected": 0}
    direction = 1.0 if s1 > s0 else -1.0
    span = abs(s1 - s0)
    h = min(h0 or span / 8.0, span)
    s, steps, rejected = s0, 0, 0
    while direction * (s1 - s) > 1e-14:
        h = min(h, abs(s1 - s))
        step = direction * h
        full = _magnus_step(gen, s, step)
        half1 = _magnus_step(gen, s, step / 2)
        half2 = _magnus_step(gen, s + step / 2, step / 2)
        fine = half2 @ half1
        err = (fine - full).max_abs()
        if err <= tol * h or h < 1e-9:
            U = fine @ U
            s += step
            steps += 1
            if checkpoints is not None:
                checkpoints.append((s, U))
            grow = 2.0 if err == 0 else min(2.0, 0.9 * (tol * h / err) ** 0.25)
            h = max(h * grow, 1e-9)
        else:
            rejected += 1
            h = h * max(0.2, 0.9 * (tol * h / err) ** 0.25)
        if steps + rejected > 20000:
            raise ConvergenceError("Magnus propagation exceeded 20000 steps")
    return U, {"steps": steps, "rejected": rejected}


class Propagator:
    """U(s) for a fixed generator with checkpoint reuse; U(s0) = 1."""

    def __init__(self, gen, s0, alg, tol=1e-10):
        self.gen, self.alg, self.tol = gen, alg, tol
        self._s = [s0]
        self._U = [alg.identity()]

    def __call__(self, s):
        i = bisect.bisect_right(self._s, s) - 1
        if i < 0:
            i = 0
        if abs(self._s[i] - s) < 1e-15:
            return self._U[i]
        U, _ = propagate(self.gen, self._s[i], s, self.alg, tol=self.tol, U0=self._U[i])
        j = bisect.bisect_left(self._s, s)
        self._s.insert(j, s)
        self._U.insert(j, U)
        return U


def tdi_automorphism(U: BlockOp):
    """tau(A) = U^* A U for the propagator U of dU/ds = -iHU."""
    return lambda A: U.adjoint() @ A @ U


@dataclass
class PerturbationResult:
    V: BlockOp
    V_closed: BlockOp
    route_gap: float
    intertwining: float
    unitarity: float


def perturbation_unitary(gen_h, gen_hp, gen_D, s, alg, samples=(), tol=1e-10):
    """V_s with V_s tau^h_s(A) = tau^{h'}_s(A) V_s, where i[D_s, .] = delta_h - delta_h'.

    Two routes: V = U'^* U from the separate propagators, and the
    time-ordered exponential of G_s = tau^{h'}_s(D_s) = U'^* D_s U'.
    """
    U, _ = propagate(gen_h, 0.0, s, alg, tol=tol)
    Up = Propagator(gen_hp, 0.0, alg, tol=tol)
    closed = Up(s).adjoint() @ U

    def G(t):
        W = Up(t)
        return W.adjoint() @ gen_D(t) @ W

    V, _ = propagate(G, 0.0, s, alg, tol=tol)
    gap = (V - closed).max_abs()
    worst = 0.0
    Ups = Up(s)
    for A in samples:
        lhs = V @ (U.adjoint() @ A @ U)
        rhs = (Ups.adjoint() @ A @ Ups) @ V
        worst = max(worst, (lhs - rhs).norm() / max(A.norm(), 1e-300))
    unit = (V.adjoint() @ V - alg.identity()).max_abs()
    return PerturbationResult(V, closed, float(gap), float(worst), float(unit))
