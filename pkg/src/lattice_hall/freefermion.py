"""Single-particle route for quadratic fermion models.

For H = sum c*_x h_xy c_y with quasi-free ground state of Fermi projector P,
filtered evolution and commutators of quadratic forms reduce to operations on
h-sized matrices: K_Gamma = c* k c with k = F_W(i[h, P_Gamma]) and
omega(c* j c) = tr(j P).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .filter import FilterFunction, build_filter


class GaplessError(ValueError):
    pass


@dataclass
class QuadraticModel:
    name: str
    sites: list
    h: np.ndarray
    fermi_energy: float
    bulk_gap: float
    bloch: object = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        if not np.allclose(self.h, self.h.conj().T, atol=1e-12):
            raise ValueError("single-particle Hamiltonian must be Hermitian")
        self.evals, self.evecs = np.linalg.eigh(self.h)
        self.X = np.array([s[0] for s in self.sites])
        self.Y = np.array([s[1] for s in self.sites])

    @property
    def n(self):
        return len(self.sites)

    def fermi_projector(self):
        occ = self.evals < self.fermi_energy
        V = self.evecs[:, occ]
        return V @ V.conj().T

    def mask(self, region):
        """Diagonal of P_Gamma for a predicate on sites."""
        return np.array([1.0 if region(s) else 0.0 for s in self.sites])

    def conjugate(self):
        """Time reversal: complex conjugate hopping."""
        b = None if self.bloch is None else (lambda kx, ky, f=self.bloch: f(-kx, -ky).conj())
        return QuadraticModel(
            self.name + "*", self.sites, self.h.conj(), self.fermi_energy, self.bulk_gap, b, dict(self.params)
        )


def hofstadter_bloch(p, q, t=1.0):
    """Bloch Hamiltonian on a q-site magnetic cell along x, periodic gauge."""
    a = p / q

    def H(kx, ky):
        M = np.zeros((q, q), dtype=complex)
        for x in range(q):
            xn = (x + 1) % q
            hop = -t * np.exp(1j * kx * q) if x + 1 == q else -t
            M[xn, x] += hop
            M[x, xn] += np.conj(hop)
            ph = -t * np.exp(2j * math.pi * a * x) * np.exp(1j * ky)
            M[x, x] += ph + np.conj(ph)
        return M

    return H


def bloch_bands(bloch, q, n=24):
    kxs = np.arange(n) * 2 * math.pi / (q * n)
    kys = np.arange(n) * 2 * math.pi / n
    E = np.empty((n, n, q))
    U = np.empty((n, n, q, q), dtype=complex)
    for i, kx in enumerate(kxs):
        for j, ky in enumerate(kys):
            E[i, j], U[i, j] = np.linalg.eigh(bloch(kx, ky))
    return E, U


def hofstadter(L, p=1, q=4, t=1.0, filled=1, grid=48):
    """Open L x L Hofstadter square with flux p/q per plaquette, lowest `filled` bands occupied.

    Sites x, y in [-L/2, L/2 - 1]; the y hop at column x carries e^{2 pi i p x / q}.
    The Fermi energy sits in the middle of the bulk gap above band `filled`.
    """
    if not 1 <= filled < q:
        raise ValueError("filled must be between 1 and q - 1")
    xs = np.arange(L) - L // 2
    sites = [(int(x), int(y)) for x in xs for y in xs]
    idx = {s: i for i, s in enumerate(sites)}
    n = len(sites)
    h = np.zeros((n, n), dtype=complex)
    for (x, y), i in idx.items():
        if (x + 1, y) in idx:
            j = idx[(x + 1, y)]
            h[j, i] += -t
            h[i, j] += -t
        if (x, y + 1) in idx:
            j = idx[(x, y + 1)]
            ph = np.exp(2j * math.pi * p * x / q)
            h[j, i] += -t * ph
            h[i, j] += -t * np.conj(ph)
    bloch = hofstadter_bloch(p, q, t)
    E, _ = bloch_bands(bloch, q, grid)
    top, bottom = E[..., filled - 1].max(), E[..., filled].min()
    gap = bottom - top
    return QuadraticModel(
        f"hofstadter_{p}/{q}", sites, h, 0.5 * (top + bottom), float(gap), bloch, {"L": L, "p": p, "q": q, "t": t}
    )


def atomic_insulator(L, mu=1.0, t=0.1):
    """Staggered on-site potential with weak real hopping; Chern-trivial."""
    xs = np.arange(L) - L // 2
    sites = [(int(x), int(y)) for x in xs for y in xs]
    idx = {s: i for i, s in enumerate(sites)}
    n = len(sites)
    h = np.zeros((n, n), dtype=complex)
    for (x, y), i in idx.items():
        h[i, i] = mu * (-1.0) ** (x + y)
        for nb in ((x + 1, y), (x, y + 1)):
            if nb in idx:
                h[idx[nb], i] = h[i, idx[nb]] = -t
    gap = 2 * mu - 8 * abs(t)
    return QuadraticModel("atomic_insulator", sites, h, 0.0, float(gap), None, {"L": L, "mu": mu, "t": t})


def sp_filtered(model: QuadraticModel, F: FilterFunction, a: np.ndarray):
    """a_mn w(e_m - e_n) in the single-particle eigenbasis."""
    V, e = model.evecs, model.evals
    at = V.conj().T @ a @ V
    return V @ (at * F.w(e[:, None] - e[None, :])) @ V.conj().T


def sp_k(model: QuadraticModel, F: FilterFunction, region):
    m = model.mask(region)
    a = 1j * (model.h * m[None, :] - m[:, None] * model.h)
    return sp_filtered(model, F, a)


@dataclass
class SPKappa:
    kappa: float
    two_pi_kappa: float
    full_trace: float
    trace_PK: float
    margin: int
    gap: float


def sp_kappa(model: QuadraticModel, g=None, margin=4, profile=None, F=None):
    """kappa = sum over bulk x of Re (j P)_xx, j = i[k_AB, k_AD].

    The sum runs over sites at distance >= margin from the open edges, where
    edge states inside the gap do not contribute.
    """
    if model.bulk_gap <= 1e-8:
        raise GaplessError(f"{model.name}: bulk gap {model.bulk_gap:.3e}")
    if F is None:
        F = build_filter(g if g is not None else (2.0 / 3.0) * model.bulk_gap, profile)
    P = model.fermi_projector()
    k1 = sp_k(model, F, lambda s: s[1] >= 0)
    k2 = sp_k(model, F, lambda s: s[0] >= 0)
    j = 1j * (k1 @ k2 - k2 @ k1)
    dens = np.real(np.einsum("xy,yx->x", j, P))
    X, Y = model.X, model.Y
    sel = (X >= X.min() + margin) & (X <= X.max() - margin) & (Y >= Y.min() + margin) & (Y <= Y.max() - margin)
    kap = float(dens[sel].sum())
    trPK = float(abs(np.trace(P @ k1)) + abs(np.trace(P @ k2)))
    return SPKappa(kap, 2 * math.pi * kap, float(dens.sum()), trPK, margin, F.gap)


# ------------------------------------------------------------------ Chern number


class BandTouchingError(ValueError):
    pass


def band_groups(E, tol=1e-6):
    """Split band indices into groups separated by a direct gap > tol everywhere."""
    nb = E.shape[-1]
    groups, cur = [], [0]
    for b in range(1, nb):
        if (E[..., b] - E[..., b - 1]).min() > tol:
            groups.append(cur)
            cur = [b]
        else:
            cur.append(b)
    groups.append(cur)
    return groups


def chern_number(bloch, q, bands, n=24, tol=1e-6):
    """Fukui-Hatsugai-Suzuki lattice Chern number of a band set (non-Abelian link for groups).

    Raises BandTouchingError if the set is not separated from the other bands.
    """
    E, U = bloch_bands(bloch, q, n)
    bands = list(bands)
    lo, hi = min(bands), max(bands)
    if lo > 0 and (E[..., lo] - E[..., lo - 1]).min() <= tol:
        raise BandTouchingError(f"band {lo} touches band {lo - 1}")
    if hi < q - 1 and (E[..., hi + 1] - E[..., hi]).min() <= tol:
        raise BandTouchingError(f"band {hi} touches band {hi + 1}")
    Ub = U[..., bands]

    def link(a, b):
        return np.linalg.det(np.swapaxes(a.conj(), -1, -2) @ b)

    U1 = Ub
    U2 = np.roll(Ub, -1, axis=0)
    U3 = np.roll(U2, -1, axis=1)
    U4 = np.roll(Ub, -1, axis=1)
    F = np.angle(link(U1, U2) * link(U2, U3) * link(U3, U4) * link(U4, U1))
    c = F.sum() / (2 * math.pi)
    return int(round(c)), float(abs(c - round(c)))


def chern_spectrum(bloch, q, n=24, tol=1e-6):
    """Chern number of every isolated band group; the total vanishes."""
    E, _ = bloch_bands(bloch, q, n)
    return [(g, chern_number(bloch, q, g, n, tol)[0]) for g in band_groups(E, tol)]


# ------------------------------------------------------------------ many-body embedding


def jordan_wigner(n):
    """Annihilators c_j = Z_0 ... Z_{j-1} a_j on n modes, a = |0><1|, Z = diag(1, -1)."""
    a = np.array([[0, 1], [0, 0]], dtype=complex)
    Z = np.diag([1.0, -1.0]).astype(complex)
    I = np.eye(2, dtype=complex)
    out = []
    for j in range(n):
        m = np.ones((1, 1), dtype=complex)
        for k in range(n):
            m = np.kron(m, Z if k < j else (a if k == j else I))
        out.append(m)
    return out


def quadratic_form(a, cs):
    """sum_xy a_xy c*_x c_y as a dense matrix."""
    dim = cs[0].shape[0]
    out = np.zeros((dim, dim), dtype=complex)
    for x in range(len(cs)):
        for y in range(len(cs)):
            if a[x, y] != 0:
                out += a[x, y] * cs[x].conj().T @ cs[y]
    return out


@dataclass
class CrossBackendReport:
    k_residual: float
    j_residual: float
    kappa_many_body: float
    kappa_single_particle: float
    density_residual: float


def cross_backend_check(model: QuadraticModel, F: FilterFunction):
    """Single-particle formulas against the many-body backend on a small mode set.

    The many-body Hamiltonian is c*(h - E_F)c in the Jordan-Wigner basis of the
    site order used by the window algebra; its ground state is the Fermi sea.
    """
    from .dynamics import diagonalize, filtered_evolution
    from .opalg import WindowAlgebra

    if model.n > 6:
        raise ValueError("cross-backend check is meant for at most 6 modes")
    alg = WindowAlgebra(model.sites, d=2, charges=(0, 1))
    order = [model.sites.index(s) for s in alg.sites]
    h = model.h[np.ix_(order, order)]
    sub = QuadraticModel(model.name, list(alg.sites), h, model.fermi_energy, model.bulk_gap)
    cs = jordan_wigner(sub.n)
    Hmb = quadratic_form(h - sub.fermi_energy * np.eye(sub.n), cs)
    sd = diagonalize(alg.to_block(Hmb))
    P = sub.fermi_projector()
    res_k, Ks, ks = 0.0, [], []
    for reg in (lambda s: s[1] >= 0, lambda s: s[0] >= 0):
        m = sub.mask(reg)
        Q = alg.to_block(quadratic_form(np.diag(m), cs))
        K = filtered_evolution(sd, F, (sd.H @ Q - Q @ sd.H) * 1j)
        k = sp_k(sub, F, reg)
        res_k = max(res_k, (K - alg.to_block(quadratic_form(k, cs))).max_abs())
        Ks.append(K)
        ks.append(k)
    J = (Ks[0] @ Ks[1] - Ks[1] @ Ks[0]) * 1j
    j = 1j * (ks[0] @ ks[1] - ks[1] @ ks[0])
    res_j = (J - alg.to_block(quadratic_form(j, cs))).max_abs()
    kmb = sd.omega(J).real
    ksp = float(np.real(np.trace(j @ P)))
    dens = 0.0
    for x in range(sub.n):
        for y in range(sub.n):
            op = alg.to_block(cs[x].conj().T @ cs[y])
            dens = max(dens, abs(sd.omega(op) - P[y, x]))
    return CrossBackendReport(float(res_k), float(res_j), float(kmb), ksp, float(dens))


def toy_model(sites=((-1, 0), (0, 0), (0, -1)), seed=0, fermi_energy=0.0):
    """Random complex hopping on a few modes, used for cross-backend checks."""
    rng = np.random.default_rng(seed)
    n = len(sites)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = 0.5 * (a + a.conj().T)
    e = np.linalg.eigvalsh(h)
    below = e[e < fermi_energy]
    above = e[e >= fermi_energy]
    gap = (above.min() - below.max()) if below.size and above.size else float(np.ptp(e))
    return QuadraticModel("toy", list(sites), h, fermi_energy, float(gap), None, {"seed": seed})
