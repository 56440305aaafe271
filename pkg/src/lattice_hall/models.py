"""Builtin many-body models on lattice windows (d = 2, q = diag(0, 1))."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .geometry import LatticeWindow, diam
from .interaction import ChargeInteraction, Interaction
from .opalg import LocalOperator, WindowAlgebra

SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)  # |0> -> |1>, raises q = diag(0, 1)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
NUMBER = np.diag([0.0, 1.0]).astype(complex)


@dataclass
class SpinModel:
    name: str
    window: LatticeWindow
    h: Interaction
    charge: ChargeInteraction
    params: dict = field(default_factory=dict)
    builder: Callable = field(default=None, repr=False, compare=False)

    def on(self, window):
        """The same model on another window."""
        if self.builder is None:
            raise ValueError(f"model {self.name} cannot be rebuilt on a new window")
        return self.builder(window)

    @property
    def sites(self):
        return self.window.sites

    @property
    def range(self):
        return max(1, max((diam(S) for S in self.h.terms), default=1))

    def charge_violation(self):
        """max_S ||[h_S, Q_S]||; zero iff [h_S, Q_Gamma] = 0 for every Gamma containing S."""
        worst = 0.0
        for S, op in self.h:
            Q = self.charge.total(S).matrix
            m = op.matrix
            worst = max(worst, float(np.linalg.norm(m @ Q - Q @ m, 2)))
        return worst

    def conserving(self, tol=1e-12):
        return self.charge_violation() <= tol

    def algebra(self):
        return WindowAlgebra(self.sites, d=self.charge.d, charges=self.charge.charges, conserving=self.conserving())

    def describe(self):
        return {"name": self.name, "params": self.params, "window": self.window.to_json()}


def bonds(window: LatticeWindow):
    out = []
    for x, y in window.sites:
        for nb in ((x + 1, y), (x, y + 1)):
            if nb in window:
                out.append(((x, y), nb))
    return out


def _onsite(window, coeff):
    h = Interaction()
    for x in window.sites:
        c = coeff(x)
        if c != 0:
            h.add((x,), LocalOperator([x], c * NUMBER))
    return h


def hopping_term(a, b, t=1.0, v=0.0):
    """t (s+_a s-_b + h.c.) + v n_a n_b, charge conserving."""
    hop = np.kron(SIGMA_PLUS, SIGMA_PLUS.conj().T)
    m = t * (hop + hop.conj().T) + v * np.kron(NUMBER, NUMBER)
    return LocalOperator([a, b], m)


def random_conserving_bond(rng):
    """Random Hermitian two-site term commuting with n_a + n_b, unit norm."""
    m = np.zeros((4, 4), dtype=complex)
    m[0, 0] = rng.normal()
    m[3, 3] = rng.normal()
    blk = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    m[1:3, 1:3] = 0.5 * (blk + blk.conj().T)
    return m / np.linalg.norm(m, 2)


def paramagnet(window):
    return SpinModel(
        "paramagnet", window, _onsite(window, lambda x: 1.0), ChargeInteraction(window.sites), builder=paramagnet
    )


def perturbed_paramagnet(window, lam=0.1, seed=0):
    """sum_x q_x plus lam times a random charge-conserving bond term.

    One random term per bond orientation, so the model is translation invariant.
    """
    rng = np.random.default_rng(seed)
    mh, mv = random_conserving_bond(rng), random_conserving_bond(rng)
    h = _onsite(window, lambda x: 1.0)
    for a, b in bonds(window):
        m = mh if a[1] == b[1] else mv
        h.add((a, b), LocalOperator([a, b], lam * m))
    return SpinModel(
        "perturbed_paramagnet",
        window,
        h,
        ChargeInteraction(window.sites),
        {"lambda": lam, "seed": seed},
        partial(perturbed_paramagnet, lam=lam, seed=seed),
    )


def cdw(window, lam=0.3, mu=1.0):
    """Staggered potential mu (-1)^{x+y} n_x with hopping and repulsion lam.

    The ground state fills the odd sublattice and is entangled for lam > 0.
    """
    h = _onsite(window, lambda x: mu * (-1.0) ** (x[0] + x[1]))
    for a, b in bonds(window):
        h.add((a, b), hopping_term(a, b, lam, lam))
    return SpinModel(
        "cdw", window, h, ChargeInteraction(window.sites), {"lambda": lam, "mu": mu}, partial(cdw, lam=lam, mu=mu)
    )


def inject_nonconserving(model: SpinModel, site=(1, 1), strength=0.2):
    """Adds strength * sigma^x at one site, breaking charge conservation.

    Rebuilt on another window, the term moves to the nearest site of that window.
    """
    site = tuple(site)
    if site not in model.window:
        raise ValueError(f"site {site} outside the window")
    h = model.h.copy()
    h.add((site,), LocalOperator([site], strength * SIGMA_X))
    params = dict(model.params, nonconserving={"site": list(site), "strength": strength})

    def builder(window):
        near = min(window.sites, key=lambda x: (max(abs(x[0] - site[0]), abs(x[1] - site[1])), x))
        return inject_nonconserving(model.on(window), near, strength)

    return SpinModel(model.name + "+sigma_x", model.window, h, model.charge, params, builder)


def custom(window, interaction: Interaction, charges=(0, 1)):
    for S in interaction.terms:
        for x in S:
            if x not in window:
                raise ValueError(f"term support {S} leaves the window")
    return SpinModel("custom", window, interaction, ChargeInteraction(window.sites, tuple(charges)))


def hamiltonian(model: SpinModel, alg: WindowAlgebra = None):
    alg = alg or model.algebra()
    return model.h.window_operator(alg), alg
