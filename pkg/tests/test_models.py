import numpy as np
import pytest

from lattice_hall import models
from lattice_hall.geometry import LatticeWindow


@pytest.fixture
def W():
    return LatticeWindow(1)


def test_builtins_conserve_charge(W):
    for m in (models.paramagnet(W), models.perturbed_paramagnet(W), models.cdw(W)):
        assert m.charge_violation() < 1e-14
        assert m.algebra().conserving


def test_perturbed_paramagnet_translation_invariant(W):
    m = models.perturbed_paramagnet(W, lam=0.1, seed=3)
    bonds = models.bonds(W)
    horiz = [m.h.terms[tuple(sorted(b))].matrix for b in bonds if b[0][1] == b[1][1]]
    assert len(bonds) == 12
    assert all(np.allclose(x, horiz[0]) for x in horiz)
    assert m.range == 1


def test_nonconserving_injection(W):
    m = models.inject_nonconserving(models.perturbed_paramagnet(W), (1, 1), 0.2)
    assert m.charge_violation() == pytest.approx(0.2, rel=1e-12)  # ||[sigma_x, n]|| = 1
    assert not m.algebra().conserving
    with pytest.raises(ValueError):
        models.inject_nonconserving(models.paramagnet(W), (5, 5))


def test_rebuild_on_new_window(W):
    m = models.inject_nonconserving(models.perturbed_paramagnet(W, lam=0.2, seed=1), (1, 1))
    strip = LatticeWindow.rect((0, 0), (-2, 2))
    s = m.on(strip)
    assert s.window == strip
    assert s.params["lambda"] == 0.2
    assert ((0, 1),) in s.h.terms and s.charge_violation() > 0


def test_hamiltonian_hermitian(W):
    H, alg = models.hamiltonian(models.cdw(W))
    M = H.to_dense()
    assert np.allclose(M, M.conj().T)
    assert H.is_block_diagonal


def test_random_bond_properties(rng):
    m = models.random_conserving_bond(rng)
    N = np.diag([0, 1, 1, 2])
    assert np.allclose(m @ N, N @ m)
    assert np.linalg.norm(m, 2) == pytest.approx(1.0)
