import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lattice_hall.opalg import (
    LocalOperator,
    SupportError,
    WindowAlgebra,
    conditional_expectation,
    embed,
    local_decompose,
    op_commutator,
    random_local,
)

SITES = [(0, 0), (0, 1), (1, 0), (1, 1)]
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def test_support_order_is_canonical():
    A = LocalOperator([(1, 0), (0, 0)], np.kron(X, Z))
    assert A.support == ((0, 0), (1, 0))
    assert np.allclose(A.matrix, np.kron(Z, X))
    with pytest.raises(SupportError):
        LocalOperator([(0, 0), (0, 0)], np.eye(4))


def test_embed_and_commutator():
    A = LocalOperator([(0, 0)], X)
    B = LocalOperator([(0, 0)], Z)
    C = LocalOperator([(1, 0)], X)
    assert op_commutator(A, C).is_zero
    c = op_commutator(A, B)
    assert np.allclose(c.matrix, X @ Z - Z @ X)
    e = embed(C, [(0, 0), (1, 0)])
    assert np.allclose(e.matrix, np.kron(np.eye(2), X))
    with pytest.raises(SupportError):
        embed(e, [(0, 0)])


def test_conditional_expectation_of_product():
    A = LocalOperator([(0, 0), (1, 0)], np.kron(X, Z + 3 * np.eye(2)))
    E = conditional_expectation(A, [(0, 0)])
    assert E.support == ((0, 0),)
    assert np.allclose(E.matrix, 3 * X)


def test_window_local_matches_kron():
    alg = WindowAlgebra(SITES)
    A = LocalOperator([(0, 1), (1, 1)], np.kron(X, Z))
    full = alg.local(A).to_dense(natural=True)
    ref = np.kron(np.kron(np.eye(2), X), np.kron(np.eye(2), Z))
    assert np.allclose(full, ref)


def test_charge_sectors_and_blocks():
    alg = WindowAlgebra(SITES)
    assert alg.sizes == {0: 1, 1: 4, 2: 6, 3: 4, 4: 1}
    Q = alg.charge()
    assert Q.is_block_diagonal
    assert np.allclose(np.diag(Q.to_dense()), np.repeat([0, 1, 2, 3, 4], [1, 4, 6, 4, 1]))
    flat = WindowAlgebra(SITES, conserving=False)
    assert flat.sizes == {0: 16}


def test_phase_twist_matches_exponential(rng):
    alg = WindowAlgebra(SITES)
    A = alg.local(random_local([(0, 0), (1, 1)], rng))
    Q = alg.charge([(0, 0), (0, 1)])
    phi = 0.731
    ref = Q.expi(phi) @ A @ Q.expi(-phi)
    assert (A.phase_twist(Q, phi) - ref).max_abs() < 1e-14


def test_norm_and_expect(rng):
    alg = WindowAlgebra(SITES)
    A = alg.local(random_local([(0, 0), (0, 1)], rng, hermitian=True))
    assert A.norm() == pytest.approx(np.linalg.norm(A.to_dense(), 2))
    v = alg.basis_vector(5)
    assert A.expect(v) == pytest.approx(A.to_dense(natural=True)[5, 5])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sets(st.sampled_from(SITES), min_size=1, max_size=3))
def test_restrict_to_inverts_local(seed, sup):
    rng = np.random.default_rng(seed)
    alg = WindowAlgebra(SITES, conserving=False)
    A = random_local(sorted(sup), rng)
    back = alg.local(A).restrict_to(A.support)
    assert np.allclose(back.matrix, A.matrix, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_local_decomposition_telescopes(seed):
    rng = np.random.default_rng(seed)
    A = random_local([(0, 0), (1, 0), (1, 1)], rng)
    parts = local_decompose(A, (0, 0), 1)
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    assert np.allclose(embed(total, A.support).matrix, A.matrix, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_block_algebra_homomorphism(seed):
    rng = np.random.default_rng(seed)
    alg = WindowAlgebra(SITES, conserving=False)
    A = random_local([(0, 0), (0, 1)], rng)
    B = random_local([(0, 1), (1, 1)], rng)
    lhs = alg.local(A @ B).to_dense()
    rhs = (alg.local(A) @ alg.local(B)).to_dense()
    assert np.allclose(lhs, rhs, atol=1e-13)
    assert np.allclose(alg.local(A).adjoint().to_dense(), alg.local(A.adjoint()).to_dense())


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sets(st.sampled_from(SITES), min_size=1, max_size=3))
def test_expect_local_matches_window_operator(seed, sup):
    rng = np.random.default_rng(seed)
    alg = WindowAlgebra(SITES)
    psi = rng.normal(size=alg.dim) + 1j * rng.normal(size=alg.dim)
    psi /= np.linalg.norm(psi)
    A = random_local(sorted(sup), rng)
    assert alg.expect_local(psi, A) == pytest.approx(alg.local(A).expect(psi), abs=1e-13)
    rho = alg.reduced_density(psi, sorted(sup))
    assert np.trace(rho) == pytest.approx(1.0)
