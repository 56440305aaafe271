import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lattice_hall import freefermion as ff
from lattice_hall.filter import build_filter

# 2 pi kappa on open L x L Hofstadter squares, flux 1/4, lowest band filled,
# g = 2/3 of the bulk gap, bulk sum with margin 4 (frozen from the single-particle route)
FROZEN_TWO_PI_KAPPA = {12: 0.8788392302674974, 16: 0.9867563001515879, 24: 1.0034668482533888}


def diophantine_hall(p, q, r):
    """Hall integer t_r of gap r from r = q s_r + p t_r with |t_r| <= q/2."""
    sols = [t for t in range(-q, q + 1) if (r - p * t) % q == 0 and abs(t) <= q / 2]
    return sols


def harper_gap_edges(q, n=64):
    """Band extrema of the flux 1/q Harper matrix built in a different gauge (x hopping phased)."""
    E = []
    for kx in np.linspace(0, 2 * math.pi, n, endpoint=False):
        for ky in np.linspace(0, 2 * math.pi / q, n // q, endpoint=False):
            M = np.zeros((q, q), dtype=complex)
            for y in range(q):
                M[y, y] = -2 * math.cos(kx + 2 * math.pi * y / q)
                nxt = (y + 1) % q
                hop = -np.exp(1j * ky * q) if nxt == 0 else -1.0
                M[nxt, y] += hop
                M[y, nxt] += np.conj(hop)
            E.append(np.linalg.eigvalsh(M))
    return np.array(E)


def test_chern_numbers_match_diophantine_rule():
    for q in (3, 4, 6):
        spectrum = ff.chern_spectrum(ff.hofstadter_bloch(1, q), q)
        cum = 0
        for bands, c in spectrum:
            cum += c
            r = max(bands) + 1
            if r < q:
                assert cum in diophantine_hall(1, q, r)
        assert sum(c for _, c in spectrum) == 0


def test_frozen_chern_lists():
    assert [c for _, c in ff.chern_spectrum(ff.hofstadter_bloch(1, 3), 3)] == [1, -2, 1]
    assert ff.chern_spectrum(ff.hofstadter_bloch(1, 4), 4) == [([0], 1), ([1, 2], -2), ([3], 1)]
    assert [c for _, c in ff.chern_spectrum(ff.hofstadter_bloch(1, 6), 6)] == [1, 1, -4, 1, 1]


def test_band_touching_detected():
    with pytest.raises(ff.BandTouchingError):
        ff.chern_number(ff.hofstadter_bloch(1, 4), 4, [1])


def test_bulk_gap_against_gauge_transformed_harper():
    m = ff.hofstadter(8, 1, 4)
    E = harper_gap_edges(4)
    top, bottom = E[:, 0].max(), E[:, 1].min()
    assert m.bulk_gap == pytest.approx(bottom - top, abs=1e-3)
    assert m.fermi_energy == pytest.approx(0.5 * (top + bottom), abs=1e-3)
    # closed form for flux 1/4: E_F = -sqrt(2 + sqrt 2)
    assert m.fermi_energy == pytest.approx(-math.sqrt(2 + math.sqrt(2)), abs=1e-9)


@pytest.mark.parametrize("L", [12, 16])
def test_frozen_hofstadter_conductance(L):
    m = ff.hofstadter(L, 1, 4)
    r = ff.sp_kappa(m, g=2 / 3 * m.bulk_gap, margin=4)
    assert r.two_pi_kappa == pytest.approx(FROZEN_TWO_PI_KAPPA[L], abs=1e-8)
    assert r.trace_PK < 1e-10


def test_time_reversal_flips_sign():
    m = ff.hofstadter(12, 1, 4)
    a = ff.sp_kappa(m, g=2 / 3 * m.bulk_gap).two_pi_kappa
    b = ff.sp_kappa(m.conjugate(), g=2 / 3 * m.bulk_gap).two_pi_kappa
    assert b == pytest.approx(-a, abs=1e-10)


def test_atomic_insulator_is_trivial():
    m = ff.atomic_insulator(10)
    assert abs(ff.sp_kappa(m).two_pi_kappa) < 1e-8


def test_gapless_rejected():
    m = ff.atomic_insulator(6, mu=0.0, t=0.0)
    with pytest.raises(ff.GaplessError):
        ff.sp_kappa(m)


def test_jordan_wigner_anticommutation():
    cs = ff.jordan_wigner(3)
    for i, a in enumerate(cs):
        for j, b in enumerate(cs):
            acomm = a @ b.conj().T + b.conj().T @ a
            assert np.allclose(acomm, np.eye(8) * (i == j))
            assert np.allclose(a @ b + b @ a, 0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**16))
def test_single_particle_matches_many_body(seed):
    m = ff.toy_model(seed=seed)
    if m.bulk_gap < 0.05:
        return
    F = build_filter(0.9 * m.bulk_gap)
    rep = ff.cross_backend_check(m, F)
    assert rep.k_residual < 1e-10
    assert rep.j_residual < 1e-10
    assert rep.density_residual < 1e-12
    assert rep.kappa_many_body == pytest.approx(rep.kappa_single_particle, abs=1e-10)
