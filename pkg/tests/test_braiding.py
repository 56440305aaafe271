import cmath
import math

import pytest

from lattice_hall import braiding, hall
from lattice_hall.geometry import LAMBDA1, Cone
from lattice_hall.lemmas import sample_observables


def test_paramagnet_trivial_statistics(para_ctx):
    rho = braiding.rho_lambda(para_ctx, LAMBDA1)
    assert (rho.unitary - para_ctx.alg.identity()).max_abs() < 1e-12
    assert braiding.theta_estimate(para_ctx).theta == pytest.approx(1.0, abs=1e-12)


def test_forbidden_cone_rejected(pp_small):
    with pytest.raises(ValueError):
        braiding.rho_lambda(pp_small, Cone((0, 0), 3 * math.pi / 2, math.pi / 8))


@pytest.mark.parametrize("name", ["pp_small", "cdw_small"])
def test_theta_is_a_phase(request, name):
    ctx = request.getfixturevalue(name)
    th = braiding.theta_estimate(ctx).theta
    assert abs(abs(th) - 1) < 1e-10
    kappa = hall.current_J(ctx).kappa
    assert abs(cmath.phase(th) + (2 * math.pi) ** 2 * kappa) < 1e-8


@pytest.mark.parametrize("p", [2, 3])
def test_theta_multiplicative(cdw_small, p):
    thp, ref, gap = braiding.theta_power_check(cdw_small, p)
    assert gap < 1e-10


def test_rho_is_automorphism(cdw_small, rng):
    rho = braiding.rho_lambda(cdw_small, LAMBDA1)
    A, B = sample_observables(cdw_small, rng, 2)
    assert (rho(A @ B) - rho(A) @ rho(B)).max_abs() < 1e-12
    assert (rho(A).adjoint() - rho(A.adjoint())).max_abs() < 1e-12
    assert (rho.inverse(rho(A)) - A).max_abs() < 1e-12


def test_rho_routes_agree(cdw_small, rng):
    rho = braiding.rho_lambda(cdw_small, LAMBDA1)
    obs = sample_observables(cdw_small, rng, 3)
    assert braiding.rho_route_gap(cdw_small, rho, obs, tol=1e-9) < 1e-5


def test_identity_and_gauge(cdw_small):
    assert braiding.identity_theta(cdw_small) == pytest.approx(1.0, abs=1e-10)
    assert braiding.gauge_invariance(cdw_small) < 1e-12


def test_intertwiner_small_window(cdw_small, rng):
    obs = sample_observables(cdw_small, rng, 3)
    rep = braiding.intertwiner_Vrt(cdw_small, 0, 0, obs, tol=1e-8)
    assert rep.unitarity < 1e-10
    assert rep.identity_residual < 1e-4
    assert rep.route_gap < 1e-6


def test_quantization_check():
    q = braiding.quantization_check(0.98, 1)
    assert q.nearest == 1 and q.residual == pytest.approx(0.02)
    assert braiding.quantization_check(0.5, 2).residual == pytest.approx(0.0)
    assert braiding.theta_phase(0.25) == pytest.approx(1j)
