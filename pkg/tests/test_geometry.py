import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lattice_hall.geometry import (
    AB,
    AD,
    A,
    B,
    C,
    D,
    LAMBDA0,
    LAMBDA1,
    LAMBDA2,
    LAMBDA3,
    Cone,
    DecayFunction,
    LatticeWindow,
    boundary,
    diam,
    finite_region,
    halfplane_of_cone,
    linf_dist,
    set_dist,
)

coord = st.integers(-6, 6)
site = st.tuples(coord, coord)


def test_window_shapes():
    W = LatticeWindow(1)
    assert W.n_sites == 9 and W.diameter == 2
    R = LatticeWindow.rect((-1, 1), (-2, 1))
    assert R.n_sites == 12
    assert (1, -2) in R and (2, 0) not in R
    assert LatticeWindow.from_json(R.to_json()) == R
    with pytest.raises(ValueError):
        LatticeWindow.rect((1, 2), (0, 0))


def test_quadrants_partition_window():
    W = LatticeWindow(2)
    parts = [Q.realize(W) for Q in (A, B, C, D)]
    assert sum(len(p) for p in parts) == W.n_sites
    assert frozenset().union(*parts) == frozenset(W.sites)
    assert AB.realize(W) == A.realize(W) | B.realize(W)
    assert AD.realize(W) == A.realize(W) | D.realize(W)


def test_boundary_of_half_plane():
    W = LatticeWindow(2)
    dAB = boundary(AB, 1, W).realize(W)
    assert dAB == frozenset(x for x in W.sites if x[1] in (-1, 0))
    # a region filling the window has no boundary inside it
    assert boundary(finite_region("all", W.sites), 1, W).realize(W) == frozenset()
    with pytest.raises(ValueError):
        boundary(AB, 0, W)


def test_cone_membership_and_apex():
    assert (0, 3) in LAMBDA1
    assert (0, 0) not in LAMBDA1
    assert (2, 1) not in LAMBDA1
    assert (-3, 0) in LAMBDA2 and (3, 0) in LAMBDA3
    shifted = LAMBDA1.shifted(2)
    assert np.allclose(shifted.apex, (0.0, 2.0))
    assert (0, 2) not in shifted and (0, 3) in shifted


def test_halfplanes_of_reference_cones():
    W = LatticeWindow(2)
    assert halfplane_of_cone(LAMBDA1).realize(W) == AD.realize(W)
    assert halfplane_of_cone(LAMBDA2).realize(W) == AB.realize(W)
    assert halfplane_of_cone(LAMBDA1).name == "AD"
    assert halfplane_of_cone(LAMBDA3).name == "CD"


def test_forbidden_direction():
    for c in (LAMBDA1, LAMBDA2, LAMBDA3):
        assert c.avoids_forbidden_direction()
    assert not Cone((0, 0), 3 * math.pi / 2, math.pi / 8).avoids_forbidden_direction()
    # the wide cone spans [-pi/8, 9pi/8] and still misses [5pi/4, 7pi/4]
    assert LAMBDA0.avoids_forbidden_direction()
    assert not Cone((0, 0), math.pi / 2, 7 * math.pi / 8).avoids_forbidden_direction()
    with pytest.raises(ValueError):
        Cone((0, 0), 0.0, 0.0)


def test_decay_function():
    f = DecayFunction()
    assert f.non_increasing
    assert all(f.superpolynomial().values())
    assert np.all(np.diff(f(np.arange(50))) < 0)
    poly = DecayFunction(C=1.0, a=0.0, b=0.0)
    assert DecayFunction.from_json(f.to_json()) == f
    assert not any(poly.superpolynomial().values())


@given(site, site, site)
def test_linf_triangle(x, y, z):
    assert linf_dist(x, z) <= linf_dist(x, y) + linf_dist(y, z)
    assert linf_dist(x, y) == linf_dist(y, x)


@given(st.sets(site, min_size=1, max_size=6), st.sets(site, min_size=1, max_size=6))
def test_set_dist_is_min_pairwise(X, Y):
    assert set_dist(X, Y) == min(linf_dist(x, y) for x in X for y in Y)
    assert diam(X) == max(linf_dist(x, y) for x in X for y in X)


@given(st.floats(0, 2 * math.pi), st.floats(0.05, 1.2), site)
def test_cone_excludes_apex_and_is_open(theta, phi, x):
    c = Cone((0, 0), theta, phi)
    assert not c.contains((0, 0))
    if c.contains(x):
        ang = math.atan2(x[1], x[0])
        off = abs((ang - theta + math.pi) % (2 * math.pi) - math.pi)
        assert off < phi
