import math

import numpy as np
import pytest

from lattice_hall import lemmas, models
from lattice_hall.hall import HallContext
from lattice_hall.interaction import Interaction
from lattice_hall.opalg import LocalOperator

Z = np.diag([1.0, -1.0]).astype(complex)


def test_anchoring_profile_recovers_rate():
    k = Interaction()
    for ell in range(0, 7):
        k.add(((0, ell),), LocalOperator([(0, ell)], math.exp(-2.0 * math.sqrt(ell)) * Z))
    prof, a, logC = lemmas.anchoring_profile(k, [(0, 0)])
    assert a == pytest.approx(2.0, abs=1e-10)
    assert prof[3] == pytest.approx(math.exp(-2.0 * math.sqrt(3)))


def test_anchoring_profile_fits_from_peak():
    k = Interaction()
    norms = [1e-3, 1e-2, 1e-1, 1e-2, 1e-3, 1e-4]
    for ell, v in enumerate(norms):
        k.add(((0, ell),), LocalOperator([(0, ell)], v * Z))
    _, a, _ = lemmas.anchoring_profile(k, [(0, 0)])
    assert a > 0
    flat = Interaction({((0, e),): LocalOperator([(0, e)], Z) for e in range(4)})
    assert lemmas.anchoring_profile(flat, [(0, 0)])[1] == pytest.approx(0.0, abs=1e-12)


def test_row_status():
    assert lemmas._row("x", 1e-9, 1e-8).status == "pass"
    assert lemmas._row("x", 1e-7, 1e-8).status == "fail"
    rep = lemmas.LemmaReport({}, [lemmas._row("a", 0, 0), lemmas._row("b", 1, 0)], 0.0)
    assert rep.failing == ["b"] and not rep.passed
    assert rep.to_json()["failing"] == ["b"]


def test_random_lemma_instances(rng):
    assert lemmas.anchored_commutator_row(rng, n=10).passed
    assert lemmas.anchored_auto_row(rng, n=5).passed


def test_inner_commutator_rows(rng):
    perp, para = lemmas.inner_commutator_rows(rng, sizes=(4, 8, 16), grow=(100, 200, 400))
    assert perp.passed
    assert para.status == "report"
    assert para.detail["verdict"] == "non-decaying"


def test_window_rows_on_small_window(pp_small, rng):
    samples = lemmas.sample_observables(pp_small, rng, 6)
    rows = lemmas.k_rows(pp_small, strips=False)[1:]
    rows += lemmas.state_rows(pp_small, samples)
    rows += lemmas.hall_rows(pp_small, samples)
    rows.append(lemmas.pert_row(pp_small, samples[:2]))
    failing = [r.name for r in rows if r.status == "fail"]
    assert not failing


def test_charge_rows_flag_violation(w22):
    m = models.inject_nonconserving(models.perturbed_paramagnet(w22), (0, 0), 0.2)
    ctx = HallContext.build(m)
    rows = {r.name: r for r in lemmas.charge_rows(ctx)}
    assert rows["charge_conservation"].status == "fail"
    assert rows["u1_invariance"].status == "fail"
    assert all(r.charge_dependent for r in rows.values())
