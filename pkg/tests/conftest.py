import numpy as np
import pytest

from lattice_hall import models
from lattice_hall.geometry import LatticeWindow
from lattice_hall.hall import HallContext


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks")


@pytest.fixture(scope="session")
def w22():
    return LatticeWindow.rect((-1, 0), (-1, 0))


@pytest.fixture(scope="session")
def w33():
    return LatticeWindow(1)


@pytest.fixture(scope="session")
def para_ctx(w33):
    return HallContext.build(models.paramagnet(w33))


@pytest.fixture(scope="session")
def pp_ctx(w33):
    return HallContext.build(models.perturbed_paramagnet(w33, lam=0.1, seed=0))


@pytest.fixture(scope="session")
def pp_small(w22):
    return HallContext.build(models.perturbed_paramagnet(w22, lam=0.1, seed=0))


@pytest.fixture(scope="session")
def cdw_small(w22):
    return HallContext.build(models.cdw(w22))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


CRITERIA: dict = {}


def record(n, ok, detail=""):
    CRITERIA[n] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
