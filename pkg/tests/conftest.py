import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from alstokes.stokes import Grid, assemble, to_2x2

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_SYSTEMS = {}


def system(domain, level):
    """Assembled 3x3 systems are immutable, so one instance per mesh is shared."""
    key = (domain, level)
    if key not in _SYSTEMS:
        _SYSTEMS[key] = assemble(Grid.build(domain, level))
    return _SYSTEMS[key]


@pytest.fixture(scope="session")
def cavity2():
    return system("cavity", 2)


@pytest.fixture(scope="session")
def cavity3():
    return system("cavity", 3)


@pytest.fixture(scope="session")
def step2():
    return system("step", 2)


@pytest.fixture(scope="session")
def cavity2_2x2(cavity2):
    return to_2x2(cavity2)


def random_spd(rng, n, shift=1.0):
    G = rng.standard_normal((n, n))
    return G @ G.T + shift * n * np.eye(n)


def laplacian_2d(m, shift=0.0):
    """Five-point Laplacian on an m x m grid, optionally shifted by ``shift * I``."""
    import scipy.sparse as sp

    T = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m))
    I = sp.identity(m)
    return (sp.kron(I, T) + sp.kron(T, I) + shift * sp.identity(m * m)).tocsr()


# acceptance outcomes, filled by test_acceptance.py and printed after the run
ACCEPTANCE = {}
N_CRITERIA = 11


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        ok, detail = ACCEPTANCE.get(k, (False, "not evaluated"))
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
