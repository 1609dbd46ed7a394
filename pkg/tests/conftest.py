import numpy as np
import pytest

from uams import MultiscaleField, ScaleVector, SolverConfig
from uams.problems import get_problem, henon_heiles_3scale

TWO_PI = 2.0 * np.pi


def field_from(func, d, n, name="test"):
    """Wrap ``func(theta, x)`` written with numpy broadcasting."""

    def rhs(theta, x):
        theta = np.asarray(theta, float)
        x = np.asarray(x, float)
        out = func(theta, x)
        lead = np.broadcast_shapes(theta.shape[:-1], x.shape[:-1])
        return np.broadcast_to(out, lead + (d,)).astype(float)

    return MultiscaleField(d=d, n=n, rhs=rhs, name=name)


@pytest.fixture
def sine_field():
    # x' = x + sin(2 pi theta_1)
    return field_from(lambda th, x: x + np.sin(TWO_PI * th[..., :1]), d=1, n=1, name="sine")


@pytest.fixture
def const_field():
    return field_from(lambda th, x: np.array([1.0, -2.0]) + 0.0 * x, d=2, n=2, name="const")


@pytest.fixture
def decay_field():
    # no fluctuations: f = -x for every phase
    return field_from(lambda th, x: -x + 0.0 * th[..., :1], d=2, n=3, name="decay")


@pytest.fixture(scope="session")
def hh3():
    return henon_heiles_3scale(0.1, 0.01)


@pytest.fixture(scope="session")
def hh3_decomp(hh3):
    return hh3.decomposition()


@pytest.fixture(scope="session")
def hh4():
    return get_problem("hh4-default")


@pytest.fixture(scope="session")
def hh4_decomp(hh4):
    return hh4.decomposition()


@pytest.fixture(scope="session")
def expsin():
    return get_problem("expsin-default")


@pytest.fixture(scope="session")
def expsin_decomp(expsin):
    return expsin.decomposition()


@pytest.fixture
def cfg():
    return SolverConfig()


@pytest.fixture
def scales2():
    return ScaleVector((0.1, 0.01))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
