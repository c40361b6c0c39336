import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from augdens.models import default_grid, make_plummer_pair, power_df, power_df_density

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# f = E^a (L^2)^b for the four oracle DFs
ORACLES = {"one": (0.0, 0.0), "L2": (0.0, 1.0), "E2": (2.0, 0.0), "EL2": (1.0, 1.0)}


@pytest.fixture(scope="session")
def plummer():
    return make_plummer_pair()


@pytest.fixture(scope="session")
def small_grid():
    return default_grid(n_psi=6, n_r2=6)


@pytest.fixture(params=sorted(ORACLES), scope="session")
def oracle(request):
    a, b = ORACLES[request.param]
    return power_df(a, b), power_df_density(a, b)


def rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
