import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "property: hypothesis invariant tests")
    config.addinivalue_line("markers", "slow: end-to-end training runs")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


WORKED = (5, 5, 5, 4, 4, 3, 5, 4, 4)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
