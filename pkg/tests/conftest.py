import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from covnoise import _backend

settings.register_profile(
    "covnoise", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("covnoise")


@pytest.fixture(params=_backend.available())
def backend(request):
    return request.param


@pytest.fixture
def a21():
    return np.array([[2.0, 1.0], [1.0, 2.0]])


def pytest_terminal_summary(terminalreporter):
    import acceptance_report

    if acceptance_report.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_report.lines():
            terminalreporter.write_line(line)
