import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "fraclab", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("fraclab")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240611))


# acceptance lines collected by test_acceptance.py, printed in the terminal summary
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
