import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from romcontrol.models import XYZParams, xyz_layout

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def xyz_params():
    return XYZParams((0.9, 1.0, 1.1), (0.2, 0.2, 0.2), 0.15)


@pytest.fixture
def small_layout(xyz_params):
    return xyz_layout(xyz_params, 5, 8)


# one line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
