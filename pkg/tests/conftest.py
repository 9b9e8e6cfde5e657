import pytest

from pinned_string.analytic import ModelParams
from pinned_string.field import build_spectral_grid

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def colored():
    return ModelParams(alpha=1.0, spatial_dim=2, value_dim=1)


@pytest.fixture(scope="session")
def grid(colored):
    return build_spectral_grid(colored)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
