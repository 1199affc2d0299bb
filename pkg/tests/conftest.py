import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from diffpost.fixtures import TruthConfig, make_truth
from diffpost.gridfn import Grid
from diffpost.model import DiffusionParams
from diffpost.wavelets import build_basis

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    """Print a criterion line and keep it for the end-of-run summary."""
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid10():
    return Grid(10)


@pytest.fixture(scope="session")
def basis10(grid10):
    return build_basis(grid=grid10)


@pytest.fixture(scope="session")
def trivial10(grid10):
    return DiffusionParams.trivial(grid10)


@pytest.fixture(scope="session")
def truth10(grid10, basis10):
    return make_truth(TruthConfig(), grid10, basis10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
