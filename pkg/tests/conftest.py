import numpy as np
import pytest

from qbitnegf.core import BiasPoint, DeviceSpec, MaterialParams, Numerics
from qbitnegf.poisson import scf_iterate


@pytest.fixture(scope="session")
def spec():
    return DeviceSpec()


@pytest.fixture(scope="session")
def mat():
    return MaterialParams()


@pytest.fixture(scope="session")
def num():
    return Numerics()


@pytest.fixture(scope="session")
def init_scf(spec, mat, num):
    """Converged SCF at the initialization bias (V_D = 0)."""
    return scf_iterate(spec, mat, BiasPoint(1.15, 1.3, 0.0, 0.0), num)


@pytest.fixture(scope="session")
def operating_scf(spec, mat, num):
    """Converged SCF at the measurement operating point."""
    return scf_iterate(spec, mat, BiasPoint(1.15, 1.3, 0.042, 0.042), num)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
