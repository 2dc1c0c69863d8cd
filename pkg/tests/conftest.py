import numpy as np
import pytest

from sphere_qs.geometry import build_icosphere, sample_field


@pytest.fixture(scope="session")
def mesh4():
    return build_icosphere(4)


@pytest.fixture(scope="session")
def mesh5():
    return build_icosphere(5)


@pytest.fixture(scope="session")
def mesh6():
    return build_icosphere(6)


def coords(mesh):
    """Fields x, y, z on ``mesh``."""
    return tuple(sample_field(mesh, lambda x, y, z, i=i: (x, y, z)[i]) for i in range(3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
