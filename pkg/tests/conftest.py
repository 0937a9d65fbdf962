import pytest

from neutralgas import Ensemble, Geometry, KernelConfig, Species, build_system

ACCEPTANCE_LINES = []


def canonical_system(beta=0.2, activity=0.5, t=0.0, u0="zero"):
    """d=1 lattice, 4 sites, a=1, charges +-1 with z|Lambda| = 0.5."""
    return build_system([Species(1, activity), Species(-1, activity)],
                        Geometry.lattice(1, 1.0, 0.25), Ensemble(beta), KernelConfig(t, u0))


@pytest.fixture
def canonical():
    return canonical_system()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
