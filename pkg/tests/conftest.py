import numpy as np
import pytest

from semiclassical.symbols import HamiltonianSpec, PotentialSpec, Subprincipal


def morse_levels(h, n, depth=1.0, width=1.0):
    """Exact Morse levels for -h^2 d^2/dx^2 + D(1 - e^{-a x})^2."""
    m = np.asarray(n, dtype=float) + 0.5
    return 2.0 * h * width * np.sqrt(depth) * m - (h * width * m) ** 2


@pytest.fixture(scope="session")
def harmonic():
    return HamiltonianSpec.one_dim(PotentialSpec.harmonic(1.0))


@pytest.fixture(scope="session")
def quartic():
    return HamiltonianSpec.one_dim(PotentialSpec.polynomial([0, 0, 0, 0, 1], domain=(-4.0, 4.0)))


@pytest.fixture(scope="session")
def morse():
    return HamiltonianSpec.one_dim(PotentialSpec.morse(1.0, 1.0, domain=(-3.0, 30.0)))


@pytest.fixture(scope="session")
def harmonic_2d():
    return HamiltonianSpec.separable([PotentialSpec.harmonic(1.0), PotentialSpec.harmonic(1.0)])


@pytest.fixture
def constant_sigma():
    return Subprincipal.constant


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    def record(k, ok, detail):
        line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[k] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
