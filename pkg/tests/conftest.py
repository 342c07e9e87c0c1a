import numpy as np
import pytest

from contactrrt import fixtures


@pytest.fixture(scope="session")
def tube_fx():
    return fixtures.get_fixture("straight_tube")


@pytest.fixture(scope="session")
def ybif_fx():
    return fixtures.get_fixture("y_bifurcation")


@pytest.fixture(scope="session")
def arch_fx():
    return fixtures.get_fixture("aortic_arch")


@pytest.fixture(scope="session")
def sphere():
    return fixtures.icosphere(radius=10.0, subdivisions=2)


@pytest.fixture(scope="session")
def capped_tube():
    return fixtures.tube(radius=5.0, length=40.0, n_around=24, n_along=10, capped=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance(request):
    """Record one summary line per acceptance criterion."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(label, passed, detail):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        lines.append(f"[{status}] {label}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
