import numpy as np
import pytest

from acfs.scenarios import DgpSpec


@pytest.fixture(scope="session")
def dgp1():
    return DgpSpec("DGP1")


@pytest.fixture(scope="session")
def dgp2():
    return DgpSpec("DGP2")


@pytest.fixture
def x_mid():
    """An interior feasible decision used across tests."""
    return np.array([0.10, 0.20, 0.15, 0.10, 0.05, 0.50])


def random_feasible(rng, m):
    from acfs.scenarios import feasible_project
    raw = rng.random((m, 6)) * np.array([0.7] * 5 + [1.0])
    return feasible_project(raw)


_ACCEPTANCE = pytest.StashKey()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def report(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
