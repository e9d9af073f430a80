import numpy as np
import pytest

from hyperjump.symbol_core import HyperbolicSystem, builtin_system, fit_sheet


def random_hermitian_system(rng, d=None, k=None):
    d = d or int(rng.integers(2, 4))
    k = k or int(rng.integers(1, 7))
    B = rng.standard_normal((d, k, k)) + 1j * rng.standard_normal((d, k, k))
    return HyperbolicSystem((B + np.conj(np.swapaxes(B, -1, -2))) / 2, True)


@pytest.fixture(scope="session")
def s1():
    return builtin_system("S1")


@pytest.fixture(scope="session")
def s2():
    return builtin_system("S2")


@pytest.fixture(scope="session")
def sheet1(s1):
    return fit_sheet(s1)


@pytest.fixture(scope="session")
def sheet2(s2):
    return fit_sheet(s2)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
