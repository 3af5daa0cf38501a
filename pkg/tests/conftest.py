import numpy as np
import pytest

from prgf.core import make_rng, normalize
from prgf.oracle import LinearOracle


@pytest.fixture
def rng():
    return make_rng(1234, 0)


def random_unit(dim, rng):
    return normalize(rng.standard_normal(dim))


def unit_at_cosine(g, c, rng):
    """Unit vector with cosine exactly ``c`` to ``g``."""
    gbar = normalize(g)
    r = rng.standard_normal(len(g))
    r -= (r @ gbar) * gbar
    return c * gbar + np.sqrt(1 - c * c) * normalize(r)


@pytest.fixture
def linear64():
    g = make_rng(7, 3).standard_normal(64)
    return LinearOracle(g)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """``acceptance(n, text, passed)`` records one criterion line for the terminal summary."""
    def record(n, text, passed):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {n}: {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
