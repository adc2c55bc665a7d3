import pytest

from wns.lattice import LatticeWindow
from wns.rng import SeedSpec


@pytest.fixture
def window():
    return LatticeWindow(-20, 20, 0, 16)


@pytest.fixture
def seed():
    return SeedSpec(2024, 0)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[1].rstrip("abcdef:")), s)):
        terminalreporter.write_line(line)
