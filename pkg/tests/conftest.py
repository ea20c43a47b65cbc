from fractions import Fraction

import pytest
from hypothesis import settings

from polyclinch.clinching import ClinchRule
from polyclinch.market import example_market
from polyclinch.mechanisms import mechanism2

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def table_market():
    return example_market()


@pytest.fixture(scope="session")
def table_run(table_market):
    """Mechanism 2 on the two-by-two worked instance, epsilon 1, midpoint rule."""
    return mechanism2(table_market, Fraction(1), ClinchRule())


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
