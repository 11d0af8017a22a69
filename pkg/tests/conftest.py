"""Shared fixtures: the two-area design point and its designed scenario matrix."""
from __future__ import annotations

import pytest

from gforpod.design import DesignSpec
from gforpod.scenarios import ScenarioMatrix, build_two_area, run_scenarios

# filled by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def two_area():
    return build_two_area(0.1)


@pytest.fixture(scope="session")
def designed(two_area):
    """(matrix with both channels designed, {"P": report, "Q": report})."""
    return ScenarioMatrix(two_area, "GFOR2").with_designs(DesignSpec())


@pytest.fixture(scope="session")
def scenario_results(designed):
    matrix, _ = designed
    return {r.scenario: r for r in run_scenarios(matrix)}
