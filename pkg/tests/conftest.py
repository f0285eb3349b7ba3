"""Shared fixtures: small seeded fleets and their rendered snapshot streams."""

from __future__ import annotations

import pytest

from asotrace.simulator.fleet import FleetConfig, generate_fleet
from helpers import render_all


@pytest.fixture(scope="session")
def small_fleet():
    return generate_fleet(FleetConfig(seed=11, workers=6, regulars=4, duration_days=3))


@pytest.fixture(scope="session")
def small_records(small_fleet):
    return render_all(small_fleet)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
