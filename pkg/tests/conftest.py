from __future__ import annotations

import pytest

from interlacements.potential import build_green_table


@pytest.fixture(scope="session")
def table3():
    return build_green_table(3, 32)


@pytest.fixture(scope="session")
def table3_wide():
    return build_green_table(3, 64)


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
