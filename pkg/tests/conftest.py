import os

import pytest


def pytest_collection_modifyitems(config, items):
    if os.environ.get("SQID_LONG") == "1":
        return
    skip = pytest.mark.skip(reason="opt-in: set SQID_LONG=1")
    for item in items:
        if "longrun" in item.keywords:
            item.add_marker(skip)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion and return ok."""

    def _report(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
