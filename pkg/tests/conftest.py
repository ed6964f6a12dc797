"""Collects acceptance outcomes and prints one line per criterion after the run."""
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    def _record(label, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
