"""Shared pytest plumbing.

The acceptance tests append one PASS/FAIL line per criterion to
``ACCEPTANCE_LINES``; the terminal-summary hook prints them at the end of
the run so the verdicts are visible even when per-test output is captured.
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
