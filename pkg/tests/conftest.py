"""Shared pytest plumbing.

The acceptance tests append one line per criterion to ACCEPTANCE_LINES;
the summary hook prints them after the run so the verdicts are visible
even though pytest captures per-test stdout.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
