"""Shared pytest hooks: collect and print acceptance-criterion lines.

The acceptance tests append one "[criterion NN] PASS/FAIL — ..." line per
criterion to ``ACCEPTANCE_LINES``; the terminal-summary hook replays them
at the end of the run so the one-line verdicts are visible even when
pytest captures per-test stdout.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
