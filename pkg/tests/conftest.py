"""Shared pytest hooks.

Acceptance tests record one ``CRITERION n: PASS|FAIL ...`` line each; the
lines are printed together at the end of the session so that a plain
``pytest -v`` run shows the full acceptance table.
"""

ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
