"""Collects the one-line acceptance verdicts and prints them after the run."""
from hypothesis import settings

# fixed example sequence so repeated runs report the same results
settings.register_profile("repeatable", derandomize=True)
settings.load_profile("repeatable")

VERDICTS = []


def record(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
