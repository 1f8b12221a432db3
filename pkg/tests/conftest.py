import sys


def pytest_terminal_summary(terminalreporter):
    # acceptance criteria print one PASS/FAIL line each; echo them after
    # the run so they survive output capture
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERION_LINES", []) if mod else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
