import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines, key=lambda l: int(l.split("] ")[1].split(".")[0])):
            terminalreporter.write_line(line)
