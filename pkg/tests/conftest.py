ACCEPTANCE_LINES = {}


def record(key, passed, detail):
    """Store one acceptance line; printed in the terminal summary."""
    ACCEPTANCE_LINES[key] = f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {detail}"
    print(ACCEPTANCE_LINES[key])
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=str):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
