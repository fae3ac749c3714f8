import pytest


def pytest_configure(config):
    config._criterion_lines = {}


@pytest.fixture
def verdict(request):
    """Record a PASS/FAIL line for an acceptance criterion and assert on it."""

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config._criterion_lines[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config._criterion_lines
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
