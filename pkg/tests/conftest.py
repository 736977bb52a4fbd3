import re

import pytest


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def verdict(request):
    """Record and assert one acceptance line: ``[PASS] criterion N: title (detail)``."""

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
        request.config.acceptance_lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(re.search(r"criterion\s+(\d+)", s).group(1))):
        terminalreporter.write_line(line)
