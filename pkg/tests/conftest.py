import pytest

_acceptance_lines: list[str] = []


@pytest.fixture
def acceptance_report():
    """One-line verdict per end-to-end gate, echoed in the run summary."""

    def report(name: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        _acceptance_lines.append(line)
        print(line, flush=True)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
