import pytest

# one line per acceptance criterion, printed after the run even without -s
ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def report():
    def _record(number: int, passed: bool, text: str) -> None:
        ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {text}"

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
