import pytest

from gammaforms.streams import RandomStream

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def stream():
    return RandomStream(20240601)


@pytest.fixture
def record_criterion():
    """Record the outcome of an acceptance criterion for the end-of-run table."""
    def record(number: int, passed: bool, summary: str):
        _CRITERIA[number] = (bool(passed), summary)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, summary = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {summary}")
