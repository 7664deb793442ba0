import pytest

_RESULTS: dict[str, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(label: str, ok: bool, detail: str) -> None:
        line = f"{label:<4} {'PASS' if ok else 'FAIL'}  {detail}"
        _RESULTS[label] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_RESULTS, key=lambda s: int(s[1:])):
        terminalreporter.write_line(_RESULTS[label])
