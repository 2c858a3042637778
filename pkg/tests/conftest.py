import pytest

_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the summary is printed at the end of the run."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'} ({detail})"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
