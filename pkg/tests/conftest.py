import pytest

CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record a one-line verdict for the acceptance summary."""

    def record(name: str, ok: bool, detail: str = "") -> bool:
        CRITERIA.append(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
