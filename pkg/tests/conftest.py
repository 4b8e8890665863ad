import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one verdict line for the acceptance summary."""
    def _add(criterion: int, ok: bool, detail: str, status: str | None = None) -> None:
        status = status or ("PASS" if ok else "FAIL")
        _LINES.append(f"criterion {criterion:>2}: {status:<16} {detail}")
    return _add


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
        terminalreporter.write_line(line)
