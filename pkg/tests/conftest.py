import pytest

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def acceptance():
    """Record the outcome of one acceptance criterion for the summary."""

    def record(number: int, passed: bool | None, detail: str) -> bool:
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        _ACCEPTANCE[number] = (status, detail)
        print(f"criterion {number}: {status} ({detail})")
        if passed is None:
            pytest.skip(detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
