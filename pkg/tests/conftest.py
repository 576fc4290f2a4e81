import pytest

_CRITERIA = {}


@pytest.fixture
def record():
    """``record(number, ok, detail)`` files one acceptance line."""

    def _record(number, ok, detail):
        prev = _CRITERIA.get(number)
        ok = bool(ok) and (prev is None or prev[0])
        detail = detail if prev is None else f"{prev[1]}; {detail}"
        _CRITERIA[number] = (ok, detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
