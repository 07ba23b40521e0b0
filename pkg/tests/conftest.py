import pytest

_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion's verdict for the terminal summary.

    Usage: ``criterion(number, passed, detail)``; the test still asserts.
    """

    def record(number, passed, detail):
        key = (number, request.node.name)
        _ACCEPTANCE[key] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (number, name), (passed, detail) in sorted(_ACCEPTANCE.items()):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {number} ({name}): {detail}")
