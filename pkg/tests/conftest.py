import pytest

_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.fixture
def acceptance(request):
    """Record a criterion verdict: ``acceptance(number, ok, detail)``."""
    table = request.config.stash[_ACCEPTANCE_KEY]

    def record(number: int, ok: bool, detail: str) -> bool:
        table[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_ACCEPTANCE_KEY, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        ok, detail = table[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {detail}")
