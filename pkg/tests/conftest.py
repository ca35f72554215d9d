"""Collects one verdict line per acceptance criterion and prints them after the run.

Acceptance tests carry ``@pytest.mark.acceptance(number, title)`` and call
``criterion.check(ok, detail)``. A test that errors before reaching its
check is still reported, as a FAIL with the exception text.
"""

import pytest

VERDICTS: dict[int, tuple[bool, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion test")


class Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title

    def check(self, ok: bool, detail: str) -> None:
        VERDICTS[self.number] = (bool(ok), self.title, detail)
        print(f"[criterion {self.number}] {'PASS' if ok else 'FAIL'}: {self.title} ({detail})")
        assert ok, detail


@pytest.fixture()
def criterion(request):
    mark = request.node.get_closest_marker("acceptance")
    return Criterion(*mark.args)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark and rep.failed and mark.args[0] not in VERDICTS:
        msg = str(call.excinfo.value).splitlines()[0] if call.excinfo else rep.when
        VERDICTS[mark.args[0]] = (False, mark.args[1], f"error: {msg}")


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, title, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title} | {detail}")
