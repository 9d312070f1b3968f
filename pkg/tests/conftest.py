import sys
from pathlib import Path

# make the brute-force oracles importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))

import pytest

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    ok, _ = _criteria.get(n, (True, title))
    if report.when == "call" or report.failed:
        _criteria[n] = (ok and not report.failed, title)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, title = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}")
