"""Collects acceptance outcomes and prints one line per criterion after the run."""

import pytest

_OUTCOMES: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or report.when != "call":
        return
    k, title = mark.args
    _OUTCOMES[k] = ("PASS" if report.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_OUTCOMES):
        status, title = _OUTCOMES[k]
        terminalreporter.write_line(f"criterion {k}: {status}  {title}")
