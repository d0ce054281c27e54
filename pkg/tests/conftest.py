"""Per-criterion pass/fail summary for the acceptance suite."""
from collections import defaultdict

import pytest

_OUTCOMES = defaultdict(list)
_TITLES = {}
_DETAILS = defaultdict(list)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    _TITLES[number] = title
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _OUTCOMES[number].append(rep.passed)
        _DETAILS[number].extend(v for k, v in item.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        status = "PASS" if all(_OUTCOMES[number]) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {_TITLES[number]}")
        for d in _DETAILS[number]:
            terminalreporter.write_line(f"             {d}")
