"""Collects acceptance outcomes and prints one line per criterion."""

import pytest

_RESULTS = {}
_DETAILS = {}


@pytest.fixture
def detail(request):
    """Record a short human-readable measurement for the criterion under test."""
    marker = request.node.get_closest_marker("acceptance")

    def put(text):
        if marker is not None:
            _DETAILS[marker.args[0]] = text
    return put


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    cid = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        ok = rep.outcome == "passed"
        if rep.skipped:
            _RESULTS.setdefault(cid, "SKIP")
        else:
            _RESULTS[cid] = "PASS" if ok and _RESULTS.get(cid) != "FAIL" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: int(c[1:])):
        line = f"{cid} {_RESULTS[cid]}"
        if cid in _DETAILS:
            line += f": {_DETAILS[cid]}"
        terminalreporter.write_line(line)
