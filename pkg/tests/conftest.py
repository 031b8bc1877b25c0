"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "seen": False, "details": []})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["seen"] = True
        if report.outcome != "passed":
            entry["passed"] = False
    if report.when == "call":
        entry["details"].extend(value for key, value in item.user_properties if key == "measured")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        if not entry["seen"]:
            status = "SKIP"
        else:
            status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number} [{status}] {entry['title']}")
        for detail in entry["details"]:
            terminalreporter.write_line(f"    {detail}")
