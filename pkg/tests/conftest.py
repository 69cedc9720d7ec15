"""Per-criterion reporting for the acceptance suite.

Tests marked ``@pytest.mark.criterion(n, "title")`` are grouped by ``n``; a
criterion passes only if every test in its group passes. Details recorded with
``record_property("detail", ...)`` are echoed next to the verdict.
"""

from collections import OrderedDict

_CRITERIA = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test verifies")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            entry = _CRITERIA.setdefault(number, {"title": title, "tests": {}, "details": []})
            entry["tests"][item.nodeid] = None


def pytest_runtest_logreport(report):
    for entry in _CRITERIA.values():
        if report.nodeid not in entry["tests"]:
            continue
        if report.when == "call" or report.outcome != "passed":
            prev = entry["tests"][report.nodeid]
            if prev != "failed":
                entry["tests"][report.nodeid] = report.outcome
        if report.when == "call":
            entry["details"] += [v for k, v in report.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        outcomes = list(entry["tests"].values())
        if any(o in (None, "skipped") for o in outcomes) and not any(o == "failed" for o in outcomes):
            verdict = "NOT RUN"
        else:
            verdict = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"criterion {number} [{verdict}] {entry['title']}" + (f" :: {detail}" if detail else ""))
