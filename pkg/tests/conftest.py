from collections import OrderedDict

CRITERIA = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion this test belongs to")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            n, title = m.args
            CRITERIA.setdefault(n, {"title": title, "outcomes": []})


def pytest_runtest_logreport(report):
    if report.when != "call" and not report.failed:
        return
    for n, entry in CRITERIA.items():
        if f"criterion{n}" in report.keywords:
            entry["outcomes"].append(report.passed)


def pytest_itemcollected(item):
    m = item.get_closest_marker("criterion")
    if m:
        item.keywords[f"criterion{m.args[0]}"] = True


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, entry in sorted(CRITERIA.items()):
        outs = entry["outcomes"]
        if not outs:
            status = "NOT RUN"
        else:
            status = "PASS" if all(outs) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status:7s} {entry['title']}")
