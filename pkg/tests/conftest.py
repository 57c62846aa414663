import pytest

_acceptance_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(cid, title): exit criterion, reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    cid, title = marker.args
    failed = report.failed or (report.when == "call" and report.skipped)
    prev = _acceptance_results.get(cid, (title, True))
    if report.when == "call" or failed:
        _acceptance_results[cid] = (title, prev[1] and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_acceptance_results, key=lambda c: int(c[2:])):
        title, ok = _acceptance_results[cid]
        terminalreporter.write_line(f"{cid:<5} {'PASS' if ok else 'FAIL'}  {title}")
