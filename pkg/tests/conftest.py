import pytest

_criteria: list[tuple[str, str, float]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    criterion = item.get_closest_marker("criterion")
    if criterion is None:
        return
    failed = report.failed
    if report.when == "call" or (report.when == "setup" and (failed or report.skipped)):
        verdict = "PASS" if report.passed else "FAIL"
        _criteria.append((verdict, criterion.args[0], report.duration))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for verdict, name, seconds in _criteria:
        terminalreporter.write_line(f"{verdict}  {name}  ({seconds:.2f}s)")
