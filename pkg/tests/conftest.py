import pytest

_acceptance_results: list[tuple[str, bool]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    criterion = getattr(getattr(item, "function", None), "_criterion", None)
    if criterion is not None:
        _acceptance_results.append((criterion, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in _acceptance_results:
        terminalreporter.write_line(f"[acceptance] {name}: {'PASS' if passed else 'FAIL'}")
