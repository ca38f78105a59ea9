import pytest

_CRITERIA: dict[int, tuple[str, str, float]] = {}
_SETUP: dict[int, float] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    if rep.when == "setup":
        _SETUP[number] = rep.duration
        if rep.passed:
            return
    status = "PASS" if rep.passed else "FAIL"
    _CRITERIA[number] = (status, title, rep.duration + (_SETUP.get(number, 0.0) if rep.when == "call" else 0.0))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, secs = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title} ({secs:.1f} s)")
