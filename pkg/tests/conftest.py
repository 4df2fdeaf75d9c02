import pytest

from cpmkit import _ext, raster


@pytest.fixture(params=sorted(_ext.available_backends()))
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    monkeypatch.setattr(raster, "kernels", _ext.available_backends()[request.param])
    return request.param


_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    if report.when not in ("setup", "call") or (report.when == "setup" and report.passed):
        return
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    failed = report.failed or _criteria.get(number, ("", ""))[1] == "FAIL"
    _criteria[number] = (title, "FAIL" if failed else "PASS")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        report.criterion = m.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, verdict = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {title}")
