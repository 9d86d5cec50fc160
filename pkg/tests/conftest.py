import re

_ACCEPT = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_(a\d+)_", report.nodeid)
    if not m or report.when not in ("setup", "call"):
        return
    key = m.group(1).upper()
    if report.when == "setup" and report.passed:
        return
    detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
    if report.skipped:
        outcome = "SKIP"
    else:
        outcome = "PASS" if report.passed else "FAIL"
    _ACCEPT[key] = (outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPT:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPT, key=lambda k: int(k[1:])):
        outcome, detail = _ACCEPT[key]
        terminalreporter.write_line(f"{key:<4}{outcome:<5}{detail}")
