import re

CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_results: dict[int, tuple[str, str, list]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_runtest_logreport(report):
    m = CRITERION.search(report.nodeid)
    if not m:
        return
    n, name = int(m.group(1)), m.group(2).replace("_", " ")
    if report.when == "call" or report.outcome != "passed":
        if report.skipped:
            outcome = "SKIP"
        elif report.passed:
            outcome = "PASS"
        else:
            outcome = "FAIL"
        # a failure in setup or teardown overrides a passing call
        if n not in _results or outcome == "FAIL":
            metrics = [v for k, v in report.user_properties if k == "metric"]
            _results[n] = (outcome, name, metrics)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        outcome, name, metrics = _results[n]
        detail = f"  [{'; '.join(metrics)}]" if metrics else ""
        terminalreporter.write_line(f"criterion {n}: {outcome}  {name}{detail}")
