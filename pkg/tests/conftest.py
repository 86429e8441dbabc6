import re

import numpy as np
import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_results: dict = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def measured(request):
    """Dict a test fills with measured values; echoed on the summary line."""
    values = {}
    request.node.user_properties.append(("measured", values))
    return values



def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m or (report.when != "call" and report.passed):
        return
    values = dict(report.user_properties).get("measured", {})
    detail = " ".join(f"{k}={v}" for k, v in values.items())
    status = "PASS" if report.passed else "FAIL"
    _results[int(m.group(1))] = (status, detail)



def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, detail = _results[n]
        terminalreporter.write_line(f"criterion {n}: {status} {detail}".rstrip())
