import numpy as np
import pytest


def assert_intervals_close(got, want, tol):
    """Same number of intervals and every endpoint within ``tol``."""
    got = sorted(got)
    want = sorted(want)
    assert len(got) == len(want), f"{got} vs {want}"
    for (a, b), (c, d) in zip(got, want):
        assert abs(a - c) <= tol and abs(b - d) <= tol, f"{got} vs {want}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



# Outcome per acceptance criterion, printed as one PASS/FAIL line each.
_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or report.outcome != "passed":
        _ACCEPTANCE[report.nodeid.split("::")[-1]] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[2])):
        verdict = "PASS" if _ACCEPTANCE[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")
