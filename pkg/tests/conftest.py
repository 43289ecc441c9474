from collections import defaultdict

import pytest

CRITERIA = {
    1: "sigma_omega calibration",
    2: "oscillating-activation fixed points",
    3: "edge-of-chaos recovery",
    4: "product std table",
    5: "Gaussianity of the constructed activations",
    6: "propagation contrast",
    7: "Mellin inversion failure",
    8: "independence pathology",
    9: "property suites",
    10: "limiting cases",
}

_outcomes = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes[marker.args[0]].append((item.nodeid.split("::", 1)[-1], report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        results = _outcomes[number]
        passed = sum(ok for _, ok in results)
        verdict = "PASS" if passed == len(results) else "FAIL"
        terminalreporter.write_line(
            f"criterion {number:2d} {verdict}  {CRITERIA.get(number, '')} ({passed}/{len(results)} checks)"
        )
        for name, ok in results:
            if not ok:
                terminalreporter.write_line(f"    failed: {name}")
