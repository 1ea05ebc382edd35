import numpy as np
import pytest

_criteria = {}



@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker('criterion')
    if marker is None or rep.when != 'call' and not rep.failed:
        return
    n = marker.args[0]
    ok = rep.passed or rep.skipped
    _criteria[n] = _criteria.get(n, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section('acceptance criteria')
    for n in sorted(_criteria):
        terminalreporter.write_line(f'criterion {n:2d}: {"PASS" if _criteria[n] else "FAIL"}')


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
