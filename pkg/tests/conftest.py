from datetime import date, timedelta

import numpy as np
import pytest

from bvarcast.market_data import PriceSeries


def daily(start, n):
    return [start + timedelta(days=i) for i in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def simulate_var():
    """Simulate a VAR(p) with coefficient blocks ``coefs`` (p, N, N) and covariance ``sigma``."""

    def _sim(coefs, sigma, T, rng, burn=200):
        coefs = np.asarray(coefs, float)
        p, n, _ = coefs.shape
        chol = np.linalg.cholesky(sigma)
        y = np.zeros((T + burn, n))
        for t in range(p, T + burn):
            y[t] = sum(coefs[l] @ y[t - l - 1] for l in range(p)) + chol @ rng.standard_normal(n)
        return y[burn:]

    return _sim


def price_series(name, start, prices):
    return PriceSeries(name, daily(start, len(prices)), prices)


@pytest.fixture
def start_day():
    return date(2015, 8, 8)


# --- acceptance reporting ----------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = ""
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        detail = getattr(item, "criterion_detail", "") or detail
        _CRITERIA[n] = (status, item.name, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, name, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {name}  {detail}".rstrip())


@pytest.fixture
def criterion_detail(request):
    """Attach a one-line measurement summary to the criterion report."""

    def _set(text):
        request.node.criterion_detail = text
        print(text)

    return _set
