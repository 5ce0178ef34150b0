from datetime import date, timedelta

import numpy as np
import pytest

from regretfolio.bundle import ingest, load_bundle
from regretfolio.market_data import PricePanel, with_cash
from regretfolio.synthetic import write_demo_inputs


def make_dates(n, start=date(2020, 1, 1)):
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return tuple(out)


def make_panel(columns, start=date(2020, 1, 1), cash=True):
    """Panel from ``{ticker: price list}``, cash prepended by default."""
    ids = tuple(columns)
    prices = np.column_stack([np.asarray(columns[a], dtype=float) for a in ids])
    panel = PricePanel(make_dates(prices.shape[0], start), ids, prices)
    return with_cash(panel) if cash else panel


@pytest.fixture(scope="session")
def demo_inputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo_inputs")
    write_demo_inputs(out, seed=0)
    return out


@pytest.fixture(scope="session")
def demo_bundle_dir(demo_inputs, tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle") / "b"
    ingest(demo_inputs / "prices.csv", out, demo_inputs / "sentiment.csv",
           demo_inputs / "yields.csv", demo_inputs / "sectors.csv")
    return out


@pytest.fixture(scope="session")
def demo_bundle(demo_bundle_dir):
    return load_bundle(demo_bundle_dir)


# one summary line per acceptance criterion
_acceptance: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.skipped:
        reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
        _acceptance[number] = ("SKIP", title, reason.removeprefix("Skipped: "))
    elif report.when == "call" or report.failed:
        _acceptance[number] = ("PASS" if report.passed else "FAIL", title, "")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        status, title, note = _acceptance[number]
        line = f"[{status}] criterion {number}: {title}"
        terminalreporter.write_line(line + (f" ({note})" if note else ""))
