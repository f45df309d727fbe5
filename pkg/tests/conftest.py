from __future__ import annotations

import os
import time

import pytest

from thermomdp.occupancy import DEFAULT_MASTER_SEED
from thermomdp.schedule import default_template, run_ensemble

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def default_ensemble():
    """The 52-profile, four-week default ensemble and its wall time in seconds."""
    template = default_template()
    t0 = time.perf_counter()
    traces = run_ensemble(template, 52, DEFAULT_MASTER_SEED, workers=os.cpu_count() or 1)
    return template, traces, time.perf_counter() - t0


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when == "teardown" or (call.when == "setup" and call.excinfo is None):
        return
    number = marker.args[0]
    ok = call.excinfo is None
    detail = dict(item.user_properties).get("detail", "")
    if not ok and not detail:
        detail = call.excinfo.exconly().splitlines()[0][:160]
    _ACCEPTANCE[number] = ("PASS" if ok else "FAIL", detail)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")
