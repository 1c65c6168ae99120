from __future__ import annotations

import numpy as np
import pytest

from evacwatch import synth
from evacwatch.timebins import Clock


@pytest.fixture(scope="session")
def clock() -> Clock:
    return Clock("America/Santiago")


@pytest.fixture(scope="session")
def golden():
    """The golden scenario, generated once per session."""
    return synth.generate_series(synth.golden_scenario())


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def golden_groups(golden):
    """Warned set and SEG assignment derived from the golden geography."""
    from evacwatch.geoalert import resolve_places, warned_towers
    from evacwatch.seg import assign_tower_seg, assign_zone_seg

    geo = golden.geography
    warned = warned_towers(resolve_places(geo.alerts, geo.gazetteer).points, geo.towers)
    return warned, assign_tower_seg(geo.towers, assign_zone_seg(geo.zones))


# ---------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per test marked ``criterion``

_CRITERIA: list[tuple[str, str, str]] = []


@pytest.fixture
def detail(request) -> dict:
    """Free-form measurements a criterion test wants echoed next to its verdict."""
    store: dict = {}
    request.node._criterion_detail = store
    return store


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when == "setup" and rep.passed) or rep.when == "teardown":
        return
    info = getattr(item, "_criterion_detail", {})
    text = ", ".join(f"{k}={v}" for k, v in info.items())
    _CRITERIA.append(("PASS" if rep.passed else "FAIL", marker.args[0], text))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for verdict, name, text in _CRITERIA:
        terminalreporter.write_line(f"{verdict}  {name}" + (f"  [{text}]" if text else ""))
