from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import HealthCheck, settings

from checkin_reid.ingest import CheckIn, Dataset, Venue

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

EPOCH = datetime(2012, 1, 1, tzinfo=timezone.utc)


def make_dataset(histories, region="R", categories=None, coords=None):
    """Dataset from ``{user: [venue, ...]}`` with one hourly check-in per entry.

    ``categories`` maps venue -> category (default Food); ``coords`` maps
    venue -> (lat, lon) (default: a small diagonal line).
    """
    categories = categories or {}
    coords = coords or {}
    names = sorted({v for seq in histories.values() for v in seq} | set(categories) | set(coords))
    venues = {}
    for i, v in enumerate(names):
        lat, lon = coords.get(v, (33.70 + 0.001 * i, -84.40 + 0.001 * i))
        venues[v] = Venue(v, categories.get(v, "Food"), lat, lon)
    checkins = []
    for u in sorted(histories):
        for t, v in enumerate(histories[u]):
            lat, lon = venues[v].lat, venues[v].lon
            checkins.append(CheckIn(u, v, EPOCH + timedelta(hours=t), lat, lon, region))
    return Dataset(region, tuple(checkins), venues)


@pytest.fixture
def tiny():
    return make_dataset({"u1": ["a", "a", "b"], "u2": ["b", "c"], "u3": ["c"]})


# acceptance criteria record one line each; printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line[1])
