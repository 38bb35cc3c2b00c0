import pytest

from meshloc.agenda import GridConfig
from meshloc.trace import DEFAULT_WEEK_ANCHOR, HOUR, DAY, PatternEntry, TraceConfig, WeeklyPattern

ORIGIN = DEFAULT_WEEK_ANCHOR


def at(week: int, day: int, hour: float) -> int:
    """Epoch second of ``hour`` on ``day`` of cycle ``week``."""
    return ORIGIN + week * 7 * DAY + day * DAY + round(hour * HOUR)


@pytest.fixture
def grid():
    return GridConfig()


@pytest.fixture
def tcfg():
    return TraceConfig()


def office_pattern(office="A", home="H") -> WeeklyPattern:
    entries = [PatternEntry(d, 9, 17, office) for d in range(5)]
    entries += [PatternEntry(d, 18, 23, home) for d in range(7)]
    return WeeklyPattern(entries)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, detail in sorted(RESULTS):
        terminalreporter.write_line(f"criterion {number:>2}: {verdict:<7} {detail}")
