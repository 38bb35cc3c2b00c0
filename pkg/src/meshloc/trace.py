"""Movement-trace parsing, sessionization and synthetic trace generation.

A trace is a sequence of ``node_id,timestamp,ap_id`` records.  The reserved
AP token ``OFF`` marks a disconnection.  :func:`sessionize` turns the
records of one node into non-overlapping association sessions, closing any
association that stays silent for longer than the inactivity timeout.
"""

from __future__ import annotations

import csv
import io
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .errors import InvalidPattern, MalformedLine

log = logging.getLogger(__name__)

OFF = "OFF"
DAY = 86400
HOUR = 3600
# Monday 2003-01-06 00:00 local time on the Dartmouth campus.
DEFAULT_WEEK_ANCHOR = 1041829200
DEFAULT_INACTIVITY_TIMEOUT = 1200
DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


@dataclass(frozen=True, order=True)
class RawRecord:
    node_id: str
    timestamp: int
    ap_id: str

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        if not self.node_id or not self.ap_id:
            raise ValueError("node_id and ap_id must be non-empty")

    @property
    def is_off(self) -> bool:
        return self.ap_id == OFF


@dataclass(frozen=True, order=True)
class Session:
    node_id: str
    ap_id: str
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.ap_id == OFF:
            raise ValueError("a session cannot be attached to OFF")
        if self.start >= self.end:
            raise ValueError(f"empty session [{self.start}, {self.end})")

    @property
    def duration(self) -> int:
        return self.end - self.start

    def overlap(self, lo: int, hi: int) -> int:
        """Seconds of this session falling inside ``[lo, hi)``."""
        return max(0, min(self.end, hi) - max(self.start, lo))


@dataclass(frozen=True)
class TraceConfig:
    inactivity_timeout: int = DEFAULT_INACTIVITY_TIMEOUT
    week_anchor: int = DEFAULT_WEEK_ANCHOR
    timezone_offset: int = 0

    def __post_init__(self) -> None:
        if self.inactivity_timeout <= 0:
            raise ValueError("inactivity_timeout must be positive")

    @property
    def origin(self) -> int:
        """Epoch second of the first cycle boundary (Monday 00:00)."""
        return self.week_anchor + self.timezone_offset


# --------------------------------------------------------------------------
# parsing


def _is_number(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


def _lines(stream: IO[bytes] | IO[str] | Iterable[str | bytes]) -> Iterator[str]:
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw.rstrip("\r\n")


def parse_records(
    stream: IO[bytes] | IO[str] | Iterable[str | bytes],
    strict: bool = True,
    errors: list[MalformedLine] | None = None,
) -> list[RawRecord]:
    """Parse canonical ``node_id,timestamp,ap_id`` lines.

    A header is accepted on the first non-blank line and recognized by a
    non-numeric second field.  In strict mode the first malformed line raises
    :class:`MalformedLine`; otherwise malformed lines are skipped and appended
    to ``errors`` when given.
    """
    records: list[RawRecord] = []
    seen_content = False
    for lineno, line in enumerate(_lines(stream), start=1):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split(",")]
        if not seen_content:
            seen_content = True
            if len(fields) == 3 and not _is_number(fields[1]):
                continue
        problem = None
        if len(fields) != 3:
            problem = f"expected 3 fields, got {len(fields)}"
        elif not fields[0] or not fields[2]:
            problem = "empty identifier"
        elif not _is_number(fields[1]):
            problem = "non-numeric timestamp"
        elif int(fields[1]) < 0:
            problem = "negative timestamp"
        if problem is not None:
            err = MalformedLine(lineno, line, problem)
            if strict:
                raise err
            if errors is not None:
                errors.append(err)
            log.warning("%s", err)
            continue
        records.append(RawRecord(fields[0], int(fields[1]), fields[2]))
    return records


def write_records(records: Iterable[RawRecord], stream: IO[str], header: bool = True) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    if header:
        writer.writerow(["node_id", "timestamp", "ap_id"])
    for r in records:
        writer.writerow([r.node_id, r.timestamp, r.ap_id])


def records_to_csv(records: Iterable[RawRecord], header: bool = True) -> str:
    buf = io.StringIO()
    write_records(records, buf, header=header)
    return buf.getvalue()


def read_trace(path: str | Path, strict: bool = True,
               errors: list[MalformedLine] | None = None) -> list[RawRecord]:
    """Read a canonical CSV file, or every ``*.csv`` file of a directory."""
    path = Path(path)
    if path.is_dir():
        records: list[RawRecord] = []
        for p in sorted(path.glob("*.csv")):
            records.extend(read_trace(p, strict=strict, errors=errors))
        return records
    with path.open("rb") as fh:
        return parse_records(fh, strict=strict, errors=errors)


def import_dartmouth(directory: str | Path, strict: bool = True,
                     errors: list[MalformedLine] | None = None) -> list[RawRecord]:
    """Convert a directory of Dartmouth movement files (``<node>.mv``).

    Each line is ``<timestamp>\\t<ap_name>``; the node id is the file stem.
    """
    records: list[RawRecord] = []
    for path in sorted(Path(directory).glob("*.mv")):
        node = path.stem
        with path.open("r", encoding="utf-8", errors="replace") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(None, 1)
                if len(parts) != 2 or not _is_number(parts[0]) or int(parts[0]) < 0:
                    err = MalformedLine(lineno, f"{path.name}: {line}", "bad movement line")
                    if strict:
                        raise err
                    if errors is not None:
                        errors.append(err)
                    continue
                records.append(RawRecord(node, int(parts[0]), parts[1].strip()))
    return records


def group_by_node(records: Iterable[RawRecord]) -> dict[str, list[RawRecord]]:
    groups: dict[str, list[RawRecord]] = defaultdict(list)
    for r in records:
        groups[r.node_id].append(r)
    return dict(sorted(groups.items()))


# --------------------------------------------------------------------------
# sessionization


def sessionize(records: Sequence[RawRecord], cfg: TraceConfig = TraceConfig()) -> list[Session]:
    """Turn the records of a single node into association sessions.

    A run of records on one AP is one session.  It ends at the next record
    (another AP or ``OFF``) unless that record comes more than
    ``cfg.inactivity_timeout`` seconds after the last one seen, in which case
    the session ends at ``last + timeout``.  A trailing run is closed the same
    way.  Records sharing a timestamp keep only the last one.
    """
    if not records:
        return []
    node = records[0].node_id
    if any(r.node_id != node for r in records):
        raise ValueError("sessionize expects the records of a single node")

    ordered = sorted(records, key=lambda r: r.timestamp)
    dedup: list[RawRecord] = []
    for r in ordered:
        if dedup and dedup[-1].timestamp == r.timestamp:
            dedup[-1] = r
        else:
            dedup.append(r)

    timeout = cfg.inactivity_timeout
    sessions: list[Session] = []
    cur_ap: str | None = None
    start = last = 0
    for r in dedup:
        if cur_ap is not None:
            if r.timestamp - last > timeout:
                sessions.append(Session(node, cur_ap, start, last + timeout))
                cur_ap = None
            elif r.ap_id != cur_ap:
                sessions.append(Session(node, cur_ap, start, r.timestamp))
                cur_ap = None
            else:
                last = r.timestamp
                continue
        if not r.is_off:
            cur_ap = r.ap_id
            start = last = r.timestamp
    if cur_ap is not None:
        sessions.append(Session(node, cur_ap, start, last + timeout))
    return sessions


def sessionize_all(records: Iterable[RawRecord],
                   cfg: TraceConfig = TraceConfig()) -> dict[str, list[Session]]:
    return {node: sessionize(recs, cfg) for node, recs in group_by_node(records).items()}


def flatten_sessions(sessions: Sequence[Session],
                     cfg: TraceConfig = TraceConfig()) -> list[RawRecord]:
    """Records that sessionize back to ``sessions``.

    Long sessions get keep-alive records so the inactivity timeout never
    fires inside them.
    """
    out: list[RawRecord] = []
    for idx, s in enumerate(sessions):
        out.append(RawRecord(s.node_id, s.start, s.ap_id))
        t = s.start + cfg.inactivity_timeout
        while t < s.end:
            out.append(RawRecord(s.node_id, t, s.ap_id))
            t += cfg.inactivity_timeout
        nxt = sessions[idx + 1] if idx + 1 < len(sessions) else None
        if nxt is None or nxt.start != s.end:
            out.append(RawRecord(s.node_id, s.end, OFF))
    return out


def total_connected_time(sessions: Iterable[Session]) -> int:
    return sum(s.duration for s in sessions)


def trace_span(sessions_by_node: dict[str, list[Session]]) -> tuple[int, int] | None:
    starts = [s[0].start for s in sessions_by_node.values() if s]
    ends = [max(x.end for x in s) for s in sessions_by_node.values() if s]
    if not starts:
        return None
    return min(starts), max(ends)


# --------------------------------------------------------------------------
# synthetic traces


@dataclass(frozen=True)
class PatternEntry:
    """One recurring association: ``day`` in cycle, hours ``[start, end)``.

    When ``pingpong_ap`` is set the node alternates between ``ap`` and
    ``pingpong_ap`` every ``period`` seconds instead of staying on ``ap``.
    """

    day: int
    start_hour: float
    end_hour: float
    ap: str
    pingpong_ap: str | None = None
    period: int = 60


@dataclass
class WeeklyPattern:
    entries: list[PatternEntry] = field(default_factory=list)
    days_per_cycle: int = 7

    def validate(self) -> None:
        by_day: dict[int, list[PatternEntry]] = defaultdict(list)
        for e in self.entries:
            if not 0 <= e.day < self.days_per_cycle:
                raise InvalidPattern(f"day {e.day} outside the cycle")
            if not (0 <= e.start_hour < e.end_hour <= 24):
                raise InvalidPattern(f"bad hour range {e.start_hour}-{e.end_hour}")
            if e.pingpong_ap is not None and e.period <= 0:
                raise InvalidPattern("ping-pong period must be positive")
            if not e.ap or e.ap == OFF or e.pingpong_ap == OFF:
                raise InvalidPattern("pattern APs must be real access points")
            by_day[e.day].append(e)
        for day, items in by_day.items():
            items.sort(key=lambda e: e.start_hour)
            for a, b in zip(items, items[1:]):
                if b.start_hour < a.end_hour:
                    raise InvalidPattern(
                        f"overlapping ranges on day {day}: "
                        f"{a.start_hour}-{a.end_hour} and {b.start_hour}-{b.end_hour}")

    @classmethod
    def from_dict(cls, data: dict) -> "WeeklyPattern":
        days = int(data.get("days_per_cycle", 7))
        entries = []
        for item in data.get("entries", []):
            day = item["day"]
            if isinstance(day, str):
                day = DAY_NAMES.index(day[:3].title())
            entries.append(PatternEntry(
                day=int(day), start_hour=float(item["start"]), end_hour=float(item["end"]),
                ap=str(item["ap"]), pingpong_ap=item.get("pingpong"),
                period=int(item.get("period", 60))))
        return cls(entries, days)


def generate_synthetic(
    pattern: WeeklyPattern,
    weeks: int,
    jitter: int = 0,
    seed: int = 0,
    node_id: str = "n0",
    cfg: TraceConfig = TraceConfig(),
    first_week: int = 0,
    keepalive: int | None = None,
    dwell_jitter: int = 0,
) -> list[RawRecord]:
    """Repeat ``pattern`` for ``weeks`` cycles starting at cycle ``first_week``.

    Range boundaries are shifted by a uniform offset in ``[-jitter, jitter]``
    seconds; ping-pong dwell times by one in ``[-dwell_jitter, dwell_jitter]``.
    Steady associations are refreshed every ``keepalive`` seconds (default:
    half the inactivity timeout) so that sessionization keeps them whole.
    """
    if weeks < 1:
        raise InvalidPattern("weeks must be >= 1")
    if jitter < 0 or dwell_jitter < 0:
        raise InvalidPattern("jitter must be non-negative")
    pattern.validate()
    rng = random.Random(seed)
    keepalive = keepalive or max(1, cfg.inactivity_timeout // 2)
    cycle = pattern.days_per_cycle * DAY
    entries = sorted(pattern.entries, key=lambda e: (e.day, e.start_hour))

    out: list[RawRecord] = []
    for w in range(first_week, first_week + weeks):
        base = cfg.origin + w * cycle
        spans = []
        for e in entries:
            lo = base + e.day * DAY + round(e.start_hour * HOUR)
            hi = base + e.day * DAY + round(e.end_hour * HOUR)
            if jitter:
                lo += rng.randint(-jitter, jitter)
                hi += rng.randint(-jitter, jitter)
            spans.append([lo, hi, e])
        for prev, cur in zip(spans, spans[1:]):
            cur[0] = max(cur[0], prev[1])
        prev_end = None
        for lo, hi, e in spans:
            lo = max(lo, 0)
            if hi <= lo:
                continue
            if prev_end is not None and prev_end < lo:
                out.append(RawRecord(node_id, prev_end, OFF))
            if e.pingpong_ap is None:
                t = lo
                while t < hi:
                    out.append(RawRecord(node_id, t, e.ap))
                    t += keepalive
            else:
                t, flip = lo, False
                while t < hi:
                    out.append(RawRecord(node_id, t, e.pingpong_ap if flip else e.ap))
                    step = e.period
                    if dwell_jitter:
                        step = max(1, step + rng.randint(-dwell_jitter, dwell_jitter))
                    t += step
                    flip = not flip
            prev_end = hi
        if prev_end is not None:
            out.append(RawRecord(node_id, prev_end, OFF))

    # Drop OFF markers that coincide with the next association.
    cleaned: list[RawRecord] = []
    for r in out:
        if cleaned and cleaned[-1].timestamp == r.timestamp:
            cleaned[-1] = r
        else:
            cleaned.append(r)
    return cleaned
