"""Slotted locator agendas built from weekly mobility history.

The cycle (a week by default) is cut into ``days x slots`` cells.  For every
past cycle the node keeps a history table holding, per cell, the cluster it
spent most time in.  A new agenda takes, per cell, the current cluster if
the node stayed there the whole slot, otherwise the most frequent cluster
across the history (most recent wins ties).  Empty cells inherit the
locator of the closest preceding non-empty cell.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .clustering import Clustering
from .errors import EmptyHistory, UnmappedAp
from .trace import DAY, DEFAULT_WEEK_ANCHOR, HOUR, Session

log = logging.getLogger(__name__)

FULL_SLOT_EPSILON = 1


@dataclass(frozen=True)
class GridConfig:
    days: int = 7
    slots: int = 24
    k_max: int = 2
    validity_weeks: int = 1
    origin: int = DEFAULT_WEEK_ANCHOR

    def __post_init__(self) -> None:
        if self.days < 1 or self.slots < 1:
            raise ValueError("days and slots must be >= 1")
        if self.k_max < 0:
            raise ValueError("k_max must be >= 0")
        if self.validity_weeks < 1:
            raise ValueError("validity_weeks must be >= 1")
        if not 2 <= self.k_max <= 4:
            log.debug("k_max=%d outside the usual 2..4 range", self.k_max)

    @property
    def slot_hours(self) -> int:
        return math.ceil(24 / self.slots)

    @property
    def cycle_seconds(self) -> int:
        return self.days * DAY

    def slot_offset(self, day: int, slot: int) -> tuple[int, int]:
        """``[lo, hi)`` of a cell in seconds from the start of its cycle.

        The last slots of a day are clipped at midnight when ``slots``
        does not divide 24.
        """
        lo = day * DAY + min(slot * self.slot_hours * HOUR, DAY)
        hi = day * DAY + min((slot + 1) * self.slot_hours * HOUR, DAY)
        return lo, hi

    def slot_length(self, slot: int) -> int:
        lo, hi = self.slot_offset(0, slot)
        return hi - lo

    def cycle_start(self, week: int) -> int:
        return self.origin + week * self.cycle_seconds

    def week_of(self, t: int) -> int:
        return (t - self.origin) // self.cycle_seconds

    def cell_of(self, t: int) -> tuple[int, int, int]:
        """(week, day, slot) containing epoch second ``t``."""
        week = self.week_of(t)
        rel = t - self.cycle_start(week)
        day = rel // DAY
        slot = min((rel - day * DAY) // (self.slot_hours * HOUR), self.slots - 1)
        return week, int(day), int(slot)

    def slot_bounds(self, week: int, day: int, slot: int) -> tuple[int, int]:
        base = self.cycle_start(week)
        lo, hi = self.slot_offset(day, slot)
        return base + lo, base + hi

    def cells(self):
        for i in range(self.days):
            for j in range(self.slots):
                yield i, j

    def next_slot_boundary(self, t: int) -> int:
        week, day, slot = self.cell_of(t)
        return self.slot_bounds(week, day, slot)[1]


@dataclass(frozen=True)
class HistoryCell:
    cluster: int
    duration: int


@dataclass
class HistoryTable:
    week: int
    cells: list[list[HistoryCell | None]]

    @classmethod
    def empty(cls, week: int, cfg: GridConfig) -> "HistoryTable":
        return cls(week, [[None] * cfg.slots for _ in range(cfg.days)])

    def is_empty(self) -> bool:
        return all(c is None for row in self.cells for c in row)

    def filled(self) -> int:
        return sum(c is not None for row in self.cells for c in row)


def slot_occupancy(sessions: Sequence[Session], week: int, cfg: GridConfig,
                   ap_key=lambda ap: ap) -> dict[tuple[int, int], Counter]:
    """Seconds spent per key (AP by default) in every cell of one cycle."""
    lo_week = cfg.cycle_start(week)
    hi_week = cfg.cycle_start(week + 1)
    occ: dict[tuple[int, int], Counter] = {}
    for s in sessions:
        lo, hi = max(s.start, lo_week), min(s.end, hi_week)
        if lo >= hi:
            continue
        key = ap_key(s.ap_id)
        t = lo
        while t < hi:
            _, day, slot = cfg.cell_of(t)
            _, slot_hi = cfg.slot_bounds(week, day, slot)
            end = min(hi, slot_hi)
            occ.setdefault((day, slot), Counter())[key] += end - t
            t = end
    return occ


def history_from_occupancy(occupancy: Mapping[tuple[int, int], Counter], clustering: Clustering,
                           week: int, cfg: GridConfig) -> HistoryTable:
    """History table from per-AP cell occupancy (see :func:`slot_occupancy`)."""
    table = HistoryTable.empty(week, cfg)
    for (day, slot), per_ap in occupancy.items():
        per_cluster: Counter = Counter()
        for ap, secs in per_ap.items():
            c = clustering.cluster_of(ap)
            if c is None:
                raise UnmappedAp(ap)
            per_cluster[c.id] += secs
        cid, dur = min(per_cluster.items(), key=lambda kv: (-kv[1], kv[0]))
        table.cells[day][slot] = HistoryCell(cid, min(dur, cfg.slot_length(slot)))
    return table


def build_history(sessions: Sequence[Session], clustering: Clustering, week: int,
                  cfg: GridConfig) -> HistoryTable:
    """Prevalent cluster per cell for one cycle.

    The prevalent cluster has the largest cumulated association time inside
    the cell; ties go to the lowest cluster id.  Sessions are clipped to the
    cycle and split at slot boundaries.
    """
    return history_from_occupancy(slot_occupancy(sessions, week, cfg), clustering, week, cfg)


def maxoccur(candidates: Sequence[int | None]) -> int | None:
    """Most frequent value, ``candidates[0]`` being the most recent.

    Empty entries do not vote.  Ties go to the value seen most recently.
    """
    counts = Counter(c for c in candidates if c is not None)
    if not counts:
        return None
    best = max(counts.values())
    for c in candidates:
        if c is not None and counts[c] == best:
            return c
    raise AssertionError("unreachable")


def choose_cluster(cells: Sequence[HistoryCell | None], slot_length: int, k_max: int) -> int | None:
    """Cluster picked for one cell from its history, youngest first."""
    cells = list(cells[: k_max + 1])
    current = cells[0] if cells else None
    if current is not None and slot_length > 0 and current.duration >= slot_length - FULL_SLOT_EPSILON:
        return current.cluster
    return maxoccur([c.cluster if c is not None else None for c in cells])


def fill_backwards(grid: list[list[str | None]]) -> list[list[str]]:
    """Give every empty cell the value of the closest non-empty cell before it.

    The scan is cyclic over the whole grid, so Monday 00:00 inherits from the
    end of Sunday.
    """
    flat = [v for row in grid for v in row]
    n = len(flat)
    try:
        first = next(idx for idx, v in enumerate(flat) if v is not None)
    except StopIteration:
        raise EmptyHistory("no cell to extend") from None
    out = list(flat)
    carry = flat[first]
    for step in range(1, n + 1):
        idx = (first + step) % n
        if out[idx] is None:
            out[idx] = carry
        else:
            carry = out[idx]
    width = len(grid[0])
    return [out[r * width:(r + 1) * width] for r in range(len(grid))]


@dataclass(frozen=True)
class Agenda:
    node_id: str
    cells: tuple[tuple[str, ...], ...]
    generation_week: int
    validity_weeks: int
    valid_from: int
    valid_until: int
    origin: str = "generated"
    clustering_snapshot: str = ""
    # Cluster members as of generation, keyed by locator AP.
    locator_clusters: Mapping[str, frozenset[str]] = field(default_factory=dict, compare=False)

    def locator(self, day: int, slot: int) -> str:
        return self.cells[day][slot]

    def is_valid_at(self, t: int) -> bool:
        return self.valid_from <= t < self.valid_until

    @property
    def is_filled(self) -> bool:
        return all(cell for row in self.cells for cell in row)

    def locators(self) -> set[str]:
        return {ap for row in self.cells for ap in row}

    def to_json(self) -> dict:
        return {
            "node_id": self.node_id,
            "generation_week": self.generation_week,
            "validity_weeks": self.validity_weeks,
            "valid_from": self.valid_from,
            "valid_until": self.valid_until,
            "origin": self.origin,
            "grid": [list(row) for row in self.cells],
            "clustering_snapshot": self.clustering_snapshot,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Agenda":
        return cls(
            node_id=data["node_id"],
            cells=tuple(tuple(row) for row in data["grid"]),
            generation_week=int(data["generation_week"]),
            validity_weeks=int(data["validity_weeks"]),
            valid_from=int(data.get("valid_from", 0)),
            valid_until=int(data.get("valid_until", 0)),
            origin=data.get("origin", "generated"),
            clustering_snapshot=data.get("clustering_snapshot", ""),
        )


def generate_agenda(histories: Sequence[HistoryTable], clustering: Clustering, cfg: GridConfig,
                    node_id: str = "", generation_week: int | None = None) -> Agenda:
    """Build an agenda from history tables ordered youngest (age 0) first.

    The agenda covers the cycle right after ``histories[0]`` and stays valid
    for ``cfg.validity_weeks`` cycles.
    """
    if not histories:
        raise EmptyHistory("no history table")
    tables = list(histories[: cfg.k_max + 1])
    grid: list[list[str | None]] = []
    for i in range(cfg.days):
        row: list[str | None] = []
        for j in range(cfg.slots):
            cid = choose_cluster([t.cells[i][j] for t in tables], cfg.slot_length(j), cfg.k_max)
            row.append(None if cid is None else clustering.get(cid).locator)
        grid.append(row)
    filled = fill_backwards(grid)

    week = tables[0].week + 1 if generation_week is None else generation_week
    start = cfg.cycle_start(week)
    members = {c.locator: c.members for c in clustering.clusters}
    return Agenda(
        node_id=node_id,
        cells=tuple(tuple(r) for r in filled),
        generation_week=week,
        validity_weeks=cfg.validity_weeks,
        valid_from=start,
        valid_until=start + cfg.validity_weeks * cfg.cycle_seconds,
        origin="generated",
        clustering_snapshot=clustering.snapshot,
        locator_clusters=members,
    )


def bootstrap_agenda(first_ap: str, cfg: GridConfig, now: int, node_id: str = "") -> Agenda:
    """Uniform agenda on the first visited AP, valid until the end of the cycle."""
    week = cfg.week_of(now)
    row = (first_ap,) * cfg.slots
    return Agenda(
        node_id=node_id,
        cells=(row,) * cfg.days,
        generation_week=week,
        validity_weeks=1,
        valid_from=now,
        valid_until=cfg.cycle_start(week + 1),
        origin="bootstrap",
        locator_clusters={first_ap: frozenset([first_ap])},
    )


def should_rebootstrap(last_activity: int, now: int, inactivity_cycles: int = 2,
                       cfg: GridConfig = GridConfig()) -> bool:
    if inactivity_cycles < 1:
        raise ValueError("inactivity_cycles must be >= 1")
    return now - last_activity >= inactivity_cycles * cfg.cycle_seconds
