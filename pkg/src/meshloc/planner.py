"""Week-by-week agenda lifecycle of a single node.

Replays one node's sessions cycle by cycle and decides, at each cycle
boundary, which agenda the node holds: none yet, a bootstrap agenda (first
association, or return after a long silence), or one generated from the
previous cycles.  Clusters are recomputed at every boundary over the whole
history seen so far.
"""

from __future__ import annotations

import bisect
from collections import Counter
from dataclasses import dataclass
from typing import Iterator, Sequence

from .agenda import (
    Agenda,
    GridConfig,
    HistoryTable,
    bootstrap_agenda,
    generate_agenda,
    history_from_occupancy,
    should_rebootstrap,
    slot_occupancy,
)
from .clustering import ApStat, Clustering, RoamingMatrix, cluster, singleton_clustering
from .errors import EmptyHistory
from .trace import Session


class RoamingAccumulator:
    """Incremental roaming matrix and AP statistics over a growing prefix.

    ``advance_to(t)`` accounts for everything that happened before ``t``; a
    session still running at ``t`` contributes only its elapsed part.
    """

    def __init__(self, sessions: Sequence[Session]) -> None:
        self.sessions = sorted(sessions, key=lambda s: (s.start, s.end))
        self.matrix = RoamingMatrix()
        self.stats: dict[str, ApStat] = {}
        self._next = 0
        self._open: Session | None = None
        self._open_counted = 0
        self._prev: Session | None = None

    def advance_to(self, t: int) -> None:
        if self._open is not None:
            s = self._open
            upto = min(s.end, t)
            self.stats[s.ap_id].cumulated_duration += upto - s.start - self._open_counted
            self._open_counted = upto - s.start
            if s.end <= t:
                self._open = None
        while self._next < len(self.sessions) and self.sessions[self._next].start < t:
            s = self.sessions[self._next]
            self._next += 1
            st = self.stats.setdefault(s.ap_id, ApStat())
            st.total_associations += 1
            if self._prev is not None and self._prev.end == s.start and self._prev.ap_id != s.ap_id:
                self.matrix.add(self._prev.ap_id, s.ap_id)
            self._prev = s
            upto = min(s.end, t)
            st.cumulated_duration += upto - s.start
            if s.end > t:
                self._open, self._open_counted = s, upto - s.start


@dataclass
class WeekPlan:
    week: int
    # Generated agenda covering this cycle, if the node holds one.
    agenda: Agenda | None
    # Set when the node (re)starts from a bootstrap agenda during this cycle.
    bootstrap: Agenda | None
    # Clustering computed at the start of this cycle (snapshot of ``agenda``).
    clustering: Clustering | None
    active: bool


class NodePlanner:
    """Agenda lifecycle for one node over ``[first_week, last_week)``."""

    def __init__(self, node_id: str, sessions: Sequence[Session], cfg: GridConfig,
                 k: float = 0.5, clustering_enabled: bool = True, fixpoint: bool = False,
                 inactivity_cycles: int = 2) -> None:
        self.node_id = node_id
        self.sessions = sorted(sessions, key=lambda s: s.start)
        self.cfg = cfg
        self.k = k
        self.clustering_enabled = clustering_enabled
        self.fixpoint = fixpoint
        self.inactivity_cycles = inactivity_cycles
        self._starts = [s.start for s in self.sessions]
        self._ends_max: list[int] = []
        m = None
        for s in self.sessions:
            m = s.end if m is None else max(m, s.end)
            self._ends_max.append(m)
        self._occ: dict[int, dict] = {}

    def week_sessions(self, week: int) -> list[Session]:
        lo, hi = self.cfg.cycle_start(week), self.cfg.cycle_start(week + 1)
        idx = bisect.bisect_left(self._starts, hi)
        out = []
        for i in range(idx - 1, -1, -1):
            s = self.sessions[i]
            if s.end <= lo:
                # sessions are disjoint and sorted, so nothing earlier overlaps
                break
            out.append(s)
        return out[::-1]

    def occupancy(self, week: int) -> dict[tuple[int, int], Counter]:
        if week not in self._occ:
            self._occ[week] = slot_occupancy(self.week_sessions(week), week, self.cfg)
        return self._occ[week]

    def clustering_at(self, acc: RoamingAccumulator, week: int) -> Clustering:
        acc.advance_to(self.cfg.cycle_start(week))
        if self.clustering_enabled:
            c = cluster(acc.matrix, acc.stats, self.k, fixpoint=self.fixpoint)
        else:
            c = singleton_clustering(acc.matrix, acc.stats, self.k)
        c.snapshot = f"{self.node_id}@{week}"
        return c

    def history(self, clustering: Clustering, week: int) -> HistoryTable:
        return history_from_occupancy(self.occupancy(week), clustering, week, self.cfg)

    def last_activity_before(self, t: int) -> int | None:
        idx = bisect.bisect_left(self._starts, t)
        if idx == 0:
            return None
        return min(self._ends_max[idx - 1], t)

    def plan(self, first_week: int, last_week: int,
             history_weeks: int | None = None) -> Iterator[WeekPlan]:
        """Yield one :class:`WeekPlan` per cycle in ``[first_week, last_week)``.

        ``history_weeks`` defaults to ``cfg.k_max + 1``.
        """
        span = history_weeks if history_weeks is not None else self.cfg.k_max + 1
        cfg = GridConfig(self.cfg.days, self.cfg.slots, span - 1, self.cfg.validity_weeks, self.cfg.origin)
        acc = RoamingAccumulator(self.sessions)
        history_start: int | None = None
        held: Agenda | None = None
        held_clustering: Clustering | None = None
        for w in range(first_week, last_week):
            clustering = None
            agenda = None
            if held is not None and held.valid_until > cfg.cycle_start(w):
                agenda = held
            elif history_start is not None:
                clustering = self.clustering_at(acc, w)
                tables = [self.history(clustering, w - age)
                          for age in range(1, span + 1) if w - age >= history_start]
                try:
                    agenda = generate_agenda(tables, clustering, cfg, self.node_id, generation_week=w)
                except EmptyHistory:
                    agenda = None
                held, held_clustering = agenda, clustering
            if agenda is not None and clustering is None:
                clustering = held_clustering

            week_sessions = self.week_sessions(w)
            boot = None
            if week_sessions:
                first = week_sessions[0]
                t0 = max(first.start, cfg.cycle_start(w))
                last = self.last_activity_before(first.start) if first.start >= cfg.cycle_start(w) else None
                stale = last is not None and should_rebootstrap(last, first.start, self.inactivity_cycles, cfg)
                if agenda is None or stale:
                    history_start = w
                    agenda = held = held_clustering = None
                    boot = bootstrap_agenda(first.ap_id, cfg, t0, self.node_id)
            yield WeekPlan(w, agenda, boot, clustering if agenda is not None else None, bool(week_sessions))
