"""Trace-driven simulation of the anchor/locator location service.

Anchors keep each node's agenda (PUT/GET).  The locator named by the
agenda for the current slot learns where the node is through location
corrections, and answers correspondents' lookups.  Messages are counted,
not routed; an optional AP topology adds hop counts.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

import networkx as nx

from .agenda import Agenda, GridConfig
from .clustering import Clustering
from .errors import InvalidAgenda, WorkloadOutOfRange
from .planner import NodePlanner
from .trace import Session

log = logging.getLogger(__name__)

PUT = "PUT"
GET = "GET"
CORRECTION = "CORRECTION"
LOOKUP = "LOOKUP"
LOOKUP_REPLY = "LOOKUP_REPLY"
MESSAGE_KINDS = (PUT, GET, CORRECTION, LOOKUP, LOOKUP_REPLY)

FOUND = "found"
STALE = "stale"
UNKNOWN = "unknown"


def rendezvous_anchor(node_id: str, anchors: Sequence[str]) -> str:
    """Anchor AP for a node: highest hash of (node, anchor) wins."""
    if not anchors:
        raise ValueError("no anchor-capable AP")

    def score(ap: str) -> bytes:
        return hashlib.blake2b(f"{node_id}\x00{ap}".encode(), digest_size=8).digest()

    return max(anchors, key=score)


@dataclass
class MessageLog:
    counts: Counter = field(default_factory=Counter)
    per_week: dict[int, Counter] = field(default_factory=lambda: defaultdict(Counter))
    hops: Counter = field(default_factory=Counter)
    record: bool = False
    records: list[tuple[int, str, str, str]] = field(default_factory=list)
    # CORRECTION split by whether the node was inside the locator's cluster.
    corrections_by_kind: Counter = field(default_factory=Counter)
    topology: nx.Graph | None = None
    grid: GridConfig | None = None

    def send(self, kind: str, t: int = 0, src: str = "", dst: str = "") -> None:
        self.counts[kind] += 1
        if self.grid is not None:
            self.per_week[self.grid.week_of(t)][kind] += 1
        if self.record:
            self.records.append((t, kind, src, dst))
        if self.topology is not None and src in self.topology and dst in self.topology:
            try:
                self.hops[kind] += nx.shortest_path_length(self.topology, src, dst)
            except nx.NetworkXNoPath:
                pass

    def __getitem__(self, kind: str) -> int:
        return self.counts[kind]

    def to_json(self) -> dict:
        out = {
            "counts": {k: self.counts[k] for k in MESSAGE_KINDS},
            "corrections": {"inter_cluster": self.corrections_by_kind["inter_cluster"],
                            "intra_cluster": self.corrections_by_kind["intra_cluster"]},
            "per_week": {str(w): {k: c[k] for k in MESSAGE_KINDS} for w, c in sorted(self.per_week.items())},
        }
        if self.topology is not None:
            out["hops"] = {k: self.hops[k] for k in MESSAGE_KINDS}
        return out


@dataclass
class AnchorDirectory:
    anchors: list[str]
    agendas: dict[str, Agenda] = field(default_factory=dict)
    _assigned: dict[str, str] = field(default_factory=dict, repr=False)

    def anchor_of(self, node_id: str) -> str:
        if node_id not in self._assigned:
            self._assigned[node_id] = rendezvous_anchor(node_id, self.anchors)
        return self._assigned[node_id]


@dataclass
class LocatorState:
    # locator AP -> node -> (AP reported by the last correction, its time)
    entries: dict[str, dict[str, tuple[str, int]]] = field(default_factory=lambda: defaultdict(dict))
    # node -> AP it is associated with right now; a locator sees its own stations
    attached: dict[str, str] = field(default_factory=dict)
    # node -> locator currently holding its entry
    current_locator: dict[str, str] = field(default_factory=dict)

    def entry(self, locator: str, node: str) -> tuple[str, int] | None:
        return self.entries.get(locator, {}).get(node)

    def answer(self, locator: str, node: str) -> str | None:
        """What ``locator`` believes the node's AP is."""
        if self.attached.get(node) == locator:
            return locator
        e = self.entry(locator, node)
        return e[0] if e else None


def put_agenda(directory: AnchorDirectory, node: str, agenda: Agenda, log: MessageLog,
               now: int | None = None, src: str = "") -> AnchorDirectory:
    if not agenda.is_filled:
        raise InvalidAgenda(f"agenda of {node} has empty cells")
    if now is not None and agenda.valid_until <= now:
        raise InvalidAgenda(f"agenda of {node} expired at {agenda.valid_until}")
    directory.agendas[node] = agenda
    log.send(PUT, now or agenda.valid_from, src, directory.anchor_of(node))
    return directory


def get_agenda(directory: AnchorDirectory, node: str, log: MessageLog, now: int = 0,
               src: str = "") -> Agenda | None:
    log.send(GET, now, src, directory.anchor_of(node) if directory.anchors else "")
    return directory.agendas.get(node)


def correct_location(state: LocatorState, node: str, current_ap: str, slot: tuple[int, int],
                     agenda: Agenda, clustering: Clustering | None, log: MessageLog,
                     now: int = 0) -> LocatorState:
    """Register ``current_ap`` with the slot's locator when it needs to know.

    No message is needed while the node sits on the locator itself, nor when
    the locator's entry already names ``current_ap``.  Moving the node to a
    new locator drops its entry at the previous one.
    """
    locator = agenda.locator(*slot)
    previous = state.current_locator.get(node)
    if previous is not None and previous != locator:
        state.entries.get(previous, {}).pop(node, None)
    state.current_locator[node] = locator
    state.attached[node] = current_ap
    if current_ap == locator:
        return state
    entry = state.entry(locator, node)
    if entry is not None and entry[0] == current_ap:
        return state
    state.entries[locator][node] = (current_ap, now)
    members = None
    if clustering is not None and clustering.cluster_of(locator) is not None:
        members = clustering.cluster_of(locator).members
    else:
        members = agenda.locator_clusters.get(locator, frozenset([locator]))
    kind = "intra_cluster" if current_ap in members else "inter_cluster"
    log.corrections_by_kind[kind] += 1
    log.send(CORRECTION, now, current_ap, locator)
    return state


def lookup(state: LocatorState, directory: AnchorDirectory, cache: dict[str, Agenda],
           target: str, time: int, log: MessageLog, true_ap: str | None,
           cfg: GridConfig, source_ap: str = "") -> str:
    """Locate ``target`` on behalf of a correspondent holding ``cache``.

    Returns ``found`` when the locator's answer is the node's true AP,
    ``stale`` when it differs, and ``unknown`` when there is no agenda or the
    locator has nothing for the node.
    """
    agenda = cache.get(target)
    if agenda is None or not agenda.is_valid_at(time):
        agenda = get_agenda(directory, target, log, time, source_ap)
        if agenda is None or not agenda.is_valid_at(time):
            cache.pop(target, None)
            return UNKNOWN
        cache[target] = agenda
    _, day, slot = cfg.cell_of(time)
    locator = agenda.locator(day, slot)
    log.send(LOOKUP, time, source_ap, locator)
    answer = state.answer(locator, target)
    log.send(LOOKUP_REPLY, time, locator, source_ap)
    if answer is None:
        return UNKNOWN
    return FOUND if answer == true_ap else STALE


# --------------------------------------------------------------------------
# replay


@dataclass(frozen=True)
class ServiceConfig:
    k: float = 0.5
    clustering_enabled: bool = True
    fixpoint: bool = False
    history_weeks: int = 2
    inactivity_cycles: int = 2
    record_messages: bool = False


@dataclass(frozen=True)
class WorkloadItem:
    time: int
    source: str
    target: str


@dataclass
class LookupResult:
    time: int
    source: str
    target: str
    outcome: str
    true_ap: str | None


@dataclass
class SimulationResult:
    log: MessageLog
    lookups: list[LookupResult]
    directory: AnchorDirectory
    state: LocatorState

    def outcome_counts(self) -> dict[str, int]:
        c = Counter(r.outcome for r in self.lookups)
        return {k: c[k] for k in (FOUND, STALE, UNKNOWN)}

    def to_json(self) -> dict:
        per_week: dict[int, Counter] = defaultdict(Counter)
        grid = self.log.grid
        for r in self.lookups:
            if grid is not None:
                per_week[grid.week_of(r.time)][r.outcome] += 1
        return {
            "messages": self.log.to_json(),
            "lookups": {"total": len(self.lookups), **self.outcome_counts()},
            "lookups_per_week": {str(w): dict(c) for w, c in sorted(per_week.items())},
        }


class Ev(IntEnum):
    # tie order at equal timestamps
    SESSION_END = 0
    SESSION_START = 1
    SLOT_BOUNDARY = 2
    LOOKUP = 3


def read_workload(lines: Iterable[str]) -> list[WorkloadItem]:
    out = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ValueError(f"workload line {lineno}: expected time,source,target")
        if lineno == 1 and not parts[0].lstrip("-").isdigit():
            continue
        out.append(WorkloadItem(int(parts[0]), parts[1], parts[2]))
    return out


def run_simulation(sessions_by_node: Mapping[str, Sequence[Session]], cfg: GridConfig,
                   scfg: ServiceConfig = ServiceConfig(),
                   workload: Sequence[WorkloadItem] = (),
                   anchors: Sequence[str] | None = None,
                   topology: nx.Graph | None = None) -> SimulationResult:
    """Replay the trace through the location service.

    Agendas follow the same lifecycle as in the evaluation pipeline: a node
    bootstraps on its first association (or after ``inactivity_cycles`` idle
    cycles) and PUTs a freshly generated agenda at every cycle boundary.
    Every AP change and every slot change triggers a correction check.
    """
    spans = [(s.start, s.end) for sess in sessions_by_node.values() for s in sess]
    if not spans:
        if workload:
            raise WorkloadOutOfRange("empty trace")
        log_ = MessageLog(record=scfg.record_messages, topology=topology, grid=cfg)
        return SimulationResult(log_, [], AnchorDirectory(list(anchors or [])), LocatorState())
    t_lo = min(a for a, _ in spans)
    t_hi = max(b for _, b in spans)
    for item in workload:
        if not t_lo <= item.time <= t_hi:
            raise WorkloadOutOfRange(f"lookup at {item.time} outside trace span [{t_lo}, {t_hi}]")

    aps = sorted({s.ap_id for sess in sessions_by_node.values() for s in sess})
    directory = AnchorDirectory(list(anchors) if anchors else aps)
    state = LocatorState()
    mlog = MessageLog(record=scfg.record_messages, topology=topology, grid=cfg)

    first_week, last_week = cfg.week_of(t_lo), cfg.week_of(t_hi - 1) + 1
    # week -> node -> WeekPlan
    plans: dict[int, dict[str, object]] = defaultdict(dict)
    for node, sess in sessions_by_node.items():
        planner = NodePlanner(node, sess, cfg, k=scfg.k, clustering_enabled=scfg.clustering_enabled,
                              fixpoint=scfg.fixpoint, inactivity_cycles=scfg.inactivity_cycles)
        for plan in planner.plan(first_week, last_week, scfg.history_weeks):
            if plan.agenda is not None or plan.bootstrap is not None:
                plans[plan.week][node] = plan

    events: list[tuple[int, int, int, object]] = []
    seq = 0
    for node, sess in sessions_by_node.items():
        for s in sess:
            events.append((s.end, Ev.SESSION_END, seq, (node, s))); seq += 1
            events.append((s.start, Ev.SESSION_START, seq, (node, s))); seq += 1
    t = cfg.cycle_start(first_week)
    while t <= t_hi:
        events.append((t, Ev.SLOT_BOUNDARY, seq, None)); seq += 1
        t = cfg.next_slot_boundary(t)
    for item in workload:
        events.append((item.time, Ev.LOOKUP, seq, item)); seq += 1
    heapq.heapify(events)

    held: dict[str, Agenda] = {}
    snapshot: dict[str, Clustering | None] = {}
    pending_boot: dict[str, Agenda] = {}
    caches: dict[str, dict[str, Agenda]] = defaultdict(dict)
    results: list[LookupResult] = []

    def refresh(node: str, now: int) -> None:
        agenda = held.get(node)
        ap = state.attached.get(node)
        if agenda is None or ap is None or not agenda.is_valid_at(now):
            return
        _, day, slot = cfg.cell_of(now)
        correct_location(state, node, ap, (day, slot), agenda, snapshot.get(node), mlog, now)

    def activate_bootstrap(node: str, now: int) -> None:
        boot = pending_boot.get(node)
        if boot is None or now < boot.valid_from or node not in state.attached:
            return
        del pending_boot[node]
        held[node] = boot
        snapshot[node] = None
        put_agenda(directory, node, boot, mlog, now, state.attached[node])

    while events:
        now, kind, _, payload = heapq.heappop(events)
        if kind == Ev.SESSION_END:
            node, s = payload
            if state.attached.get(node) == s.ap_id:
                del state.attached[node]
        elif kind == Ev.SESSION_START:
            node, s = payload
            state.attached[node] = s.ap_id
            activate_bootstrap(node, now)
            refresh(node, now)
        elif kind == Ev.SLOT_BOUNDARY:
            week, day, slot = cfg.cell_of(now)
            if day == 0 and slot == 0:
                for node, plan in plans.get(week, {}).items():
                    if plan.agenda is not None and plan.bootstrap is None:
                        held[node] = plan.agenda
                        snapshot[node] = plan.clustering
                        put_agenda(directory, node, plan.agenda, mlog, now, state.attached.get(node, ""))
                    elif plan.agenda is None:
                        held.pop(node, None)
                    if plan.bootstrap is not None:
                        held.pop(node, None)
                        pending_boot[node] = plan.bootstrap
                        activate_bootstrap(node, now)
            for node in sorted(state.attached):
                refresh(node, now)
        else:
            item = payload
            cache = caches[item.source]
            outcome = lookup(state, directory, cache, item.target, now, mlog,
                             state.attached.get(item.target), cfg,
                             state.attached.get(item.source, ""))
            results.append(LookupResult(now, item.source, item.target, outcome,
                                        state.attached.get(item.target)))
    return SimulationResult(mlog, results, directory, state)
