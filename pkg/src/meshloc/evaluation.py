"""Prediction-accuracy measurement of agendas against replayed traces.

For every active slot of a week the node either visited its locator's
cluster (a match) or not (a miss).  The error rate of a node-week is the
percentage of misses among active slots.  The helpers here aggregate those
rates into weekly histograms, history-length sweeps, per-day series, and
the two persistence analyses of raw behavior.
"""

from __future__ import annotations

import enum
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .agenda import Agenda, GridConfig, history_from_occupancy, slot_occupancy
from .clustering import Clustering, cluster_sessions
from .errors import NoActiveNodes, UnmappedAp
from .planner import NodePlanner, RoamingAccumulator
from .trace import DAY, Session

log = logging.getLogger(__name__)


class Match(str, enum.Enum):
    EXACT = "exact_cluster"
    ONE_HOP = "one_hop"
    MISS = "miss"
    INACTIVE = "skipped_inactive"


class Relaxation(str, enum.Enum):
    EXACT = "exact"
    ONE_HOP = "one_hop"


BUCKETS = ("0", "(0,25]", "(25,50]", "(50,75]", "(75,100]")


@dataclass(frozen=True)
class SlotJudgement:
    week: int
    day: int
    slot: int
    active: bool
    predicted_locator: str
    match: Match

    @property
    def is_miss(self) -> bool:
        return self.match is Match.MISS


@dataclass(frozen=True)
class PredictionReport:
    node_id: str
    week: int
    total_slots: int
    bad: int

    @property
    def a_er(self) -> float | None:
        if not self.total_slots:
            return None
        return 100.0 * self.bad / self.total_slots


def _locator_cluster(locator: str, clustering: Clustering, agenda: Agenda):
    c = clustering.cluster_of(locator)
    if c is not None:
        return c.id, c.members
    return None, agenda.locator_clusters.get(locator, frozenset([locator]))


def judge_occupancy(agenda: Agenda, occupancy: Mapping[tuple[int, int], Counter], week: int,
                    clustering: Clustering, cfg: GridConfig,
                    relaxation: Relaxation = Relaxation.EXACT,
                    strict: bool = False) -> list[SlotJudgement]:
    """Judge one week given the APs visited per cell (see :func:`judge_week`)."""
    relaxation = Relaxation(relaxation)
    out = []
    for day, slot in cfg.cells():
        locator = agenda.locator(day, slot)
        visited = [ap for ap, secs in occupancy.get((day, slot), {}).items() if secs > 0]
        if not visited:
            out.append(SlotJudgement(week, day, slot, False, locator, Match.INACTIVE))
            continue
        if strict:
            for ap in visited:
                if clustering.cluster_of(ap) is None:
                    raise UnmappedAp(ap)
        cid, members = _locator_cluster(locator, clustering, agenda)
        match = Match.MISS
        if any(ap in members for ap in visited):
            match = Match.EXACT
        elif relaxation is Relaxation.ONE_HOP and cid is not None:
            near = clustering.neighbours(cid)
            for ap in visited:
                c = clustering.cluster_of(ap)
                if c is not None and c.id in near:
                    match = Match.ONE_HOP
                    break
        out.append(SlotJudgement(week, day, slot, True, locator, match))
    return out


def judge_week(agenda: Agenda, sessions: Sequence[Session], clustering: Clustering,
               cfg: GridConfig, relaxation: Relaxation = Relaxation.EXACT,
               week: int | None = None, strict: bool = False,
               include_bootstrap: bool = False) -> list[SlotJudgement]:
    """Slot-by-slot verdicts for the cycle covered by ``agenda``.

    A slot is active when any session overlaps it.  It matches when a
    visited AP belongs to the locator's cluster, or, with one-hop
    relaxation, to a cluster adjacent to it.  Bootstrap agendas are not
    judged unless ``include_bootstrap`` is set.
    """
    if agenda.origin == "bootstrap" and not include_bootstrap:
        return []
    week = agenda.generation_week if week is None else week
    occ = slot_occupancy(sessions, week, cfg)
    return judge_occupancy(agenda, occ, week, clustering, cfg, relaxation, strict)


def a_er(judgements: Iterable[SlotJudgement]) -> float | None:
    active = bad = 0
    for j in judgements:
        if j.active:
            active += 1
            bad += j.is_miss
    if not active:
        return None
    return 100.0 * bad / active


def report(node_id: str, week: int, judgements: Iterable[SlotJudgement]) -> PredictionReport:
    judgements = list(judgements)
    active = [j for j in judgements if j.active]
    return PredictionReport(node_id, week, len(active), sum(j.is_miss for j in active))


def bucket_of(value: float) -> str:
    if value == 0:
        return BUCKETS[0]
    if value <= 25:
        return BUCKETS[1]
    if value <= 50:
        return BUCKETS[2]
    if value <= 75:
        return BUCKETS[3]
    return BUCKETS[4]


def weekly_histogram(reports: Iterable[PredictionReport], week: int | None = None) -> dict[str, float]:
    """Share of nodes per error bucket; nodes without active slots are ignored."""
    values = [r.a_er for r in reports if (week is None or r.week == week) and r.a_er is not None]
    if not values:
        raise NoActiveNodes(f"no node with active slots in week {week}")
    counts = Counter(bucket_of(v) for v in values)
    return {b: counts[b] / len(values) for b in BUCKETS}


def proportion_at_most(reports: Iterable[PredictionReport], threshold: float = 50.0) -> float | None:
    values = [r.a_er for r in reports if r.a_er is not None]
    if not values:
        return None
    return sum(v <= threshold for v in values) / len(values)


# --------------------------------------------------------------------------
# full pipeline


@dataclass
class NodeEvaluation:
    node_id: str
    reports: dict[Relaxation, list[PredictionReport]] = field(default_factory=dict)
    # (week, day) -> (active slots, misses), exact matching only
    per_day: dict[tuple[int, int], tuple[int, int]] = field(default_factory=dict)
    bootstrap_weeks: list[int] = field(default_factory=list)
    agendas: dict[int, Agenda] = field(default_factory=dict)
    clusterings: dict[int, Clustering] = field(default_factory=dict)
    last_agenda: Agenda | None = None


@dataclass(frozen=True)
class EvalConfig:
    history_weeks: int = 2
    k: float = 0.5
    inactivity_cycles: int = 2
    relaxations: tuple[Relaxation, ...] = (Relaxation.EXACT, Relaxation.ONE_HOP)
    clustering_enabled: bool = True
    fixpoint: bool = False
    # "snapshot": judge with the clustering the agenda was built from;
    # "current": with the clustering recomputed after the judged week.
    judge_with: str = "snapshot"
    keep_artifacts: bool = False


def clip_sessions(sessions: Iterable[Session], lo: int, hi: int) -> list[Session]:
    out = []
    for s in sessions:
        a, b = max(s.start, lo), min(s.end, hi)
        if a < b:
            out.append(s if (a, b) == (s.start, s.end) else Session(s.node_id, s.ap_id, a, b))
    return out


def evaluate_node(node_id: str, sessions: Sequence[Session], cfg: GridConfig, first_week: int,
                  last_week: int, ecfg: EvalConfig = EvalConfig()) -> NodeEvaluation:
    """Bootstrap, generate and judge agendas for weeks ``[first_week, last_week)``."""
    lo, hi = cfg.cycle_start(first_week), cfg.cycle_start(last_week)
    planner = NodePlanner(node_id, clip_sessions(sessions, lo, hi), cfg, k=ecfg.k,
                          clustering_enabled=ecfg.clustering_enabled, fixpoint=ecfg.fixpoint,
                          inactivity_cycles=ecfg.inactivity_cycles)
    result = NodeEvaluation(node_id, {r: [] for r in ecfg.relaxations})
    current = RoamingAccumulator(planner.sessions) if ecfg.judge_with == "current" else None
    for plan in planner.plan(first_week, last_week, ecfg.history_weeks):
        if plan.agenda is not None:
            result.last_agenda = plan.agenda
        if plan.bootstrap is not None:
            result.last_agenda = plan.bootstrap
            result.bootstrap_weeks.append(plan.week)
            if ecfg.keep_artifacts:
                result.agendas[plan.week] = plan.bootstrap
        if plan.agenda is None or plan.bootstrap is not None or not plan.active:
            continue
        clustering = plan.clustering
        if current is not None:
            clustering = planner.clustering_at(current, plan.week + 1)
        if ecfg.keep_artifacts:
            result.agendas[plan.week] = plan.agenda
            result.clusterings[plan.week] = plan.clustering
        occ = planner.occupancy(plan.week)
        for relax in ecfg.relaxations:
            js = judge_occupancy(plan.agenda, occ, plan.week, clustering, cfg, relax)
            result.reports[relax].append(report(node_id, plan.week, js))
            if relax is Relaxation.EXACT:
                for day in range(cfg.days):
                    day_js = [j for j in js if j.day == day and j.active]
                    if day_js:
                        result.per_day[(plan.week, day)] = (len(day_js), sum(j.is_miss for j in day_js))
    return result


def evaluate_all(sessions_by_node: Mapping[str, Sequence[Session]], cfg: GridConfig,
                 first_week: int, last_week: int,
                 ecfg: EvalConfig = EvalConfig()) -> dict[str, NodeEvaluation]:
    return {node: evaluate_node(node, sess, cfg, first_week, last_week, ecfg)
            for node, sess in sorted(sessions_by_node.items())}


def collect_reports(evals: Mapping[str, NodeEvaluation],
                    relaxation: Relaxation = Relaxation.EXACT) -> list[PredictionReport]:
    out = []
    for ev in evals.values():
        out.extend(ev.reports.get(relaxation, []))
    return sorted(out, key=lambda r: (r.week, r.node_id))


def weekly_summary(reports: Sequence[PredictionReport]) -> list[dict]:
    """Per-week histogram rows with active-node counts."""
    by_week: dict[int, list[PredictionReport]] = defaultdict(list)
    for r in reports:
        by_week[r.week].append(r)
    rows = []
    for week in sorted(by_week):
        active = [r for r in by_week[week] if r.a_er is not None]
        if not active:
            continue
        hist = weekly_histogram(active)
        rows.append({"week": week, "active_nodes": len(active), **hist,
                     "le50": proportion_at_most(active, 50.0)})
    return rows


def history_sweep(sessions_by_node: Mapping[str, Sequence[Session]], cfg: GridConfig,
                  history_lengths: Sequence[int], first_week: int, last_week: int,
                  ecfg: EvalConfig = EvalConfig()) -> dict[int, dict[int, float]]:
    """Per history length, the weekly share of nodes with error <= 50%."""
    out: dict[int, dict[int, float]] = {}
    for length in history_lengths:
        if length < 1:
            raise ValueError("history lengths are whole weeks >= 1")
        sub = EvalConfig(length, ecfg.k, ecfg.inactivity_cycles, (Relaxation.EXACT,),
                         ecfg.clustering_enabled, ecfg.fixpoint, ecfg.judge_with)
        evals = evaluate_all(sessions_by_node, cfg, first_week, last_week, sub)
        out[length] = {row["week"]: row["le50"] for row in weekly_summary(collect_reports(evals))}
    return out


def per_day_accuracy(evals: Mapping[str, NodeEvaluation],
                     threshold: float = 50.0) -> dict[int, dict[int, float]]:
    """week -> day -> share of nodes whose error on that day is <= threshold."""
    tallies: dict[tuple[int, int], list[int]] = defaultdict(lambda: [0, 0])
    for ev in evals.values():
        for (week, day), (active, bad) in ev.per_day.items():
            t = tallies[(week, day)]
            t[0] += 1
            t[1] += (100.0 * bad / active) <= threshold
    out: dict[int, dict[int, float]] = defaultdict(dict)
    for (week, day), (n, ok) in sorted(tallies.items()):
        out[week][day] = ok / n
    return dict(out)


# --------------------------------------------------------------------------
# behavior persistence


@dataclass
class PersistenceMatrix:
    days: int
    slots: int
    matches: list[list[int]]
    eligible: list[list[int]]

    def percentage(self, day: int, slot: int) -> float | None:
        n = self.eligible[day][slot]
        if not n:
            return None
        return 100.0 * self.matches[day][slot] / n


def prevalence_persistence(sessions_by_node: Mapping[str, Sequence[Session]], cfg: GridConfig,
                           weeks: range, k: float = 0.5) -> PersistenceMatrix:
    """How often a node's prevalent cluster in a cell repeats the previous week's.

    Each node is clustered once over the analysed weeks.  A node counts for
    a cell of week ``w`` only when it was active in that cell in both ``w``
    and ``w - 1``; all consecutive pairs inside ``weeks`` are pooled.
    """
    matches = [[0] * cfg.slots for _ in range(cfg.days)]
    eligible = [[0] * cfg.slots for _ in range(cfg.days)]
    lo, hi = cfg.cycle_start(weeks.start), cfg.cycle_start(weeks.stop)
    for node, sessions in sorted(sessions_by_node.items()):
        clipped = clip_sessions(sessions, lo, hi)
        if not clipped:
            continue
        clustering = cluster_sessions(clipped, k)
        tables = {w: history_from_occupancy(slot_occupancy(clipped, w, cfg), clustering, w, cfg)
                  for w in weeks}
        for w in list(weeks)[1:]:
            prev, cur = tables[w - 1], tables[w]
            for day, slot in cfg.cells():
                a, b = prev.cells[day][slot], cur.cells[day][slot]
                if a is None or b is None:
                    continue
                eligible[day][slot] += 1
                matches[day][slot] += a.cluster == b.cluster
    return PersistenceMatrix(cfg.days, cfg.slots, matches, eligible)


def _max_circular_gap(intervals: list[tuple[int, int]], length: int = DAY) -> int:
    if not intervals:
        return length
    merged: list[list[int]] = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    gaps = [b[0] - a[1] for a, b in zip(merged, merged[1:])]
    gaps.append(length - merged[-1][1] + merged[0][0])
    return max(gaps)


def nonactivity_gaps(sessions_by_node: Mapping[str, Sequence[Session]], cfg: GridConfig,
                     first_week: int, weeks: int = 4,
                     require_all_weeks: bool = True) -> dict[int, list[float]]:
    """Per weekday, each node's longest never-active stretch in hours.

    Activity of the same weekday is pooled over ``weeks`` cycles and the
    day is treated as circular, so a node active 09:00-17:00 has a 16 hour
    gap.  With ``require_all_weeks`` only nodes active on that weekday in
    every cycle are counted.
    """
    out: dict[int, list[float]] = {d: [] for d in range(cfg.days)}
    window = (cfg.cycle_start(first_week), cfg.cycle_start(first_week + weeks))
    for node, sessions in sorted(sessions_by_node.items()):
        sessions = clip_sessions(sessions, *window)
        for day in range(cfg.days):
            pooled: list[tuple[int, int]] = []
            active_weeks = 0
            for w in range(first_week, first_week + weeks):
                lo = cfg.cycle_start(w) + day * DAY
                hi = lo + DAY
                found = False
                for s in sessions:
                    a, b = max(s.start, lo), min(s.end, hi)
                    if a < b:
                        pooled.append((a - lo, b - lo))
                        found = True
                active_weeks += found
            if not active_weeks or (require_all_weeks and active_weeks < weeks):
                continue
            out[day].append(_max_circular_gap(pooled) / 3600.0)
    return {d: sorted(v) for d, v in out.items()}


def empirical_cdf(values: Sequence[float]) -> list[tuple[float, float]]:
    values = sorted(values)
    n = len(values)
    points = []
    for idx, v in enumerate(values, start=1):
        if idx < n and values[idx] == v:
            continue
        points.append((v, idx / n))
    return points
