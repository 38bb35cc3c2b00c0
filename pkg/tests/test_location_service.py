import json

import networkx as nx
import pytest

from meshloc.agenda import Agenda
from meshloc.clustering import Cluster, Clustering
from meshloc.errors import InvalidAgenda, WorkloadOutOfRange
from meshloc.location_service import (
    CORRECTION,
    FOUND,
    GET,
    LOOKUP,
    LOOKUP_REPLY,
    PUT,
    STALE,
    UNKNOWN,
    AnchorDirectory,
    LocatorState,
    MessageLog,
    ServiceConfig,
    WorkloadItem,
    correct_location,
    get_agenda,
    lookup,
    put_agenda,
    read_workload,
    rendezvous_anchor,
    run_simulation,
)
from meshloc.trace import PatternEntry, WeeklyPattern, generate_synthetic, sessionize

from conftest import at, office_pattern


def agenda_on(ap, grid, week=0):
    start = grid.cycle_start(week)
    return Agenda("n", ((ap,) * grid.slots,) * grid.days, week, 1, start, start + grid.cycle_seconds,
                  locator_clusters={ap: frozenset([ap])})


def clusters():
    return Clustering([Cluster(0, frozenset("AB"), 4, "A"), Cluster(1, frozenset("C"), 0, "C")],
                      {(0, 1)}, 0.5)


def test_rendezvous_stable_and_spread():
    anchors = [f"ap{i}" for i in range(20)]
    assert rendezvous_anchor("n1", anchors) == rendezvous_anchor("n1", list(reversed(anchors)))
    picks = {rendezvous_anchor(f"n{i}", anchors) for i in range(200)}
    assert len(picks) > 10
    with pytest.raises(ValueError):
        rendezvous_anchor("n", [])


def test_put_and_get(grid):
    d, log = AnchorDirectory(["X", "Y"]), MessageLog()
    a = agenda_on("A", grid)
    put_agenda(d, "n1", a, log)
    assert d.agendas["n1"] is a and log[PUT] == 1
    b = agenda_on("B", grid)
    put_agenda(d, "n1", b, log)
    assert d.agendas["n1"] is b and log[PUT] == 2
    assert get_agenda(d, "n1", log) is b
    assert get_agenda(d, "ghost", log) is None
    assert log[GET] == 2


def test_put_expired(grid):
    with pytest.raises(InvalidAgenda):
        put_agenda(AnchorDirectory(["X"]), "n", agenda_on("A", grid, 0), MessageLog(),
                   now=grid.cycle_start(1))


def test_put_unfilled(grid):
    bad = Agenda("n", (("A", ""),), 0, 1, 0, 10)
    with pytest.raises(InvalidAgenda):
        put_agenda(AnchorDirectory(["X"]), "n", bad, MessageLog())


def test_no_correction_at_locator(grid):
    state, log = LocatorState(), MessageLog()
    correct_location(state, "n", "A", (0, 0), agenda_on("A", grid), clusters(), log)
    assert log[CORRECTION] == 0
    assert state.answer("A", "n") == "A"


def test_correction_inside_cluster(grid):
    state, log = LocatorState(), MessageLog()
    correct_location(state, "n", "B", (0, 0), agenda_on("A", grid), clusters(), log, now=5)
    assert log[CORRECTION] == 1
    assert log.corrections_by_kind["intra_cluster"] == 1
    assert state.entry("A", "n") == ("B", 5)
    correct_location(state, "n", "B", (0, 1), agenda_on("A", grid), clusters(), log, now=9)
    assert log[CORRECTION] == 1


def test_correction_far_cluster(grid):
    state, log = LocatorState(), MessageLog()
    correct_location(state, "n", "C", (0, 0), agenda_on("A", grid), clusters(), log)
    assert log[CORRECTION] == 1
    assert log.corrections_by_kind["inter_cluster"] == 1


def test_locator_change_drops_entry(grid):
    state, log = LocatorState(), MessageLog()
    correct_location(state, "n", "C", (0, 0), agenda_on("A", grid), clusters(), log)
    correct_location(state, "n", "C", (0, 1), agenda_on("B", grid), None, log)
    assert state.entry("A", "n") is None
    assert state.entry("B", "n") == ("C", 0)
    assert log[CORRECTION] == 2


def _directory_with(grid, agenda, node="n"):
    d, log = AnchorDirectory(["X"]), MessageLog()
    put_agenda(d, node, agenda, log)
    return d, log


def test_lookup_found(grid):
    a = agenda_on("A", grid)
    d, log = _directory_with(grid, a)
    state = LocatorState()
    correct_location(state, "n", "C", (0, 0), a, clusters(), log)
    assert lookup(state, d, {}, "n", at(0, 0, 0.5), log, "C", grid) == FOUND
    assert log[LOOKUP] == log[LOOKUP_REPLY] == 1


def test_lookup_stale(grid):
    a = agenda_on("A", grid)
    d, log = _directory_with(grid, a)
    state = LocatorState()
    correct_location(state, "n", "C", (0, 0), a, clusters(), log)
    state.attached["n"] = "B"  # moved, no correction yet
    assert lookup(state, d, {}, "n", at(0, 0, 0.5), log, "B", grid) == STALE


def test_lookup_unknown(grid):
    d, log = AnchorDirectory(["X"]), MessageLog()
    assert lookup(LocatorState(), d, {}, "ghost", at(0, 0, 1), log, None, grid) == UNKNOWN
    assert log[GET] == 1 and log[LOOKUP] == 0


def test_lookup_uses_cache(grid):
    a = agenda_on("A", grid)
    d, log = _directory_with(grid, a)
    cache = {}
    state = LocatorState(attached={"n": "A"})
    lookup(state, d, cache, "n", at(0, 0, 1), log, "A", grid)
    lookup(state, d, cache, "n", at(0, 1, 1), log, "A", grid)
    assert log[GET] == 1


def test_read_workload():
    items = read_workload(["time,source,target", "10,a,b", "", "20,b,a"])
    assert items == [WorkloadItem(10, "a", "b"), WorkloadItem(20, "b", "a")]
    with pytest.raises(ValueError):
        read_workload(["10,a"])


# --------------------------------------------------------------------------
# replay

def cyclic(node="n", weeks=3, office="A"):
    return sessionize(generate_synthetic(office_pattern(office), weeks, node_id=node))


def test_empty_workload_only_puts_and_corrections(grid):
    res = run_simulation({"n": cyclic()}, grid)
    c = res.log.counts
    assert c[PUT] >= 3 and c[LOOKUP] == 0 and c[GET] == 0 and c[LOOKUP_REPLY] == 0
    assert res.lookups == []


def test_cyclic_lookups_found_after_bootstrap(grid):
    work = [WorkloadItem(at(w, d, 10.5), "c", "n") for w in (1, 2) for d in range(5)]
    work += [WorkloadItem(at(w, d, 20.5), "c", "n") for w in (1, 2) for d in range(7)]
    res = run_simulation({"n": cyclic()}, grid, workload=work)
    assert res.outcome_counts() == {FOUND: len(work), STALE: 0, UNKNOWN: 0}


def test_first_week_bootstrap_and_offline(grid):
    work = [WorkloadItem(at(0, 0, 9) + 10, "c", "n"), WorkloadItem(at(0, 1, 5), "c", "n")]
    res = run_simulation({"n": cyclic()}, grid, workload=work)
    assert res.lookups[0].outcome == FOUND  # bootstrap locator is the first AP
    assert res.lookups[1].outcome == STALE  # offline; locator still holds the evening AP


def test_workload_out_of_range(grid):
    with pytest.raises(WorkloadOutOfRange):
        run_simulation({"n": cyclic()}, grid, workload=[WorkloadItem(5, "c", "n")])


def test_message_conservation(grid):
    cohort = {f"n{i}": cyclic(f"n{i}", 3, f"O{i % 2}") for i in range(4)}
    work = [WorkloadItem(at(w, d, h), f"n{(i + 1) % 4}", f"n{i}")
            for w in range(3) for d in range(7) for h in (3.5, 10.5, 20.5) for i in range(4)
            if at(w, d, h) >= at(0, 0, 9)]
    res = run_simulation(cohort, grid, workload=work)
    c = res.log.counts
    assert len(res.lookups) == len(work)
    assert sum(res.outcome_counts().values()) == len(work)
    assert c[LOOKUP] == c[LOOKUP_REPLY]
    assert c[LOOKUP] + sum(1 for r in res.lookups if r.outcome == UNKNOWN) >= len(work)
    assert c[GET] <= len(work)
    assert sum(v[CORRECTION] for v in res.log.per_week.values()) == c[CORRECTION]
    assert sum(res.log.corrections_by_kind.values()) == c[CORRECTION]


def test_deterministic_and_json(grid):
    work = [WorkloadItem(at(1, 1, 12), "c", "n")]
    a = run_simulation({"n": cyclic()}, grid, workload=work).to_json()
    b = run_simulation({"n": cyclic()}, grid, workload=work).to_json()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_topology_hops(grid):
    topo = nx.path_graph(["A", "M", "H"])
    res = run_simulation({"n": cyclic()}, grid, topology=topo)
    assert "hops" in res.log.to_json()


def test_pingpong_clustering_reduces_corrections(grid):
    pattern = WeeklyPattern([PatternEntry(d, 9, 12, "A", pingpong_ap="B") for d in range(7)])
    sessions = sessionize(generate_synthetic(pattern, 3, dwell_jitter=5, seed=1))
    on = run_simulation({"n": sessions}, grid, ServiceConfig(clustering_enabled=True))
    off = run_simulation({"n": sessions}, grid, ServiceConfig(clustering_enabled=False))
    assert on.log[CORRECTION] < off.log[CORRECTION]
