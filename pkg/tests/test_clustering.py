import json

import pytest
from hypothesis import given, settings, strategies as st

from meshloc.clustering import (
    ApStat,
    Clustering,
    RoamingMatrix,
    build_roaming_matrix,
    cluster,
    cluster_sessions,
    completeness_level,
    elect_locator,
    gathering_level,
    link_cost,
    links,
)
from meshloc.errors import EmptyTrace, InvalidThreshold
from meshloc.trace import Session

SEVEN_AP_LINKS = {("F", "G"): 40, ("C", "D"): 30, ("A", "B"): 20, ("D", "F"): 18,
             ("D", "G"): 16, ("E", "G"): 12, ("C", "E"): 10, ("A", "C"): 8}


def symmetric_matrix(costs):
    m = RoamingMatrix()
    for (a, b), c in costs.items():
        m.add(a, b, c // 2)
        m.add(b, a, c - c // 2)
    return m


def stats_for(aps, durations=None):
    durations = durations or {}
    return {ap: ApStat(1, durations.get(ap, 100)) for ap in aps}


@pytest.fixture
def seven_ap():
    m = symmetric_matrix(SEVEN_AP_LINKS)
    return cluster(m, stats_for("ABCDEFG", {"B": 500, "D": 900, "G": 300}), k=0.5)


def test_seven_ap_partition(seven_ap):
    groups = sorted(sorted(c.members) for c in seven_ap.clusters)
    assert groups == [["A", "B"], ["C", "D"], ["E"], ["F", "G"]]


def test_seven_ap_levels(seven_ap):
    assert gathering_level(seven_ap) == pytest.approx(4 / 7)
    assert len(seven_ap.adjacency) == 4
    assert completeness_level(seven_ap) == pytest.approx(2 / 3)


def test_seven_ap_weights_and_locators(seven_ap):
    by_members = {frozenset(c.members): c for c in seven_ap.clusters}
    assert by_members[frozenset("FG")].weight == 40
    assert by_members[frozenset("CD")].weight == 30
    assert by_members[frozenset("E")].weight == 0
    assert by_members[frozenset("AB")].locator == "B"
    assert by_members[frozenset("CD")].locator == "D"
    assert by_members[frozenset("FG")].locator == "G"


def test_seven_ap_merge_log(seven_ap):
    assert [(m.a, m.b) for m in seven_ap.merges] == [("F", "G"), ("C", "D"), ("A", "B")]
    assert all(m.valid for m in seven_ap.merges)


def test_low_threshold_merges_everything():
    c = cluster(symmetric_matrix(SEVEN_AP_LINKS), stats_for("ABCDEFG"), k=0.0)
    assert len(c.clusters) == 1
    assert gathering_level(c) == pytest.approx(1 / 7)
    assert completeness_level(c) == 0.0


def test_single_ap_degenerate():
    c = cluster(RoamingMatrix(), {"A": ApStat(1, 10)}, k=0.5)
    assert len(c.clusters) == 1
    only = c.clusters[0]
    assert (only.members, only.weight, only.locator) == (frozenset("A"), 0, "A")


@pytest.mark.parametrize("k", [0.0, 0.3, 0.5, 1.0])
def test_two_aps_always_merge(k):
    c = cluster(symmetric_matrix({("A", "B"): 10}), stats_for("AB"), k=k)
    assert len(c.clusters) == 1
    assert c.clusters[0].weight == 10


def test_bad_threshold():
    with pytest.raises(InvalidThreshold):
        cluster(RoamingMatrix(), {}, k=1.5)


def test_link_cost_cases():
    m = RoamingMatrix()
    m.add("A", "B", 5)
    m.add("B", "A", 3)
    assert link_cost(m, "A", "B") == 8
    m2 = RoamingMatrix()
    m2.add("A", "B", 5)
    assert link_cost(m2, "A", "B") is None
    assert link_cost(RoamingMatrix(), "A", "B") is None
    assert links(m2) == {}


def test_roaming_single_roam():
    m, stats = build_roaming_matrix([Session("n", "A", 0, 100), Session("n", "B", 100, 200)])
    assert m.get("A", "B") == 1 and m.get("B", "A") == 0
    assert (stats["A"].total_associations, stats["A"].cumulated_duration) == (1, 100)
    assert (stats["B"].total_associations, stats["B"].cumulated_duration) == (1, 100)


def test_roaming_no_roam_across_disconnect():
    m, stats = build_roaming_matrix([Session("n", "A", 0, 100), Session("n", "A", 500, 600)])
    assert m.total() == 0
    assert (stats["A"].total_associations, stats["A"].cumulated_duration) == (2, 200)


def test_roaming_alternation():
    seq = "ABABA"
    sessions = [Session("n", ap, i * 10, i * 10 + 10) for i, ap in enumerate(seq)]
    m, _ = build_roaming_matrix(sessions)
    assert m.get("A", "B") == 2 and m.get("B", "A") == 2


def test_gathering_ratios():
    from meshloc.clustering import Cluster
    singles = Clustering([Cluster(i, frozenset([str(i)]), 0, str(i)) for i in range(10)], set(), 0.5)
    assert gathering_level(singles) == 1.0
    pairs = Clustering([Cluster(i, frozenset([f"{i}a", f"{i}b"]), 1, f"{i}a") for i in range(5)], set(), 0.5)
    assert gathering_level(pairs) == 0.5
    with pytest.raises(EmptyTrace):
        gathering_level(Clustering([], set(), 0.5))


def test_completeness_ratios():
    from meshloc.clustering import Cluster
    tri = Clustering([Cluster(i, frozenset([str(i)]), 0, str(i)) for i in range(3)],
                     {(0, 1), (0, 2), (1, 2)}, 0.5)
    assert completeness_level(tri) == 1.0
    four = Clustering([Cluster(i, frozenset([str(i)]), 0, str(i)) for i in range(4)], {(0, 1), (2, 3)}, 0.5)
    assert completeness_level(four) == pytest.approx(1 / 3)


def test_elect_locator_ties():
    stats = {"B": ApStat(3, 100), "A": ApStat(2, 100), "C": ApStat(3, 100)}
    assert elect_locator(["A", "B", "C"], stats) == "B"
    stats["A"] = ApStat(1, 101)
    assert elect_locator(["A", "B", "C"], stats) == "A"


def test_disabled_clustering_is_singletons():
    seq = "ABABAB"
    sessions = [Session("n", ap, i * 10, i * 10 + 10) for i, ap in enumerate(seq)]
    assert len(cluster_sessions(sessions, enabled=True).clusters) == 1
    off = cluster_sessions(sessions, enabled=False)
    assert len(off.clusters) == 2
    assert off.adjacency == {(0, 1)}


def test_json_roundtrip(seven_ap):
    data = json.loads(json.dumps(seven_ap.to_json("n1")))
    back = Clustering.from_json(data)
    assert back.clusters == seven_ap.clusters
    assert back.adjacency == seven_ap.adjacency


# --------------------------------------------------------------------------
# properties

@st.composite
def matrices(draw):
    aps = [f"ap{i}" for i in range(draw(st.integers(1, 9)))]
    m = RoamingMatrix()
    for a in aps:
        for b in aps:
            if a != b and draw(st.booleans()):
                m.add(a, b, draw(st.integers(1, 20)))
    stats = {a: ApStat(draw(st.integers(1, 5)), draw(st.integers(1, 1000))) for a in aps}
    return m, stats


@settings(max_examples=200, deadline=None)
@given(matrices(), st.floats(0, 1), st.booleans())
def test_clustering_invariants(ms, k, fixpoint):
    m, stats = ms
    c = cluster(m, stats, k, fixpoint=fixpoint)
    seen = [ap for cl in c.clusters for ap in cl.members]
    assert sorted(seen) == sorted(stats)
    assert all(cl.locator in cl.members for cl in c.clusters)
    assert all(rec.valid for rec in c.merges)
    assert len(c.merges) == len(stats) - len(c.clusters)
    for a, b in c.adjacency:
        assert a < b
    again = cluster(m, stats, k, fixpoint=fixpoint)
    assert again.clusters == c.clusters and again.merges == c.merges
    assert 0 < gathering_level(c) <= 1
    assert 0 <= completeness_level(c) <= 1


@settings(max_examples=100, deadline=None)
@given(matrices())
def test_fixpoint_matches_single_pass(ms):
    # Weights never shrink, so a link rejected once stays rejected.
    m, stats = ms
    single = cluster(m, stats, 0.5)
    fixed = cluster(m, stats, 0.5, fixpoint=True)
    assert fixed.clusters == single.clusters
