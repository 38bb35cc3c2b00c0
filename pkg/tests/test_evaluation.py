import pytest
from hypothesis import given, settings, strategies as st

from meshloc.agenda import Agenda
from meshloc.clustering import Cluster, Clustering
from meshloc.errors import NoActiveNodes
from meshloc.evaluation import (
    BUCKETS,
    Match,
    PredictionReport,
    Relaxation,
    a_er,
    bucket_of,
    evaluate_all,
    evaluate_node,
    history_sweep,
    judge_week,
    nonactivity_gaps,
    per_day_accuracy,
    prevalence_persistence,
    proportion_at_most,
    report,
    weekly_histogram,
    weekly_summary,
)
from meshloc.trace import PatternEntry, Session, WeeklyPattern, generate_synthetic, sessionize

from conftest import at, office_pattern

def uniform_agenda(ap, grid, week=1):
    start = grid.cycle_start(week)
    return Agenda("n", ((ap,) * grid.slots,) * grid.days, week, 1, start, start + grid.cycle_seconds)

def three_clusters():
    # {A,B} - {C} adjacent, {D} isolated
    clusters = [Cluster(0, frozenset("AB"), 4, "A"), Cluster(1, frozenset("C"), 0, "C"),
                Cluster(2, frozenset("D"), 0, "D")]
    return Clustering(clusters, {(0, 1)}, 0.5)

def sessions_from(pattern, weeks, node="n", first_week=0):
    return sessionize(generate_synthetic(pattern, weeks, node_id=node, first_week=first_week))

# --------------------------------------------------------------------------
# judging

def test_exact_match_whole_slot(grid):
    js = judge_week(uniform_agenda("A", grid), [Session("n", "B", at(1, 0, 9), at(1, 0, 10))],
                    three_clusters(), grid)
    hit = [j for j in js if j.active]
    assert len(hit) == 1 and hit[0].match is Match.EXACT

def test_adjacent_cluster_relaxation(grid):
    sessions = [Session("n", "C", at(1, 0, 9), at(1, 0, 10))]
    exact = [j for j in judge_week(uniform_agenda("A", grid), sessions, three_clusters(), grid) if j.active]
    relaxed = [j for j in judge_week(uniform_agenda("A", grid), sessions, three_clusters(), grid,
                                     Relaxation.ONE_HOP) if j.active]
    assert exact[0].match is Match.MISS
    assert relaxed[0].match is Match.ONE_HOP
    far = [Session("n", "D", at(1, 0, 9), at(1, 0, 10))]
    assert [j.match for j in judge_week(uniform_agenda("A", grid), far, three_clusters(), grid,
                                        Relaxation.ONE_HOP) if j.active] == [Match.MISS]

def test_inactive_slots_skipped(grid):
    js = judge_week(uniform_agenda("A", grid), [], three_clusters(), grid)
    assert len(js) == 168
    assert all(j.match is Match.INACTIVE for j in js)
    assert a_er(js) is None

def test_any_visit_counts(grid):
    # 5 minutes on the right cluster is enough
    sessions = [Session("n", "D", at(1, 0, 9), at(1, 0, 9.9)), Session("n", "B", at(1, 0, 9.9), at(1, 0, 10))]
    js = [j for j in judge_week(uniform_agenda("A", grid), sessions, three_clusters(), grid) if j.active]
    assert js[0].match is Match.EXACT

def test_bootstrap_not_judged(grid):
    from meshloc.agenda import bootstrap_agenda
    boot = bootstrap_agenda("A", grid, at(1, 2, 5))
    assert judge_week(boot, [Session("n", "A", at(1, 3, 9), at(1, 3, 10))], three_clusters(), grid) == []

def test_a_er_ratios():
    assert PredictionReport("n", 0, 40, 0).a_er == 0.0
    assert PredictionReport("n", 0, 40, 10).a_er == 25.0
    assert PredictionReport("n", 0, 0, 0).a_er is None

@pytest.mark.parametrize("value,bucket", [(0, "0"), (0.1, "(0,25]"), (25, "(0,25]"), (25.01, "(25,50]"),
                                          (50, "(25,50]"), (75, "(50,75]"), (100, "(75,100]")])
def test_buckets(value, bucket):
    assert bucket_of(value) == bucket

def test_histogram_all_perfect():
    reps = [PredictionReport(f"n{i}", 3, 10, 0) for i in range(5)]
    hist = weekly_histogram(reps, 3)
    assert hist["0"] == 1.0 and sum(hist.values()) == 1.0

def test_histogram_ignores_inactive_and_raises_when_empty():
    reps = [PredictionReport("a", 1, 0, 0), PredictionReport("b", 1, 4, 4)]
    assert weekly_histogram(reps, 1)["(75,100]"] == 1.0
    with pytest.raises(NoActiveNodes):
        weekly_histogram([PredictionReport("a", 1, 0, 0)], 1)

def test_proportion_at_most():
    reps = [PredictionReport("a", 1, 4, 2), PredictionReport("b", 1, 4, 3)]
    assert proportion_at_most(reps) == 0.5

@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 50), st.integers(0, 50)), min_size=1, max_size=60))
def test_histogram_partition(pairs):
    reps = [PredictionReport(f"n{i}", 0, total, min(bad, total)) for i, (total, bad) in enumerate(pairs)]
    hist = weekly_histogram(reps)
    assert set(hist) == set(BUCKETS)
    assert abs(sum(hist.values()) - 1.0) <= 1e-9

# --------------------------------------------------------------------------
# pipeline

def test_cyclic_node_zero_error(grid):
    sessions = sessions_from(office_pattern(), 5)
    ev = evaluate_node("n", sessions, grid, 0, 5)
    assert ev.bootstrap_weeks == [0]
    reps = ev.reports[Relaxation.EXACT]
    assert [r.week for r in reps] == [1, 2, 3, 4]
    assert all(r.a_er == 0 and r.total_slots == 75 for r in reps)

def test_late_starter_bootstraps_late(grid):
    sessions = sessions_from(office_pattern(), 3, first_week=2)
    ev = evaluate_node("n", sessions, grid, 0, 5)
    assert ev.bootstrap_weeks == [2]
    assert [r.week for r in ev.reports[Relaxation.EXACT]] == [3, 4]

def test_rebootstrap_after_long_silence(grid):
    sessions = sessions_from(office_pattern(), 2) + sessions_from(office_pattern("B"), 2, first_week=5)
    ev = evaluate_node("n", sessions, grid, 0, 7)
    assert ev.bootstrap_weeks == [0, 5]

def two_phase_sessions(change_week=4, weeks=8):
    phase1 = WeeklyPattern([PatternEntry(d, 9, 17, "A") for d in range(7)])
    # half-hour visits keep every history cell partial
    phase2 = WeeklyPattern([PatternEntry(d, h, h + 0.5, "B") for d in range(7) for h in range(9, 17)])
    return (sessions_from(phase1, change_week)
            + sessions_from(phase2, weeks - change_week, first_week=change_week))

def test_history_sweep_two_phase(grid):
    sweep = history_sweep({"n": two_phase_sessions()}, grid, [1, 2, 3, 4], 0, 8)
    assert all(sweep[h][4] == 0.0 for h in (1, 2, 3, 4))
    assert sweep[1][5] == 1.0 and sweep[2][5] == 1.0
    assert sweep[3][5] == 0.0 and sweep[4][5] == 0.0
    assert all(sweep[h][w] == 1.0 for h in (1, 2, 3, 4) for w in (6, 7))
    for w in range(5, 8):
        series = [sweep[h][w] for h in (1, 2, 3, 4)]
        assert series == sorted(series, reverse=True)

def test_history_sweep_cyclic_converges(grid):
    cohort = {f"n{i}": sessions_from(office_pattern(f"O{i}"), 6, node=f"n{i}") for i in range(3)}
    sweep = history_sweep(cohort, grid, [1, 2, 3], 0, 6)
    assert all(v == 1.0 for series in sweep.values() for v in series.values())

def test_relaxation_never_worse(grid):
    cohort = {"n": two_phase_sessions()}
    ev = evaluate_all(cohort, grid, 0, 8)["n"]
    for ex, oh in zip(ev.reports[Relaxation.EXACT], ev.reports[Relaxation.ONE_HOP]):
        assert ex.week == oh.week and oh.bad <= ex.bad

def test_weekly_summary_rows(grid):
    cohort = {f"n{i}": sessions_from(office_pattern(), 3, node=f"n{i}") for i in range(4)}
    evals = evaluate_all(cohort, grid, 0, 3)
    from meshloc.evaluation import collect_reports
    rows = weekly_summary(collect_reports(evals))
    assert [r["week"] for r in rows] == [1, 2]
    assert all(r["active_nodes"] == 4 and r["le50"] == 1.0 for r in rows)

def monday_perturbed(i, weeks=5):
    out = []
    for w in range(weeks):
        for d in range(7):
            ap = f"X{w}" if d == 0 else "A"
            out.append(Session(f"n{i}", ap, at(w, d, 9), at(w, d, 17)))
    return out

def test_per_day_monday_lowest(grid):
    cohort = {f"n{i}": monday_perturbed(i) for i in range(5)}
    days = per_day_accuracy(evaluate_all(cohort, grid, 0, 5))
    for week, series in days.items():
        assert series[0] < min(series[d] for d in range(1, 7))

def test_per_day_uniform_equal(grid):
    pattern = WeeklyPattern([PatternEntry(d, 9, 17, "A") for d in range(7)])
    cohort = {f"n{i}": sessions_from(pattern, 3, node=f"n{i}") for i in range(3)}
    days = per_day_accuracy(evaluate_all(cohort, grid, 0, 3))
    assert all(len(set(series.values())) == 1 for series in days.values())

def test_per_day_weekend_only(grid):
    pattern = WeeklyPattern([PatternEntry(d, 10, 14, "A") for d in (5, 6)])
    ev = evaluate_node("n", sessions_from(pattern, 3), grid, 0, 3)
    assert {d for (_, d) in ev.per_day} == {5, 6}

# --------------------------------------------------------------------------
# persistence and non-activity

def test_prevalence_identical_weeks(grid):
    cohort = {"n": sessions_from(office_pattern(), 3)}
    m = prevalence_persistence(cohort, grid, range(0, 3))
    assert m.percentage(0, 10) == 100.0
    assert m.eligible[0][10] == 2
    assert m.percentage(0, 3) is None

def test_prevalence_eligibility(grid):
    cohort = {"a": sessions_from(office_pattern(), 2, node="a"),
              "b": sessions_from(office_pattern(), 1, node="b", first_week=1)}
    m = prevalence_persistence(cohort, grid, range(0, 2))
    assert m.eligible[0][10] == 1

def test_prevalence_alternating(grid):
    sessions = [Session("n", "A" if w % 2 == 0 else "B", at(w, 0, 9), at(w, 0, 10)) for w in range(4)]
    m = prevalence_persistence({"n": sessions}, grid, range(0, 4))
    assert m.percentage(0, 9) == 0.0

def test_nonactivity_office_hours(grid):
    pattern = WeeklyPattern([PatternEntry(d, 9, 17, "A") for d in range(7)])
    gaps = nonactivity_gaps({"n": sessions_from(pattern, 4)}, grid, 0, 4)
    assert all(gaps[d] == [16.0] for d in range(7))

def test_nonactivity_always_on(grid):
    sessions = [Session("n", "A", at(0, 0, 0), at(4, 0, 0))]
    gaps = nonactivity_gaps({"n": sessions}, grid, 0, 4)
    assert all(gaps[d] == [0.0] for d in range(7))

def test_nonactivity_requires_every_week(grid):
    pattern = WeeklyPattern([PatternEntry(0, 9, 17, "A")])
    gaps = nonactivity_gaps({"n": sessions_from(pattern, 3)}, grid, 0, 4)
    assert gaps[0] == []
    gaps = nonactivity_gaps({"n": sessions_from(pattern, 3)}, grid, 0, 4, require_all_weeks=False)
    assert gaps[0] == [16.0]

def test_report_helper():
    from meshloc.evaluation import SlotJudgement
    js = [SlotJudgement(0, 0, s, True, "A", Match.MISS if s < 1 else Match.EXACT) for s in range(4)]
    js.append(SlotJudgement(0, 0, 5, False, "A", Match.INACTIVE))
    r = report("n", 0, js)
    assert (r.total_slots, r.bad, r.a_er) == (4, 1, 25.0)
