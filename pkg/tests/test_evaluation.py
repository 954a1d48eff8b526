import itertools
import math

import pytest
from hypothesis import given, strategies as st

from uavsearch.evaluation import (
    ABSENT,
    COLUMNS,
    TraceData,
    evaluate,
    f1_score,
    load_traces,
    localization_error,
    match_reports,
    prf,
    search_times,
    success_rate,
    summarize,
    to_csv,
    to_markdown,
)

GT = {"E1": (0.0, 0.0, 0.0)}


def rep(eoi, x, t=0.0, y=0.0, z=0.0):
    return {"eoi": eoi, "position": (x, y, z), "t": t}


def trace(gt, online=(), offline=(), cell="c", seed=0):
    return TraceData(cell, seed, dict(gt), list(online), list(offline))


def test_match_within_radius():
    m = match_reports([rep("E1", 3.0)], GT, 5.0)
    assert m.pairs == {"E1": 0} and not m.false_positives and not m.missed


def test_match_outside_radius():
    m = match_reports([rep("E1", 7.0)], GT, 5.0)
    assert m.pairs == {} and m.false_positives == [0] and m.missed == ["E1"]


def test_radius_boundary_inclusive():
    assert match_reports([rep("E1", 5.0)], GT, 5.0).pairs == {"E1": 0}


def exhaustive_assignment(reports, gt, radius):
    """Min-cost one-to-one assignment maximising matches; brute force over report choices."""
    best = None
    eois = list(gt)
    for choice in itertools.product([None] + list(range(len(reports))), repeat=len(eois)):
        used = [c for c in choice if c is not None]
        if len(used) != len(set(used)):
            continue
        cost, ok = 0.0, True
        for e, c in zip(eois, choice):
            if c is None:
                continue
            if reports[c]["eoi"] != e or math.dist(reports[c]["position"], gt[e]) > radius:
                ok = False
                break
            cost += math.dist(reports[c]["position"], gt[e])
        if ok and (best is None or (-len(used), cost) < best[0]):
            best = ((-len(used), cost), {e: c for e, c in zip(eois, choice) if c is not None})
    return best[1]


def test_one_four_six_example():
    reps = [rep("E1", 4.0), rep("E1", 6.0), rep("E1", 1.0)]
    m = match_reports(reps, GT, 5.0)
    assert m.pairs == {"E1": 2}
    assert m.duplicates == [0]
    assert m.false_positives == [1]
    assert m.pairs == exhaustive_assignment(reps, GT, 5.0)


def test_wrong_id_is_false_positive():
    m = match_reports([rep("E2", 0.0)], GT, 5.0)
    assert m.false_positives == [0] and m.missed == ["E1"]


def test_invalid_radius():
    with pytest.raises(ValueError):
        match_reports([], GT, 0.0)


def test_success_rate_examples():
    gt4 = {f"E{i}": (10.0 * i, 0.0, 0.0) for i in range(4)}
    hits = lambda n: [rep(f"E{i}", 10.0 * i) for i in range(n)]
    assert success_rate([trace(gt4, offline=hits(4))]) == (1.0, 1.0)
    assert success_rate([trace(gt4)]) == (0.0, 0.0)
    micro, macro = success_rate([trace(gt4, offline=hits(3)), trace(gt4, online=hits(2))])
    assert micro == 5 / 8
    assert macro == (0.75 + 0.5) / 2


def test_online_precision_two_of_three():
    t = trace(GT, online=[rep("E1", 1.0), rep("E1", 2.0), rep("E1", 30.0)])
    p = prf([t], "online")
    assert p.precision == 2 / 3 and p.recall == 1.0
    assert p.f1 == pytest.approx(0.8, abs=1e-15)
    assert (p.matched, p.duplicates, p.false_positives) == (1, 1, 1)


def test_zero_reports_flagged():
    p = prf([trace(GT)], "online")
    assert p.undefined and p.precision == 0.0 and p.recall == 0.0 and p.f1 == 0.0
    assert "yes" in to_csv([summarize([trace(GT)])]).splitlines()[1].split(",")[-1]


def test_prf_mode_validation():
    with pytest.raises(ValueError):
        prf([], "sideways")


def test_search_time_examples():
    gt2 = {"E1": (0.0, 0.0, 0.0), "E2": (50.0, 0.0, 0.0)}
    one = trace(gt2, online=[rep("E2", 50.0, t=120.0), rep("E1", 0.0, t=60.0), rep("E1", 0.0, t=90.0)])
    assert search_times([one]) == [60.0, 120.0, None, None]
    assert search_times([trace(gt2)]) == [None] * 4
    a = trace(GT, online=[rep("E1", 0.0, t=50.0)])
    b = trace(GT, online=[rep("E1", 0.0, t=70.0)])
    assert search_times([a, b])[0] == 60.0


def test_absent_ranks_render_as_dash():
    s = summarize([trace(GT, online=[rep("E1", 0.0, t=12.0)])])
    row = to_csv([s]).splitlines()[1].split(",")
    cols = dict(zip(COLUMNS, row))
    assert cols["t1"] == "12.0"
    assert cols["t2"] == cols["t3"] == cols["t4"] == ABSENT
    assert cols["loc_err_m"] == ABSENT
    assert f"| {ABSENT} |" in to_markdown([s])


def test_localization_error_uses_matched_offline():
    t = trace(GT, offline=[rep("E1", 3.0)], online=[rep("E1", 0.5)])
    assert localization_error([t]) == 3.0
    assert localization_error([trace(GT, offline=[rep("E1", 9.0)])]) is None


report_lists = st.lists(
    st.tuples(st.sampled_from(["E1", "E2", "E3"]), st.floats(-20, 20), st.floats(-20, 20), st.floats(0, 300)),
    max_size=12)
GT3 = {"E1": (0.0, 0.0, 0.0), "E2": (10.0, 5.0, 0.0), "E3": (-8.0, 12.0, 1.0)}


def to_reps(items):
    return [{"eoi": e, "position": (x, y, 0.0), "t": t} for e, x, y, t in items]


@given(report_lists, report_lists)
def test_f1_identity_and_ranges(online, offline):
    s = summarize([trace(GT3, to_reps(online), to_reps(offline))])
    for p in (s.online, s.offline):
        expected = 0.0 if p.precision + p.recall == 0 else 2 * p.precision * p.recall / (p.precision + p.recall)
        assert p.f1 == expected
        assert 0 <= p.precision <= 1 and 0 <= p.recall <= 1 and 0 <= p.f1 <= 1
    assert 0 <= s.success_rate <= 1


@given(report_lists, st.floats(0.5, 10), st.floats(0.0, 20))
def test_radius_monotone(items, r, extra):
    reps = to_reps(items)
    assert match_reports(reps, GT3, r).n_matched <= match_reports(reps, GT3, r + extra).n_matched


def test_f1_score_zero():
    assert f1_score(0.0, 0.0) == 0.0


def test_eval_reproducible_from_files(tmp_path):
    from uavsearch.runner import MissionConfig, run_mission
    from uavsearch.scenario_io import bundled_scenario_path

    for i, preset in enumerate(["clear", "night"]):
        run_mission(MissionConfig(scenario_path=str(bundled_scenario_path()), sensor_preset=preset, seed=i,
                                  label=preset, time_budget=120.0, output=str(tmp_path / f"m{i}.jsonl")))
    first = to_csv(evaluate(load_traces(tmp_path)))
    second = to_csv(evaluate(load_traces(tmp_path)))
    assert first == second
    assert [l.split(",")[0] for l in first.splitlines()[1:]] == ["clear", "night"]
