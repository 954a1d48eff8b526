import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cases import enumerate_posterior
from uavsearch.generator import GenerationError, GeneratorConfig, generate_scenario
from uavsearch.occupancy import OccupancyFormatError, OccupancyGrid, read_nsog, write_nsog
from uavsearch.scenario import (
    BeliefMap,
    GroundTruthEntity,
    belief_posterior_after_negative_search,
    validate_scenario,
)
from uavsearch.scenario_io import (
    ScenarioParseError,
    ScenarioValidationError,
    format_scenario,
    load_scenario,
    parse_scenario,
    save_scenario,
)

MINIMAL = """
[map]
extent = 0 0 100 100
[aoi A1]
boundary = 10 10, 90 10, 90 90, 10 90
prior.E1 = 1.0
[eoi E1]
type = sedan
color = red
[entity E1]
position = 50 50 0
type = sedan
color = red
eoi = true
"""


def test_minimal_file_has_zero_residual(tmp_path):
    p = tmp_path / "m.scenario"
    p.write_text(MINIMAL)
    s = load_scenario(p)
    assert len(s.kozs) == 0
    assert BeliefMap.from_scenario(s).residual["E1"] == 0.0
    assert s.time_budget == 300.0


def test_prior_sum_above_one_names_the_eoi(tmp_path):
    text = MINIMAL.replace("prior.E1 = 1.0", "prior.E1 = 0.7") + """
[aoi A2]
boundary = 91 91, 99 91, 99 99, 91 99
prior.E1 = 0.5
"""
    p = tmp_path / "bad.scenario"
    p.write_text(text)
    with pytest.raises(ScenarioValidationError) as err:
        load_scenario(p)
    names = [(v.invariant, v.element) for v in err.value.violations]
    assert ("prior_sum_exceeds_one", "E1") in names


def test_malformed_file_is_a_parse_error():
    with pytest.raises(ScenarioParseError):
        parse_scenario("[map]\nextent = 0 0 banana 1\n")
    with pytest.raises(ScenarioParseError):
        parse_scenario("no section header\n")


def test_tutorial_has_three_aois_and_four_eois(tutorial):
    assert len(tutorial.aois) == 3
    assert len(tutorial.eois) == 4
    assert validate_scenario(tutorial) == []


def test_eoi_outside_candidate_aois(tutorial):
    ents = tuple(replace(e, position=(150.0, 280.0, 0.0)) if e.id == "E1" else e for e in tutorial.entities)
    v = validate_scenario(replace(tutorial, entities=ents))
    assert ("eoi_outside_candidate_aois", "E1") in [(x.invariant, x.element) for x in v]


def test_ambiguous_descriptor_matches_enumeration(tutorial):
    twin = GroundTruthEntity("D9", (90.0, 210.0, 0.0), "suv", "red", False)
    s = replace(tutorial, entities=tutorial.entities + (twin,))
    found = {(x.invariant, x.element) for x in validate_scenario(s) if x.invariant == "ambiguous_descriptor"}
    # Enumerate: for every EOI, any other entity with its description inside a candidate AOI.
    expected = set()
    for e in s.eois:
        cands = [a for a in s.aois if a.priors.get(e.id, 0) > 0]
        for ent in s.entities:
            if ent.id != e.id and (ent.vehicle_type, ent.color) == (e.vehicle_type, e.color):
                if any(a.contains(*ent.position[:2]) for a in cands):
                    expected.add(("ambiguous_descriptor", e.id))
    assert found == expected == {("ambiguous_descriptor", "E1")}


def test_format_roundtrip(tutorial, tmp_path):
    text = format_scenario(tutorial)
    again = parse_scenario(text)
    assert format_scenario(again) == text
    save_scenario(again, tmp_path / "x.scenario")
    assert (tmp_path / "x.scenario").read_text() == text


def test_external_occupancy_file(tutorial, tmp_path):
    s = replace(tutorial, occupancy_file="grid.nsog")
    save_scenario(s, tmp_path / "s.scenario")
    assert (tmp_path / "grid.nsog").read_bytes()[:4] == b"NSOG"
    back = load_scenario(tmp_path / "s.scenario")
    assert np.array_equal(back.occupancy.cells, tutorial.occupancy.cells)


def test_generator_is_deterministic():
    a = format_scenario(generate_scenario(11))
    b = format_scenario(generate_scenario(11))
    assert a == b
    assert a != format_scenario(generate_scenario(12))


def test_generator_zero_kozs():
    s = generate_scenario(5, GeneratorConfig(n_kozs=0))
    assert s.kozs == ()


def test_generator_seed_sweep_always_valid():
    for seed in range(100):
        s = generate_scenario(seed)
        assert validate_scenario(s) == [], seed


def test_generator_failure_is_explicit():
    cfg = GeneratorConfig(n_aois=(6, 6), aoi_side=(200.0, 240.0), max_attempts=3)
    with pytest.raises(GenerationError):
        generate_scenario(0, cfg)


# -- occupancy ----------------------------------------------------------------

def test_index_world_roundtrip_for_cell_centres():
    g = OccupancyGrid.empty((-3.0, 7.5), 0.7, (9, 5, 4))
    for idx in itertools.product(range(9), range(5), range(4)):
        assert g.index_of(g.center_of(idx)) == idx


def test_nsog_roundtrip_and_errors(tmp_path):
    g = OccupancyGrid.from_boxes((0.0, 0.0), 2.0, (7, 5, 3), [(2, 2, 0, 6, 6, 4)])
    write_nsog(tmp_path / "g.nsog", g)
    h = read_nsog(tmp_path / "g.nsog")
    assert np.array_equal(g.cells, h.cells) and h.cell_size == 2.0
    data = g.to_bytes()
    with pytest.raises(OccupancyFormatError):
        OccupancyGrid.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(OccupancyFormatError):
        OccupancyGrid.from_bytes(data[:-1])


def test_ground_height_on_top_of_box():
    g = OccupancyGrid.from_boxes((0.0, 0.0), 1.0, (10, 10, 10), [(2, 2, 0, 5, 5, 3)])
    assert g.ground_height(3.5, 3.5) == 3.0
    assert g.ground_height(8.5, 8.5) == 0.0


# -- belief updates -----------------------------------------------------------

def _belief(ps, residual=None):
    row = {f"A{i + 1}": p for i, p in enumerate(ps)}
    r = 1.0 - sum(ps) if residual is None else residual
    return BeliefMap({"E": row}, {"E": r})


def test_perfect_negative_evidence_example():
    b = belief_posterior_after_negative_search(_belief([0.5, 0.3]), "E", "A1", 1.0, 1.0)
    assert b.prob("E", "A1") == 0.0
    assert b.prob("E", "A2") == pytest.approx(0.6, abs=1e-15)
    assert b.residual["E"] == pytest.approx(0.4, abs=1e-15)


def test_no_coverage_leaves_belief_unchanged():
    b0 = _belief([0.5, 0.3])
    b = belief_posterior_after_negative_search(b0, "E", "A1", 0.0, 0.9)
    assert b.to_dict() == b0.to_dict()


def test_hand_applied_bayes_example():
    b = belief_posterior_after_negative_search(_belief([0.6, 0.3]), "E", "A1", 0.5, 0.8)
    assert b.prob("E", "A1") == pytest.approx(0.36 / 0.76, abs=1e-12)
    assert round(b.prob("E", "A1"), 4) == 0.4737
    assert b.prob("E", "A2") == pytest.approx(0.3 / 0.76, abs=1e-12)


def test_degenerate_certain_presence():
    b = belief_posterior_after_negative_search(_belief([1.0, 0.0], 0.0), "E", "A1", 1.0, 1.0)
    assert b.prob("E", "A1") == 0.0
    assert b.total("E") == pytest.approx(1.0)


@given(
    st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4).filter(lambda v: sum(v) > 0.05),
    st.lists(st.tuples(st.sampled_from(["A1", "A2", "A3"]), st.floats(0, 1), st.floats(0, 1)),
             min_size=1, max_size=4),
)
def test_three_aoi_posterior_matches_enumeration(raw, searches):
    total = sum(raw)
    priors = [v / total for v in raw[:3]]
    residual = raw[3] / total
    b = _belief(priors, residual)
    for aoi, c, q in searches:
        b.negative_search("E", aoi, c, q)
    # Skip worlds where the evidence has probability ~0 (the degenerate branch).
    if any(c * q > 1 - 1e-6 for _, c, q in searches):
        return
    want = enumerate_posterior(priors, residual, searches)
    for i in range(3):
        assert abs(b.prob("E", f"A{i + 1}") - want[f"A{i + 1}"]) < 1e-9
    assert abs(b.residual["E"] - want[None]) < 1e-9
    assert abs(b.total("E") - 1.0) < 1e-12


@given(st.lists(st.tuples(st.sampled_from(["A1", "A2", "A3"]), st.floats(0, 1), st.floats(0, 1)),
                min_size=2, max_size=4), st.randoms())
def test_negative_search_order_insensitive(searches, rnd):
    b1 = _belief([0.3, 0.25, 0.2])
    b2 = _belief([0.3, 0.25, 0.2])
    shuffled = list(searches)
    rnd.shuffle(shuffled)
    for s in searches:
        b1.negative_search("E", *s)
    for s in shuffled:
        b2.negative_search("E", *s)
    for a in ("A1", "A2", "A3", None):
        assert abs(b1.prob("E", a) - b2.prob("E", a)) < 1e-9


def test_negative_search_monte_carlo():
    priors, residual = [0.4, 0.35, 0.1], 0.15
    searches = [("A1", 0.7, 0.9), ("A2", 0.5, 0.8)]
    b = _belief(priors, residual)
    for s in searches:
        b.negative_search("E", *s)
    rng = np.random.default_rng(2024)
    n = 100_000
    loc = rng.choice(4, size=n, p=priors + [residual])
    seen = np.zeros(n, dtype=bool)
    for aoi, c, q in searches:
        idx = int(aoi[1]) - 1
        seen |= (loc == idx) & (rng.random(n) < c * q)
    kept = loc[~seen]
    m = len(kept)
    for i, key in enumerate(["A1", "A2", "A3", None]):
        p = b.prob("E", key)
        freq = float(np.mean(kept == i))
        sigma = math.sqrt(p * (1 - p) / m)
        assert abs(freq - p) <= 3 * sigma + 1e-12, (key, freq, p)
