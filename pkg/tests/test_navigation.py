import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cases import free_points, random_graph_case, random_obstacles
from oracles import dijkstra, path_collision_free, point_in_polygon, segment_hits_interior, strictly_inside
from uavsearch.geometry import rectangle
from uavsearch.navigation import (
    Navigator,
    Path,
    Unreachable,
    astar,
    build_visibility_graph,
    inflate_obstacles,
    travel_time,
)
from uavsearch.occupancy import OccupancyGrid


# -- inflation -------------------------------------------------------------------

def test_zero_margin_unchanged():
    koz = rectangle(0, 0, 10, 10)
    assert inflate_obstacles([koz], None, 40.0, 0.0) == [koz]


def test_square_margin_two():
    [grown] = inflate_obstacles([rectangle(0, 0, 10, 10)], None, 40.0, 2.0)
    assert point_in_polygon((-1.9, 5.0), grown)
    assert point_in_polygon((5.0, 11.9), grown)
    # The rounded 14 x 14 square: corner offsets at distance 2 lie inside too.
    c = 2 / math.sqrt(2) * 0.999
    assert point_in_polygon((10 + c, 10 + c), grown)
    assert not point_in_polygon((-2.5, 5.0), grown)


def test_negative_margin_rejected():
    with pytest.raises(ValueError):
        inflate_obstacles([rectangle(0, 0, 1, 1)], None, 40.0, -1.0)


@given(st.integers(0, 10_000), st.floats(0.5, 5.0))
def test_original_points_interior_after_inflation(seed, margin):
    rng = np.random.default_rng(seed)
    kozs = random_obstacles(rng, 3)
    grown = inflate_obstacles(kozs, None, 40.0, margin)
    for koz in kozs:
        for v in koz:
            assert any(strictly_inside(v, g) for g in grown)


def test_occupied_cells_at_altitude_are_obstacles():
    occ = OccupancyGrid.from_boxes((0.0, 0.0), 1.0, (60, 60, 60), [(10, 10, 0, 20, 20, 50), (40, 40, 0, 45, 45, 5)])
    grown = inflate_obstacles([], occ, 40.0, 1.0)
    assert len(grown) == 1
    assert point_in_polygon((15, 15), grown[0])
    assert point_in_polygon((9.2, 15), grown[0])


# -- visibility graph ------------------------------------------------------------------

def test_empty_graph_single_edge():
    g = build_visibility_graph([], [(0, 0), (3, 4)])
    assert g.edges() == {(0, 1)}
    assert g.adjacency[0][1] == 5.0


def test_blocked_pair_routes_via_corners():
    sq = rectangle(40, 40, 60, 60)
    g = build_visibility_graph([sq], [(30, 50), (70, 50)])
    s, t = 4, 5
    assert t not in g.adjacency[s]
    p = astar(g, s, t)
    assert 3 <= len(p.waypoints) <= 4
    assert all(w in sq for w in p.waypoints[1:-1])
    assert p.length == pytest.approx(2 * math.hypot(10, 10) + 20)


def test_node_inside_obstacle_is_projected():
    g = build_visibility_graph([rectangle(0, 0, 10, 10)], [(5, 1)])
    assert g.projected == [4]
    assert not strictly_inside(g.nodes[4], rectangle(0, 0, 10, 10))


@pytest.mark.parametrize("seed", range(10))
def test_edge_set_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    polys = inflate_obstacles(random_obstacles(rng, 4), None, 40.0, 0.0)
    extra = free_points(rng, polys, 6)
    g = build_visibility_graph(polys, extra)
    expected = set()
    for i in range(len(g.nodes)):
        for j in range(i + 1, len(g.nodes)):
            if not any(segment_hits_interior(g.nodes[i], g.nodes[j], p) for p in polys):
                expected.add((i, j))
    assert g.edges() == expected
    for i, j in expected:
        assert g.adjacency[i][j] == g.adjacency[j][i]
        assert g.adjacency[i][j] == pytest.approx(math.dist(g.nodes[i], g.nodes[j]), abs=1e-12)


# -- A* --------------------------------------------------------------------------------

def test_astar_start_equals_goal():
    g = build_visibility_graph([], [(1, 2)])
    p = astar(g, 0, 0)
    assert p.waypoints == [(1.0, 2.0)] and p.length == 0.0


def test_astar_no_obstacles_straight():
    g = build_visibility_graph([], [(0, 0), (30, 40)])
    p = astar(g, 0, 1)
    assert p.waypoints == [(0.0, 0.0), (30.0, 40.0)] and p.length == 50.0


def test_astar_unreachable():
    ring = [rectangle(0, 0, 30, 5), rectangle(0, 25, 30, 30), rectangle(0, 0, 5, 30), rectangle(25, 0, 30, 30)]
    nav = Navigator(ring)
    with pytest.raises(Unreachable):
        nav.shortest_path((15, 15), (50, 50))


def test_astar_equals_dijkstra_and_is_collision_free():
    checked = 0
    for seed in range(100):
        polys, g, s, t = random_graph_case(seed)
        d = dijkstra(g.adjacency, s, t)
        if math.isinf(d):
            with pytest.raises(Unreachable):
                astar(g, s, t)
            continue
        p = astar(g, s, t)
        assert abs(p.length - d) <= 1e-9
        assert path_collision_free(p.waypoints, polys)
        checked += 1
    assert checked >= 90


def test_heuristic_admissible_on_expansions():
    for seed in range(20):
        polys, g, s, t = random_graph_case(seed)
        exp = []
        try:
            astar(g, s, t, expansions=exp)
        except Unreachable:
            continue
        for node, _, h in exp:
            assert h <= dijkstra(g.adjacency, node, t) + 1e-9


def test_removing_obstacle_never_lengthens():
    rng = np.random.default_rng(99)
    for _ in range(30):
        kozs = random_obstacles(rng, 4)
        full = inflate_obstacles(kozs, None, 40.0, 1.0)
        a, b = free_points(rng, full, 2)
        d_full = Navigator(full).distance(a, b)
        d_less = Navigator(inflate_obstacles(kozs[1:], None, 40.0, 1.0)).distance(a, b)
        assert d_less <= d_full + 1e-9


def test_navigator_paths_collision_free():
    rng = np.random.default_rng(5)
    polys = inflate_obstacles(random_obstacles(rng, 5), None, 40.0, 3.0)
    nav = Navigator(polys)
    for a, b in zip(free_points(rng, polys, 40), free_points(rng, polys, 40)):
        try:
            p = nav.shortest_path(a, b)
        except Unreachable:
            continue
        assert path_collision_free(p.waypoints, polys)
        assert p.length >= math.dist(a, b) - 1e-9


# -- travel time ---------------------------------------------------------------------------

def test_travel_time_examples():
    assert travel_time(Path([(0, 0), (100, 0)], 100.0), 10.0) == 10.0
    assert travel_time(Path([(0, 0)], 0.0), 10.0) == 0.0
    assert travel_time(Path([(0, 0), (30, 0), (30, 7.5)], 37.5), 7.5) == 5.0
    with pytest.raises(ValueError):
        travel_time(Path([(0, 0)], 0.0), 0.0)
