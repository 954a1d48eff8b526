"""Random instance builders shared by the unit and acceptance suites."""

import itertools
import math

import numpy as np

from oracles import dist_point_segment, point_in_polygon
from uavsearch.coverage import free_component, rasterize_aoi
from uavsearch.geometry import rectangle
from uavsearch.navigation import build_visibility_graph, inflate_obstacles
from uavsearch.scenario import MapExtent
from uavsearch.selection import SelectionInstance


def enumerate_posterior(priors, residual, searches):
    """P(location | nothing detected) by summing over every (location, detection outcomes) world."""
    hyps = {f"A{i + 1}": p for i, p in enumerate(priors)}
    hyps[None] = residual
    joint = dict.fromkeys(hyps, 0.0)
    for h, ph in hyps.items():
        for outcome in itertools.product((False, True), repeat=len(searches)):
            w = ph
            for detected, (aoi, c, q) in zip(outcome, searches):
                p_det = c * q if aoi == h else 0.0
                w *= p_det if detected else 1.0 - p_det
            if not any(outcome):
                joint[h] += w
    z = math.fsum(joint.values())
    return {h: v / z for h, v in joint.items()}


def random_instance(rng, n, budget=None, quantum=30.0, detour=True, p_detect=0.9):
    pts = rng.uniform(0, 400, size=(n + 1, 2))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1) / 10.0
    if detour:
        # Paths around obstacles: symmetric, never shorter than the straight line.
        extra = rng.uniform(1.0, 1.5, size=(n + 1, n + 1))
        extra = np.triu(extra, 1)
        d = d * (extra + extra.T + np.eye(n + 1))
    beliefs = []
    for i in range(n):
        k = int(rng.integers(1, 3))
        beliefs.append({f"E{j}": float(rng.uniform(0, 0.6)) for j in range(k)})
    full = [float(rng.uniform(20, 200)) for _ in range(n)]
    if budget is None:
        budget = float(rng.uniform(60, 400))
    return SelectionInstance([f"A{i + 1}" for i in range(n)], beliefs, full, d, budget, quantum, p_detect)


def resimulate(inst, plan):
    """Independent total time of a plan: travel along the matrix plus dwell."""
    index = {a: i + 1 for i, a in enumerate(inst.aoi_ids)}
    t, prev = 0.0, 0
    for aoi, dwell in plan.legs:
        t += inst.travel[prev][index[aoi]] + dwell
        prev = index[aoi]
    return t


def random_polygon(rng, cx, cy, r):
    """Simple star-shaped polygon (convex or not) around (cx, cy)."""
    k = int(rng.integers(3, 7))
    step = 2 * math.pi / k
    angles = np.arange(k) * step + rng.uniform(-0.35, 0.35, k) * step
    radii = rng.uniform(0.4 * r, r, k)
    return tuple((float(cx + a * math.cos(t)), float(cy + a * math.sin(t))) for a, t in zip(radii, angles))


def random_obstacles(rng, n, size=100.0):
    return [random_polygon(rng, *rng.uniform(10, size - 10, 2), float(rng.uniform(4, 15))) for _ in range(n)]


def free_points(rng, polys, n, size=100.0):
    out = []
    while len(out) < n:
        p = tuple(float(v) for v in rng.uniform(0, size, 2))
        if not any(point_in_polygon(p, poly) for poly in polys):
            out.append(p)
    return out


def random_graph_case(seed):
    rng = np.random.default_rng(seed)
    polys = inflate_obstacles(random_obstacles(rng, int(rng.integers(1, 6))), None, 40.0,
                              float(rng.choice([0.0, 2.0])))
    s, t = free_points(rng, polys, 2)
    g = build_visibility_graph(polys, [s, t])
    return polys, g, len(g.nodes) - 2, len(g.nodes) - 1


def min_track_distance(p, track):
    xy = [(x, y) for x, y, _ in track]
    if len(xy) == 1:
        return math.dist(p, xy[0])
    return min(dist_point_segment(p, a, b) for a, b in zip(xy, xy[1:]))


def obstacle_aoi(seed):
    rng = np.random.default_rng(seed)
    w, h = rng.uniform(60, 140, 2)
    x0, y0 = rng.uniform(20, 60, 2)
    aoi = rectangle(x0, y0, x0 + w, y0 + h)
    kozs = []
    for _ in range(int(rng.integers(1, 4))):
        cx, cy = rng.uniform([x0, y0], [x0 + w, y0 + h])
        r = rng.uniform(5, 18)
        kozs.append(rectangle(cx - r, cy - r * 0.6, cx + r, cy + r * 0.6))
    obstacles = inflate_obstacles(kozs, None, 40.0, 3.0)
    extent = MapExtent(0, 0, 260, 260)
    start = (0.0, 0.0)
    reach = free_component(extent, obstacles, start)
    res = float(rng.choice([10.0, 15.0, 20.0]))
    return aoi, obstacles, rasterize_aoi(aoi, res, obstacles, reach), res, start
