"""Obstacle-aware shortest paths: inflated obstacles, visibility graph and A*."""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import shapely
from shapely.geometry import box
from shapely.ops import unary_union

from .geometry import (
    Point2D,
    Polygon2D,
    as_polygon,
    dilate,
    merge_polygons,
    path_length,
    project_outside,
    segments_clear,
    shrink_for_interior,
    to_vertices,
)
from .occupancy import OccupancyGrid

log = logging.getLogger(__name__)

DEFAULT_ALTITUDE = 40.0
DEFAULT_SPEED = 10.0
DEFAULT_MARGIN = 3.0


class Unreachable(RuntimeError):
    """No collision-free path connects the requested endpoints."""


def occupied_footprints(occ: OccupancyGrid, altitude: float):
    """Union of occupied voxel cells in the layer at ``altitude`` as polygons."""
    layer = occ.layer(altitude)
    if not layer.any():
        return []
    s = occ.cell_size
    ox, oy = occ.origin
    cells = []
    # Merge runs along y first to keep the union small.
    for i in range(layer.shape[0]):
        col = layer[i]
        if not col.any():
            continue
        j = 0
        n = len(col)
        while j < n:
            if col[j]:
                k = j
                while k < n and col[k]:
                    k += 1
                cells.append(box(ox + i * s, oy + j * s, ox + (i + 1) * s, oy + k * s))
                j = k
            else:
                j += 1
    return merge_polygons(cells)


def inflate_obstacles(kozs: Sequence[Polygon2D], occ: OccupancyGrid | None, altitude: float,
                      margin: float) -> list[Polygon2D]:
    """Dilate KOZs and occupied footprints at flight altitude by ``margin``.

    Overlapping results are merged; holes (fully enclosed free pockets) are
    dropped because they cannot be reached from outside anyway.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    polys = [as_polygon(k) for k in kozs]
    if occ is not None:
        polys.extend(occupied_footprints(occ, altitude))
    if margin == 0 and occ is None:
        return [tuple(k) for k in kozs]
    grown = merge_polygons(dilate(p, margin) for p in polys)
    return [to_vertices(p) for p in grown]


@dataclass
class VisibilityGraph:
    nodes: list[Point2D]
    adjacency: list[dict[int, float]]
    obstacles: list[Polygon2D] = field(default_factory=list)
    projected: list[int] = field(default_factory=list)

    def edges(self) -> set[tuple[int, int]]:
        return {(i, j) for i, nbrs in enumerate(self.adjacency) for j in nbrs if i < j}


def _visible_pairs(nodes: np.ndarray, blocker) -> list[tuple[int, int, float]]:
    n = len(nodes)
    if n < 2:
        return []
    ii, jj = np.triu_indices(n, k=1)
    ok = segments_clear(nodes[ii], nodes[jj], blocker)
    d = np.hypot(*(nodes[jj] - nodes[ii]).T)
    return [(int(i), int(j), float(w)) for i, j, w, c in zip(ii, jj, d, ok) if c]


def build_visibility_graph(obstacles: Sequence[Polygon2D], extra_nodes: Sequence[Point2D] = ()) -> VisibilityGraph:
    """Nodes are obstacle vertices plus ``extra_nodes``; edges are mutually visible pairs.

    Extra nodes lying inside an obstacle are moved to the nearest free point
    and their indices recorded in ``projected``.
    """
    shapes = [as_polygon(o) for o in obstacles]
    blocker = shrink_for_interior(shapes)
    nodes: list[Point2D] = [v for o in obstacles for v in o]
    projected = []
    for p in extra_nodes:
        q, moved = project_outside(tuple(p), shapes)
        if moved:
            log.warning("node %s inside an obstacle, projected to %s", p, q)
            projected.append(len(nodes))
        nodes.append(q)
    adjacency: list[dict[int, float]] = [dict() for _ in nodes]
    for i, j, w in _visible_pairs(np.asarray(nodes, dtype=float).reshape(-1, 2), blocker):
        adjacency[i][j] = w
        adjacency[j][i] = w
    return VisibilityGraph(nodes, adjacency, list(obstacles), projected)


@dataclass
class Path:
    waypoints: list[Point2D]
    length: float
    travel_time: float = 0.0


def astar(g: VisibilityGraph, start: int, goal: int, speed: float = DEFAULT_SPEED,
          expansions: list | None = None) -> Path:
    """Shortest path by A* with the Euclidean heuristic.

    Ties in the open list break on (f, h, node index). When ``expansions`` is
    given, every expanded ``(node, g, h)`` is appended to it.
    """
    nodes = g.nodes
    gx, gy = nodes[goal]

    def h(i: int) -> float:
        x, y = nodes[i]
        return math.hypot(gx - x, gy - y)

    best = {start: 0.0}
    parent = {start: None}
    h0 = h(start)
    heap = [(h0, h0, start)]
    closed = set()
    while heap:
        f, hv, u = heapq.heappop(heap)
        if u in closed:
            continue
        closed.add(u)
        if expansions is not None:
            expansions.append((u, best[u], hv))
        if u == goal:
            chain = []
            while u is not None:
                chain.append(nodes[u])
                u = parent[u]
            chain.reverse()
            length = path_length(chain)
            return Path(chain, length, length / speed)
        gu = best[u]
        for v, w in g.adjacency[u].items():
            if v in closed:
                continue
            cand = gu + w
            if cand < best.get(v, math.inf):
                best[v] = cand
                parent[v] = u
                hv2 = h(v)
                heapq.heappush(heap, (cand + hv2, hv2, v))
    raise Unreachable(f"no path from node {start} to node {goal}")


def travel_time(p: Path, speed: float) -> float:
    if not speed > 0:
        raise ValueError("speed must be positive")
    return p.length / speed


class Navigator:
    """Static visibility graph over the inflated obstacles, queried with ad-hoc endpoints."""

    def __init__(self, obstacles: Sequence[Polygon2D], speed: float = DEFAULT_SPEED):
        self.speed = speed
        self.obstacles = [tuple(o) for o in obstacles]
        self.shapes = [as_polygon(o) for o in self.obstacles]
        self.blocker = shrink_for_interior(self.shapes)
        self._union = unary_union(self.shapes) if self.shapes else None
        if self._union is not None:
            shapely.prepare(self._union)
        self.graph = build_visibility_graph(self.obstacles)
        self._node_array = np.asarray(self.graph.nodes, dtype=float).reshape(-1, 2)
        self._cache: dict[tuple, Path] = {}

    @classmethod
    def for_scenario(cls, kozs: Sequence[Polygon2D], occ: OccupancyGrid | None,
                     altitude: float = DEFAULT_ALTITUDE, margin: float = DEFAULT_MARGIN,
                     speed: float = DEFAULT_SPEED) -> "Navigator":
        return cls(inflate_obstacles(kozs, occ, altitude, margin), speed)

    def is_free(self, p: Sequence[float]) -> bool:
        return self._union is None or not shapely.contains_xy(self._union, float(p[0]), float(p[1]))

    def free_point(self, p: Sequence[float]) -> Point2D:
        q = (float(p[0]), float(p[1]))
        if self.is_free(q):
            return q
        return project_outside(q, self.shapes)[0]

    def clear(self, a: Sequence[float], b: Sequence[float]) -> bool:
        return bool(segments_clear(np.array([a[:2]]), np.array([b[:2]]), self.blocker)[0])

    def _visible_from(self, p: Point2D) -> np.ndarray:
        n = len(self._node_array)
        if n == 0:
            return np.zeros(0, dtype=bool)
        return segments_clear(np.repeat([p], n, axis=0), self._node_array, self.blocker)

    def shortest_path(self, start: Sequence[float], goal: Sequence[float]) -> Path:
        """Collision-free shortest path between two free points.

        Endpoints inside an inflated obstacle are first projected out.
        """
        s = self.free_point(start)
        t = self.free_point(goal)
        key = (s, t)
        if key in self._cache:
            return self._cache[key]
        if self.clear(s, t):
            length = math.hypot(t[0] - s[0], t[1] - s[1])
            path = Path([s, t] if s != t else [s], length, length / self.speed)
        else:
            base = self.graph
            n = len(base.nodes)
            adjacency = [dict(a) for a in base.adjacency] + [dict(), dict()]
            for idx, p in ((n, s), (n + 1, t)):
                vis = self._visible_from(p)
                for j in np.flatnonzero(vis):
                    j = int(j)
                    w = math.hypot(base.nodes[j][0] - p[0], base.nodes[j][1] - p[1])
                    adjacency[idx][j] = w
                    adjacency[j][idx] = w
            g = VisibilityGraph(base.nodes + [s, t], adjacency, base.obstacles)
            path = astar(g, n, n + 1, self.speed)
        if len(self._cache) < 20000:
            self._cache[key] = path
        return path

    def distance(self, a: Sequence[float], b: Sequence[float]) -> float:
        return self.shortest_path(a, b).length

