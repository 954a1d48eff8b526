"""Low-level planner: sweep one AOI's grid points.

Two strategies share the same state and termination rules: greedy nearest
open point with A* legs (``snac``), and fixed back-and-forth lanes
(``boustrophedon``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Point, box
from shapely.ops import unary_union

from .flight import ARRIVED, STOPPED, Flight
from .geometry import Point2D, Polygon2D, as_polygon, point_segment_distance
from .navigation import Navigator, Unreachable
from .scenario import Aoi, MapExtent

log = logging.getLogger(__name__)

COVERAGE_MODES = ("snac", "boustrophedon")
DEFAULT_RESOLUTION = 20.0
PREFILTER = 3

COMPLETED = "completed"
TIME_EXPIRED = "time_expired"
EOIS_FOUND = "eois_found"


def footprint_radius_for(resolution: float) -> float:
    return resolution / math.sqrt(2.0)


def free_component(extent: MapExtent, obstacles: Sequence[Polygon2D], seed: Sequence[float]):
    """The connected piece of (map minus obstacles) that contains ``seed``; None if blocked."""
    free = box(extent.xmin, extent.ymin, extent.xmax, extent.ymax)
    if obstacles:
        free = free.difference(unary_union([as_polygon(o) for o in obstacles]))
    p = Point(seed[0], seed[1])
    parts = getattr(free, "geoms", [free])
    best, best_d = None, math.inf
    for part in parts:
        d = part.distance(p)
        if d < best_d:
            best, best_d = part, d
    if best is not None:
        shapely.prepare(best)
    return best


def rasterize_aoi(aoi: Aoi | Sequence[Point2D], resolution: float,
                  obstacles: Sequence[Polygon2D] = (), reachable=None) -> np.ndarray:
    """Grid points (spacing ``resolution``, inclusive of the far edge) inside the AOI.

    Points strictly inside an obstacle are dropped, as are points outside the
    ``reachable`` region when one is given. Rows are sorted by (x, y).
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    boundary = aoi.boundary if isinstance(aoi, Aoi) else aoi
    poly = as_polygon(boundary)
    x0, y0, x1, y1 = poly.bounds
    nx = int(math.floor((x1 - x0) / resolution + 1e-9)) + 1
    ny = int(math.floor((y1 - y0) / resolution + 1e-9)) + 1
    xs = x0 + resolution * np.arange(nx)
    ys = y0 + resolution * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    px, py = gx.ravel(), gy.ravel()
    keep = shapely.covers(poly, shapely.points(px, py))
    if obstacles:
        blocked = unary_union([as_polygon(o) for o in obstacles])
        keep &= ~shapely.contains_xy(blocked, px, py)
    pts = np.column_stack([px[keep], py[keep]])
    if reachable is not None and len(pts):
        ok = shapely.covers(reachable, shapely.points(pts))
        if not ok.all():
            log.info("dropping %d unreachable grid points", int((~ok).sum()))
        pts = pts[ok]
    return pts


@dataclass
class CoverageState:
    """Open/visited bookkeeping for one AOI; persists across visits."""

    points: np.ndarray
    resolution: float = DEFAULT_RESOLUTION
    footprint_radius: float = field(default=-1.0)
    elapsed_in_aoi: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if self.footprint_radius < 0:
            self.footprint_radius = footprint_radius_for(self.resolution)
        self.open_mask = np.ones(len(self.points), dtype=bool)

    @property
    def n_initial(self) -> int:
        return len(self.points)

    @property
    def n_open(self) -> int:
        return int(self.open_mask.sum())

    @property
    def empty(self) -> bool:
        return not self.open_mask.any()

    def open_points(self) -> np.ndarray:
        return self.points[self.open_mask]

    def visited_points(self) -> np.ndarray:
        return self.points[~self.open_mask]

    def fraction(self) -> float:
        if self.n_initial == 0:
            return 1.0
        return 1.0 - self.n_open / self.n_initial

    def mark_segment(self, a: Sequence[float], b: Sequence[float]) -> int:
        """Mark open points within the footprint of segment a-b; returns how many."""
        idx = np.flatnonzero(self.open_mask)
        if len(idx) == 0:
            return 0
        d = point_segment_distance(self.points[idx], a, b)
        hit = idx[d <= self.footprint_radius + 1e-9]
        self.open_mask[hit] = False
        return len(hit)

    def mark_point(self, p: Sequence[float]) -> int:
        return self.mark_segment(p, p)

    def remove(self, p: Sequence[float]) -> None:
        hit = np.flatnonzero(np.all(self.points == np.asarray(p[:2], dtype=float), axis=1))
        self.open_mask[hit] = False


def next_target(state: CoverageState, current: Sequence[float], navigator: Navigator | None = None) -> Point2D | None:
    """Nearest open point by path distance among the Euclidean top candidates.

    Ties break on (x, y).
    """
    pts = state.open_points()
    if len(pts) == 0:
        return None
    d = np.hypot(pts[:, 0] - current[0], pts[:, 1] - current[1])
    order = np.lexsort((pts[:, 1], pts[:, 0], d))
    cand = [tuple(map(float, pts[i])) for i in order[:PREFILTER]]
    if navigator is None:
        return cand[0]
    scored = []
    for c in cand:
        try:
            scored.append((navigator.distance(current, c), c))
        except Unreachable:
            continue
    if not scored:
        return cand[0]
    return min(scored)[1]


@dataclass
class CoverageOutcome:
    reason: str
    fraction: float
    fraction_before: float
    t_start: float
    t_end: float


def _result(state: CoverageState, reason: str, before: float, t0: float, flight: Flight) -> CoverageOutcome:
    state.elapsed_in_aoi += flight.t - t0
    return CoverageOutcome(reason, state.fraction(), before, t0, flight.t)


def run_coverage(state: CoverageState, allocation: float, flight: Flight, navigator: Navigator,
                 should_stop: Callable[[], bool] = lambda: False,
                 on_path: Callable[[list], None] | None = None) -> CoverageOutcome:
    """Greedy nearest-point sweep until empty, out of time, or every EOI is found."""
    if not allocation > 0:
        raise ValueError("allocation must be positive")
    t0, before = flight.t, state.fraction()
    deadline = min(t0 + allocation, flight.budget)
    state.mark_point(flight.xy)
    while True:
        if should_stop():
            return _result(state, EOIS_FOUND, before, t0, flight)
        if state.empty:
            return _result(state, COMPLETED, before, t0, flight)
        if flight.t >= deadline:
            return _result(state, TIME_EXPIRED, before, t0, flight)
        target = next_target(state, flight.xy, navigator)
        try:
            path = navigator.shortest_path(flight.xy, target)
        except Unreachable:
            log.warning("grid point %s unreachable, skipping", target)
            state.remove(target)
            continue
        if on_path is not None:
            on_path(path.waypoints)
        status = flight.follow(path.waypoints, deadline, state.mark_segment, should_stop)
        if status == ARRIVED:
            # The target may have been projected off an obstacle edge; it still counts.
            state.remove(target)
        elif status == STOPPED:
            return _result(state, EOIS_FOUND, before, t0, flight)


def sweep_lanes(aoi: Aoi | Sequence[Point2D], resolution: float, obstacles: Sequence[Polygon2D] = ()) -> list[tuple[Point2D, Point2D]]:
    """Back-and-forth lane segments along x, bottom lane first, alternating direction."""
    boundary = aoi.boundary if isinstance(aoi, Aoi) else aoi
    region = as_polygon(boundary)
    if obstacles:
        region = region.difference(unary_union([as_polygon(o) for o in obstacles]))
    x0, y0, x1, y1 = as_polygon(boundary).bounds
    ny = int(math.floor((y1 - y0) / resolution + 1e-9)) + 1
    lanes = []
    for k in range(ny):
        y = y0 + k * resolution
        cut = region.intersection(LineString([(x0 - 1.0, y), (x1 + 1.0, y)]))
        segs = []
        for g in getattr(cut, "geoms", [cut]):
            if isinstance(g, LineString) and not g.is_empty:
                xs = [c[0] for c in g.coords]
                segs.append((min(xs), max(xs)))
            elif isinstance(g, Point):
                segs.append((g.x, g.x))
        segs.sort()
        if k % 2 == 1:
            lanes.extend(((b, y), (a, y)) for a, b in reversed(segs))
        else:
            lanes.extend(((a, y), (b, y)) for a, b in segs)
    return lanes


def run_boustrophedon(state: CoverageState, lanes: Sequence[tuple[Point2D, Point2D]], allocation: float,
                      flight: Flight, navigator: Navigator,
                      should_stop: Callable[[], bool] = lambda: False,
                      on_path: Callable[[list], None] | None = None,
                      progress: list | None = None) -> CoverageOutcome:
    """Fly lanes in their fixed order with A* transfers between lane ends.

    ``progress`` is a one-element list holding the next lane index so a
    revisit resumes where the previous one stopped.
    """
    if not allocation > 0:
        raise ValueError("allocation must be positive")
    progress = progress if progress is not None else [0]
    t0, before = flight.t, state.fraction()
    deadline = min(t0 + allocation, flight.budget)
    state.mark_point(flight.xy)
    while True:
        if should_stop():
            return _result(state, EOIS_FOUND, before, t0, flight)
        if state.empty:
            return _result(state, COMPLETED, before, t0, flight)
        if progress[0] >= len(lanes):
            # Lanes done; pick up any grid points the lanes did not pass close to.
            rest = run_coverage(state, deadline - flight.t, flight, navigator, should_stop, on_path) \
                if flight.t < deadline else None
            reason = rest.reason if rest is not None else TIME_EXPIRED
            state.elapsed_in_aoi -= flight.t - rest.t_start if rest is not None else 0.0
            return _result(state, reason, before, t0, flight)
        if flight.t >= deadline:
            return _result(state, TIME_EXPIRED, before, t0, flight)
        a, b = lanes[progress[0]]
        try:
            path = navigator.shortest_path(flight.xy, a)
        except Unreachable:
            progress[0] += 1
            continue
        waypoints = list(path.waypoints) + [navigator.free_point(b)]
        if on_path is not None:
            on_path(waypoints)
        status = flight.follow(waypoints, deadline, state.mark_segment, should_stop)
        if status == ARRIVED:
            progress[0] += 1
        elif status == STOPPED:
            return _result(state, EOIS_FOUND, before, t0, flight)
