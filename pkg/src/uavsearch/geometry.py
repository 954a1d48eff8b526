"""Planar geometry helpers shared by the planners and the scenario model.

Polygons travel through the public API as tuples of ``(x, y)`` vertex pairs;
shapely does the heavy lifting (dilation, unions, batched intersection tests)
behind these functions.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, Point, Polygon
from shapely.ops import nearest_points, unary_union

Point2D = tuple[float, float]
Polygon2D = tuple[Point2D, ...]

# Obstacle interiors are tested against a copy shrunk by this much so that
# segments running along an obstacle edge are not treated as entering it.
INTERIOR_EPS = 1e-6


def as_polygon(vertices: Sequence[Point2D]) -> Polygon:
    return Polygon([(float(x), float(y)) for x, y in vertices])


def polygon_area(vertices: Sequence[Point2D]) -> float:
    if len(vertices) < 3:
        return 0.0
    return float(as_polygon(vertices).area)


def polygon_centroid(vertices: Sequence[Point2D]) -> Point2D:
    poly = as_polygon(vertices)
    if poly.area == 0.0:
        xs = [v[0] for v in vertices]
        ys = [v[1] for v in vertices]
        return (sum(xs) / len(xs), sum(ys) / len(ys))
    c = poly.centroid
    return (float(c.x), float(c.y))


def polygon_bounds(vertices: Sequence[Point2D]) -> tuple[float, float, float, float]:
    xs = [v[0] for v in vertices]
    ys = [v[1] for v in vertices]
    return (min(xs), min(ys), max(xs), max(ys))


def contains_point(vertices: Sequence[Point2D], p: Sequence[float]) -> bool:
    """Closed point-in-polygon test (boundary counts as inside)."""
    return bool(as_polygon(vertices).covers(Point(p[0], p[1])))


def rectangle(x0: float, y0: float, x1: float, y1: float) -> Polygon2D:
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def to_vertices(poly: Polygon) -> Polygon2D:
    """Exterior ring of a shapely polygon without the closing duplicate."""
    coords = list(poly.exterior.coords)[:-1]
    return tuple((float(x), float(y)) for x, y in coords)


def dilate(poly: Polygon, margin: float) -> Polygon:
    """Mitre-joined outward offset.

    With a mitre limit above 1 the result always contains the exact
    (round-cornered) Minkowski sum of ``poly`` and a disc of radius ``margin``.
    """
    if margin <= 0:
        return poly
    return poly.buffer(margin, join_style="mitre", mitre_limit=5.0)


def polygons_of(geom) -> list[Polygon]:
    """Flatten a (Multi)Polygon / GeometryCollection into a list of polygons."""
    if geom.is_empty:
        return []
    if isinstance(geom, Polygon):
        return [geom]
    out = []
    for g in getattr(geom, "geoms", []):
        out.extend(polygons_of(g))
    return out


def merge_polygons(polys: Iterable[Polygon]) -> list[Polygon]:
    polys = [p for p in polys if not p.is_empty]
    if not polys:
        return []
    return sorted(polygons_of(unary_union(polys)), key=lambda p: p.bounds)


def shrink_for_interior(polys: Sequence[Polygon]):
    """Union of obstacles shrunk by INTERIOR_EPS, prepared for batched queries."""
    if not polys:
        return None
    shrunk = unary_union([p.buffer(-INTERIOR_EPS, join_style="mitre") for p in polys])
    shapely.prepare(shrunk)
    return shrunk


def segments_clear(starts: np.ndarray, ends: np.ndarray, blocker) -> np.ndarray:
    """Vectorised test: which segments avoid every obstacle interior."""
    starts = np.asarray(starts, dtype=float).reshape(-1, 2)
    ends = np.asarray(ends, dtype=float).reshape(-1, 2)
    if blocker is None or len(starts) == 0:
        return np.ones(len(starts), dtype=bool)
    coords = np.stack([starts, ends], axis=1)
    lines = shapely.linestrings(coords)
    return ~shapely.intersects(lines, blocker)


def segment_clear(a: Sequence[float], b: Sequence[float], blocker) -> bool:
    if blocker is None:
        return True
    if a[0] == b[0] and a[1] == b[1]:
        return not blocker.intersects(Point(a[0], a[1]))
    return not blocker.intersects(LineString([(a[0], a[1]), (b[0], b[1])]))


def project_outside(p: Point2D, polys: Sequence[Polygon], push: float = 0.05) -> tuple[Point2D, bool]:
    """Move ``p`` to the nearest point outside every polygon.

    Returns the (possibly unchanged) point and whether it was moved.
    """
    if not polys:
        return p, False
    merged = unary_union(list(polys))
    pt = Point(p)
    if not merged.contains(pt):
        return p, False
    # Shrinking the free space by `push` keeps the projected point strictly out.
    grown = merged.buffer(push, join_style="mitre")
    boundary = grown.boundary
    q = nearest_points(boundary, pt)[0]
    return (float(q.x), float(q.y)), True


def point_segment_distance(points: np.ndarray, a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    """Distance from each row of ``points`` (N x 2) to segment ab."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    ax, ay = float(a[0]), float(a[1])
    dx, dy = float(b[0]) - ax, float(b[1]) - ay
    seg2 = dx * dx + dy * dy
    px = points[:, 0] - ax
    py = points[:, 1] - ay
    if seg2 == 0.0:
        return np.hypot(px, py)
    t = np.clip((px * dx + py * dy) / seg2, 0.0, 1.0)
    return np.hypot(px - t * dx, py - t * dy)


def path_length(points: Sequence[Sequence[float]]) -> float:
    total = 0.0
    for (x0, y0, *_), (x1, y1, *_) in zip(points[:-1], points[1:]):
        total += math.hypot(x1 - x0, y1 - y0)
    return total
