"""Mission description: geometry, targets, ground truth and the belief map."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import shapely
from shapely.geometry import Point

from .geometry import Point2D, Polygon2D, as_polygon, polygon_area, polygon_centroid
from .occupancy import OccupancyGrid

COLORS = ("red", "blue", "green", "white", "black", "silver", "yellow", "orange")
VEHICLE_TYPES = ("sedan", "suv")

DEFAULT_TIME_BUDGET = 300.0
# Ground-truth entities must sit within this distance of the ground surface.
GROUND_TOLERANCE = 1e-6


@dataclass(frozen=True)
class MapExtent:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]
    yaw: float = 0.0
    timestamp: float = 0.0


@dataclass(frozen=True)
class Aoi:
    id: str
    boundary: Polygon2D
    priors: Mapping[str, float] = field(default_factory=dict)

    @cached_property
    def shape(self):
        poly = as_polygon(self.boundary)
        shapely.prepare(poly)
        return poly

    @property
    def area(self) -> float:
        return polygon_area(self.boundary)

    @property
    def centroid(self) -> Point2D:
        return polygon_centroid(self.boundary)

    @cached_property
    def _fast_bounds(self):
        xs = sorted({v[0] for v in self.boundary})
        ys = sorted({v[1] for v in self.boundary})
        is_rect = len(self.boundary) == 4 and len(xs) == 2 and len(ys) == 2
        return (xs[0], ys[0], xs[-1], ys[-1]), is_rect

    def contains(self, x: float, y: float) -> bool:
        (x0, y0, x1, y1), is_rect = self._fast_bounds
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            return False
        return is_rect or bool(self.shape.covers(Point(x, y)))


@dataclass(frozen=True)
class Koz:
    id: str
    boundary: Polygon2D

    @cached_property
    def shape(self):
        poly = as_polygon(self.boundary)
        shapely.prepare(poly)
        return poly

    def contains(self, x: float, y: float) -> bool:
        return bool(self.shape.contains(Point(x, y)))


@dataclass(frozen=True)
class EoiDescriptor:
    id: str
    vehicle_type: str
    color: str

    @property
    def color_index(self) -> int:
        return COLORS.index(self.color)

    @property
    def type_index(self) -> int:
        return VEHICLE_TYPES.index(self.vehicle_type)


@dataclass(frozen=True)
class GroundTruthEntity:
    """A parked vehicle. EOI entities share their id with the EOI descriptor."""

    id: str
    position: tuple[float, float, float]
    vehicle_type: str
    color: str
    is_eoi: bool = False


@dataclass(frozen=True, eq=False)
class Scenario:
    map_extent: MapExtent
    aois: tuple[Aoi, ...]
    kozs: tuple[Koz, ...]
    eois: tuple[EoiDescriptor, ...]
    entities: tuple[GroundTruthEntity, ...]
    occupancy: OccupancyGrid
    time_budget: float = DEFAULT_TIME_BUDGET
    uav_start: Pose = Pose((0.0, 0.0, 40.0))
    seed: int = 0
    sensor: Mapping[str, str] = field(default_factory=dict)
    occupancy_file: str | None = None

    def aoi(self, aoi_id: str) -> Aoi:
        for a in self.aois:
            if a.id == aoi_id:
                return a
        raise KeyError(aoi_id)

    def eoi(self, eoi_id: str) -> EoiDescriptor:
        for e in self.eois:
            if e.id == eoi_id:
                return e
        raise KeyError(eoi_id)

    def eoi_entity(self, eoi_id: str) -> GroundTruthEntity | None:
        for ent in self.entities:
            if ent.is_eoi and ent.id == eoi_id:
                return ent
        return None

    def aoi_at(self, x: float, y: float) -> Aoi | None:
        """First AOI (in declaration order) covering the point."""
        for a in self.aois:
            if a.contains(x, y):
                return a
        return None


@dataclass(frozen=True)
class Violation:
    invariant: str
    element: str
    detail: str = ""

    def __str__(self) -> str:
        text = f"{self.invariant} [{self.element}]"
        return f"{text}: {self.detail}" if self.detail else text


def validate_scenario(s: Scenario) -> list[Violation]:
    """Check every scenario invariant. An empty list means the scenario is valid."""
    out: list[Violation] = []
    ext = s.map_extent
    if not (ext.xmax > ext.xmin and ext.ymax > ext.ymin):
        out.append(Violation("map_extent_degenerate", "map"))
    if not s.time_budget > 0:
        out.append(Violation("time_budget_nonpositive", "map", f"time_budget={s.time_budget}"))

    eoi_ids = {e.id for e in s.eois}
    for a in s.aois:
        if len(a.boundary) < 3 or not as_polygon(a.boundary).is_valid:
            out.append(Violation("invalid_polygon", a.id))
        if not all(ext.contains(x, y) for x, y in a.boundary):
            out.append(Violation("aoi_outside_extent", a.id))
        for eid, p in a.priors.items():
            if eid not in eoi_ids:
                out.append(Violation("unknown_eoi_reference", a.id, eid))
            if not (0.0 <= p <= 1.0) or math.isnan(p):
                out.append(Violation("prior_out_of_range", a.id, f"{eid}={p}"))
    for k in s.kozs:
        if len(k.boundary) < 3 or not as_polygon(k.boundary).is_valid:
            out.append(Violation("invalid_polygon", k.id))
        if not all(ext.contains(x, y) for x, y in k.boundary):
            out.append(Violation("koz_outside_extent", k.id))

    for e in s.eois:
        if e.color not in COLORS:
            out.append(Violation("invalid_color", e.id, e.color))
        if e.vehicle_type not in VEHICLE_TYPES:
            out.append(Violation("invalid_vehicle_type", e.id, e.vehicle_type))
        total = sum(a.priors.get(e.id, 0.0) for a in s.aois)
        if total > 1.0 + 1e-9:
            out.append(Violation("prior_sum_exceeds_one", e.id, f"sum={total:.6g}"))

    seen: set[str] = set()
    for ent in s.entities:
        if ent.id in seen:
            out.append(Violation("duplicate_entity_id", ent.id))
        seen.add(ent.id)
        if ent.color not in COLORS:
            out.append(Violation("invalid_color", ent.id, ent.color))
        if ent.vehicle_type not in VEHICLE_TYPES:
            out.append(Violation("invalid_vehicle_type", ent.id, ent.vehicle_type))
        x, y, z = ent.position
        if not ext.contains(x, y):
            out.append(Violation("entity_outside_extent", ent.id))
        ground = s.occupancy.ground_height(x, y)
        if abs(z - ground) > GROUND_TOLERANCE or s.occupancy.is_occupied((x, y, z)):
            out.append(Violation("entity_not_on_ground", ent.id, f"z={z}, ground={ground}"))
        if ent.is_eoi and ent.id not in eoi_ids:
            out.append(Violation("unknown_eoi_reference", ent.id))

    for e in s.eois:
        ent = s.eoi_entity(e.id)
        if ent is None:
            out.append(Violation("missing_eoi_entity", e.id))
            continue
        if (ent.vehicle_type, ent.color) != (e.vehicle_type, e.color):
            out.append(Violation("eoi_entity_mismatch", e.id))
        candidates = [a for a in s.aois if a.priors.get(e.id, 0.0) > 0.0]
        x, y, _ = ent.position
        if not any(a.contains(x, y) for a in candidates):
            out.append(Violation("eoi_outside_candidate_aois", e.id))
        # Unambiguity: no other entity with the same description in any candidate AOI.
        for other in s.entities:
            if other.id == ent.id:
                continue
            if (other.vehicle_type, other.color) != (e.vehicle_type, e.color):
                continue
            ox, oy, _ = other.position
            for a in candidates:
                if a.contains(ox, oy):
                    out.append(Violation("ambiguous_descriptor", e.id,
                                         f"entity {other.id} in {a.id}"))
                    break
    return out


class BeliefMap:
    """Per-EOI categorical distribution over AOIs plus an outside-all-AOIs residual."""

    def __init__(self, probs: Mapping[str, Mapping[str, float]], residual: Mapping[str, float]):
        self.probs = {e: dict(row) for e, row in probs.items()}
        self.residual = dict(residual)

    @classmethod
    def from_scenario(cls, s: Scenario) -> "BeliefMap":
        probs = {e.id: {a.id: float(a.priors.get(e.id, 0.0)) for a in s.aois} for e in s.eois}
        residual = {e: max(0.0, 1.0 - math.fsum(row.values())) for e, row in probs.items()}
        return cls(probs, residual)

    def copy(self) -> "BeliefMap":
        return BeliefMap(copy.deepcopy(self.probs), dict(self.residual))

    def prob(self, eoi: str, aoi: str | None) -> float:
        if aoi is None:
            return self.residual[eoi]
        return self.probs[eoi].get(aoi, 0.0)

    def total(self, eoi: str) -> float:
        return math.fsum(self.probs[eoi].values()) + self.residual[eoi]

    def collapse(self, eoi: str, aoi: str | None) -> None:
        """Positive evidence: put all of the EOI's mass on one AOI (or the residual)."""
        row = self.probs[eoi]
        for k in row:
            row[k] = 1.0 if k == aoi else 0.0
        self.residual[eoi] = 1.0 if aoi is None else 0.0

    def negative_search(self, eoi: str, aoi: str, coverage: float, p_detect: float) -> None:
        """In-place Bayes update after searching ``aoi`` without finding ``eoi``."""
        if not (0.0 <= coverage <= 1.0 and 0.0 <= p_detect <= 1.0):
            raise ValueError("coverage and p_detect must lie in [0, 1]")
        row = self.probs[eoi]
        if aoi not in row:
            raise KeyError(aoi)
        miss = coverage * p_detect
        p = row[aoi]
        norm = 1.0 - p * miss
        if norm <= 0.0:
            # Certain presence contradicted by certain absence.
            row[aoi] = 0.0
            rest = math.fsum(row.values()) + self.residual[eoi]
            if rest > 0.0:
                for k in row:
                    row[k] /= rest
                self.residual[eoi] /= rest
            else:
                self.residual[eoi] = 1.0
            return
        for k in row:
            row[k] = row[k] * (1.0 - miss) / norm if k == aoi else row[k] / norm
        self.residual[eoi] /= norm

    def to_dict(self) -> dict:
        return {e: {"aois": dict(sorted(row.items())), "residual": self.residual[e]}
                for e, row in sorted(self.probs.items())}


def belief_posterior_after_negative_search(belief: BeliefMap, eoi: str, aoi: str,
                                           coverage_fraction: float,
                                           p_detect_given_covered: float) -> BeliefMap:
    out = belief.copy()
    out.negative_search(eoi, aoi, coverage_fraction, p_detect_given_covered)
    return out
