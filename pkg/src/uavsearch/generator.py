"""Seeded random scenario generator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from shapely.geometry import Point, box

from .geometry import rectangle
from .occupancy import OccupancyGrid
from .scenario import (
    COLORS,
    DEFAULT_TIME_BUDGET,
    VEHICLE_TYPES,
    Aoi,
    EoiDescriptor,
    GroundTruthEntity,
    Koz,
    MapExtent,
    Pose,
    Scenario,
    validate_scenario,
)


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    map_size: float = 500.0
    n_aois: tuple[int, int] = (4, 6)
    aoi_side: tuple[float, float] = (80.0, 140.0)
    aoi_gap: float = 25.0
    n_eois: int = 4
    n_distractors: int = 8
    n_kozs: int = 2
    koz_side: tuple[float, float] = (30.0, 70.0)
    koz_clearance: float = 8.0
    n_buildings: int = 30
    building_side: tuple[float, float] = (8.0, 20.0)
    building_height: tuple[float, float] = (4.0, 12.0)
    n_towers: int = 1
    tower_height: tuple[float, float] = (46.0, 56.0)
    # Dirichlet concentration for per-EOI priors over its candidate AOIs.
    prior_concentration: float = 1.0
    prior_mass: tuple[float, float] = (0.85, 1.0)
    min_prior: float = 0.1
    candidate_fraction: float = 0.75
    cell_size: float = 2.0
    grid_height: float = 60.0
    time_budget: float = DEFAULT_TIME_BUDGET
    altitude: float = 40.0
    max_attempts: int = 50

    def __post_init__(self):
        lo, hi = self.n_aois
        if not (2 <= lo <= hi <= 6):
            raise ValueError("n_aois must lie within 2..6")
        if not (1 <= self.n_eois <= 4):
            raise ValueError("n_eois must lie within 1..4")


def _round(v: float) -> float:
    return round(float(v), 2)


def _place_rects(rng, n, side, bounds, avoid, gap, tries=400):
    """Axis-aligned rectangles that keep ``gap`` from each other and from ``avoid``."""
    x0, y0, x1, y1 = bounds
    placed = []
    for _ in range(n):
        for _ in range(tries):
            w, h = rng.uniform(*side, size=2)
            cx = rng.uniform(x0 + w / 2, x1 - w / 2)
            cy = rng.uniform(y0 + h / 2, y1 - h / 2)
            r = box(_round(cx - w / 2), _round(cy - h / 2), _round(cx + w / 2), _round(cy + h / 2))
            if all(r.distance(o) >= gap for o in placed + avoid):
                placed.append(r)
                break
        else:
            return None
    return placed


def _random_free_point(rng, region, blocked, tries=400):
    minx, miny, maxx, maxy = region.bounds
    for _ in range(tries):
        p = Point(_round(rng.uniform(minx, maxx)), _round(rng.uniform(miny, maxy)))
        if region.contains(p) and not any(b.intersects(p) for b in blocked):
            return p
    return None


def _attempt(rng, cfg: GeneratorConfig, seed: int) -> Scenario | None:
    size = cfg.map_size
    ext = MapExtent(0.0, 0.0, size, size)
    start = (20.0, 20.0, cfg.altitude)
    start_zone = Point(start[0], start[1]).buffer(30.0)
    inner = (20.0, 20.0, size - 20.0, size - 20.0)

    n_aois = int(rng.integers(cfg.n_aois[0], cfg.n_aois[1] + 1))
    aoi_rects = _place_rects(rng, n_aois, cfg.aoi_side, inner, [start_zone], cfg.aoi_gap)
    if aoi_rects is None:
        return None
    aoi_rects.sort(key=lambda r: (r.bounds[1], r.bounds[0]))

    # KOZs: some between AOIs, some clipping an AOI corner.
    koz_rects = _place_rects(rng, cfg.n_kozs, cfg.koz_side, inner, [start_zone], 10.0)
    if koz_rects is None:
        return None
    koz_zone = [k.buffer(cfg.koz_clearance) for k in koz_rects]

    # Buildings (low, fly-over) and towers (above flight altitude, must be avoided).
    boxes = []
    structures = []
    for _ in range(cfg.n_buildings):
        w, h = rng.uniform(*cfg.building_side, size=2)
        cx, cy = rng.uniform(10.0, size - 10.0, size=2)
        r = box(_round(cx - w / 2), _round(cy - h / 2), _round(cx + w / 2), _round(cy + h / 2))
        if r.intersects(start_zone):
            continue
        height = _round(rng.uniform(*cfg.building_height))
        boxes.append((*r.bounds[:2], 0.0, *r.bounds[2:], height))
        structures.append(r)
    towers = _place_rects(rng, cfg.n_towers, (10.0, 16.0), inner, [start_zone], 5.0) or []
    for r in towers:
        boxes.append((*r.bounds[:2], 0.0, *r.bounds[2:], _round(rng.uniform(*cfg.tower_height))))
        structures.append(r)
    nz = int(round(cfg.grid_height / cfg.cell_size))
    n_xy = int(round(size / cfg.cell_size))
    grid = OccupancyGrid.from_boxes((0.0, 0.0), cfg.cell_size, (n_xy, n_xy, nz), boxes)
    # Vehicles keep a car-length away from walls so their voxel column is open.
    blocked = koz_zone + [s.buffer(4.0) for s in structures]

    aoi_ids = [f"A{i + 1}" for i in range(n_aois)]
    eoi_ids = [f"E{i + 1}" for i in range(cfg.n_eois)]
    all_desc = [(t, c) for t in VEHICLE_TYPES for c in COLORS]
    pick = rng.choice(len(all_desc), size=cfg.n_eois, replace=False)
    descs = {e: all_desc[int(i)] for e, i in zip(eoi_ids, pick)}

    priors = {a: {} for a in aoi_ids}
    entities = []
    candidates_of = {}
    for e in eoi_ids:
        k = max(1, int(round(cfg.candidate_fraction * n_aois)))
        k = int(rng.integers(1, k + 1)) if k > 1 else 1
        cand = sorted(int(i) for i in rng.choice(n_aois, size=k, replace=False))
        mass = rng.uniform(*cfg.prior_mass)
        w = rng.dirichlet(np.full(k, cfg.prior_concentration))
        w = np.maximum(w, cfg.min_prior)
        w = w / w.sum() * mass
        w = [round(float(v), 4) for v in w]
        if sum(w) > 1.0:
            w[-1] = round(w[-1] - (sum(w) - 1.0), 4)
        for i, v in zip(cand, w):
            priors[aoi_ids[i]][e] = v
        candidates_of[e] = [aoi_rects[i] for i in cand]
        # The containing AOI is drawn in proportion to the priors.
        chosen = cand[int(rng.choice(k, p=np.asarray(w) / sum(w)))]
        p = _random_free_point(rng, aoi_rects[chosen].buffer(-3.0), blocked)
        if p is None:
            return None
        t, c = descs[e]
        entities.append(GroundTruthEntity(e, (p.x, p.y, 0.0), t, c, True))

    # Half the distractors copy an EOI description but park outside every AOI;
    # the rest sit inside AOIs with descriptions that match no candidate EOI there.
    n_copy = cfg.n_distractors // 2
    outside = box(*inner)
    for r in aoi_rects:
        outside = outside.difference(r.buffer(5.0))
    for j in range(cfg.n_distractors):
        if j < n_copy:
            t, c = descs[eoi_ids[j % len(eoi_ids)]]
            p = _random_free_point(rng, outside, blocked)
        else:
            r = aoi_rects[int(rng.integers(n_aois))]
            p = _random_free_point(rng, r.buffer(-3.0), blocked)
            if p is None:
                return None
            forbidden = {descs[e] for e in eoi_ids if any(cr.covers(p) for cr in candidates_of[e])}
            options = [d for d in all_desc if d not in forbidden]
            t, c = options[int(rng.integers(len(options)))]
        if p is None:
            return None
        entities.append(GroundTruthEntity(f"D{j + 1}", (p.x, p.y, 0.0), t, c, False))

    aois = tuple(Aoi(a, rectangle(*r.bounds), priors[a]) for a, r in zip(aoi_ids, aoi_rects))
    kozs = tuple(Koz(f"K{i + 1}", rectangle(*r.bounds)) for i, r in enumerate(koz_rects))
    eois = tuple(EoiDescriptor(e, *descs[e]) for e in eoi_ids)
    return Scenario(
        map_extent=ext, aois=aois, kozs=kozs, eois=eois, entities=tuple(entities),
        occupancy=grid, time_budget=cfg.time_budget, uav_start=Pose(start, 0.0, 0.0), seed=seed,
    )


def generate_scenario(seed: int, cfg: GeneratorConfig | None = None) -> Scenario:
    """Deterministic scenario for ``(seed, cfg)``.

    Raises GenerationError when no valid layout is found within
    ``cfg.max_attempts`` draws; constraints are never relaxed.
    """
    cfg = cfg or GeneratorConfig()
    rng = np.random.default_rng(seed)
    for _ in range(cfg.max_attempts):
        s = _attempt(rng, cfg, seed)
        if s is not None and not validate_scenario(s):
            return s
    raise GenerationError(f"no valid scenario after {cfg.max_attempts} attempts (seed={seed})")
