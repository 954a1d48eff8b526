"""Synthetic perception: visibility, detection noise and attribute confusion.

Stands in for the vision pipeline's output interface. Each frame yields point
detections carrying a 3-D position with its standard deviation and per-class
likelihood vectors for color and vehicle type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .occupancy import OccupancyGrid
from .scenario import COLORS, VEHICLE_TYPES, Pose, Scenario

# Reported sigma never drops to zero so downstream Bayes updates stay defined.
MIN_REPORTED_SIGMA = 1e-3


def confusion_matrix(n: int, diag: float) -> np.ndarray:
    """Symmetric row-stochastic matrix with ``diag`` on the diagonal."""
    if n == 1:
        return np.ones((1, 1))
    off = (1.0 - diag) / (n - 1)
    m = np.full((n, n), off)
    np.fill_diagonal(m, diag)
    return m


@dataclass(frozen=True, eq=False)
class SensorModel:
    max_range: float = 60.0
    fov_half_angle: float = 0.30
    p_detect: float = 0.9
    position_noise_sigma: float = 1.5
    # When non-empty, each frame draws its sigma from these values instead.
    sigma_choices: tuple[float, ...] = ()
    range_scaled_noise: bool = False
    color_confusion: np.ndarray = field(default_factory=lambda: confusion_matrix(len(COLORS), 0.8))
    type_confusion: np.ndarray = field(default_factory=lambda: confusion_matrix(len(VEHICLE_TYPES), 0.9))
    # Log-normal spread applied to likelihood vectors before renormalising.
    likelihood_jitter: float = 0.5
    false_positive_rate: float = 0.05
    frame_period: float = 0.5

    def __post_init__(self):
        for name in ("color_confusion", "type_confusion"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError(f"{name} must be square")
            if np.any(m < 0) or not np.allclose(m.sum(axis=1), 1.0, atol=1e-9):
                raise ValueError(f"{name} rows must be probability vectors")
            object.__setattr__(self, name, m)
        if not 0.0 <= self.p_detect <= 1.0:
            raise ValueError("p_detect must lie in [0, 1]")
        if self.position_noise_sigma < 0 or any(s < 0 for s in self.sigma_choices):
            raise ValueError("sigma must be non-negative")
        if self.false_positive_rate < 0:
            raise ValueError("false_positive_rate must be non-negative")
        if not (self.max_range > 0 and self.frame_period > 0):
            raise ValueError("max_range and frame_period must be positive")

    def footprint_radius(self, altitude: float) -> float:
        return altitude * math.tan(self.fov_half_angle)


PRESETS: dict[str, dict] = {
    "perfect": dict(p_detect=1.0, position_noise_sigma=0.0, likelihood_jitter=0.0,
                    color_confusion=np.eye(len(COLORS)), type_confusion=np.eye(len(VEHICLE_TYPES)),
                    false_positive_rate=0.0),
    "clear": dict(p_detect=0.9, position_noise_sigma=1.5, likelihood_jitter=0.5,
                  color_confusion=confusion_matrix(len(COLORS), 0.8),
                  type_confusion=confusion_matrix(len(VEHICLE_TYPES), 0.9),
                  false_positive_rate=0.05),
    "night": dict(p_detect=0.75, position_noise_sigma=2.5, sigma_choices=(0.5, 4.0),
                  likelihood_jitter=0.8, color_confusion=confusion_matrix(len(COLORS), 0.6),
                  type_confusion=confusion_matrix(len(VEHICLE_TYPES), 0.8),
                  false_positive_rate=0.1),
    "fog": dict(p_detect=0.65, position_noise_sigma=3.0, range_scaled_noise=True,
                likelihood_jitter=0.8, color_confusion=confusion_matrix(len(COLORS), 0.65),
                type_confusion=confusion_matrix(len(VEHICLE_TYPES), 0.85),
                false_positive_rate=0.1),
}


def sensor_preset(name: str, **overrides) -> SensorModel:
    if name not in PRESETS:
        raise ValueError(f"unknown sensor preset {name!r}; choose from {sorted(PRESETS)}")
    return SensorModel(**{**PRESETS[name], **overrides})


_FLOAT_KEYS = ("max_range", "fov_half_angle", "p_detect", "position_noise_sigma",
               "likelihood_jitter", "false_positive_rate", "frame_period")


def sensor_from_section(section: Mapping[str, str], default_preset: str = "clear") -> SensorModel:
    """Build a model from a scenario ``[sensor]`` section (preset plus overrides)."""
    overrides: dict = {}
    for key in _FLOAT_KEYS:
        if key in section:
            overrides[key] = float(section[key])
    if "sigma_choices" in section:
        overrides["sigma_choices"] = tuple(float(v) for v in section["sigma_choices"].replace(",", " ").split())
    if "range_scaled_noise" in section:
        overrides["range_scaled_noise"] = section["range_scaled_noise"].lower() in ("1", "true", "yes")
    if "color_diag" in section:
        overrides["color_confusion"] = confusion_matrix(len(COLORS), float(section["color_diag"]))
    if "type_diag" in section:
        overrides["type_confusion"] = confusion_matrix(len(VEHICLE_TYPES), float(section["type_diag"]))
    return sensor_preset(section.get("preset", default_preset), **overrides)


@dataclass(frozen=True)
class Detection:
    frame_id: int
    measured_position: tuple[float, float, float]
    position_sigma: float
    color_likelihood: tuple[float, ...]
    type_likelihood: tuple[float, ...]
    confidence: float
    # Simulator bookkeeping; the world model never reads it.
    source_entity: str | None = None


def traverse_voxels(grid: OccupancyGrid, p0: Sequence[float], p1: Sequence[float]) -> Iterator[tuple[int, int, int]]:
    """Voxels pierced by segment p0->p1, in order (Amanatides-Woo 3-D DDA).

    Voxels outside the grid volume are skipped but traversal continues.
    """
    s = grid.cell_size
    ox, oy = grid.origin
    start = np.array([(p0[0] - ox) / s, (p0[1] - oy) / s, p0[2] / s])
    end = np.array([(p1[0] - ox) / s, (p1[1] - oy) / s, p1[2] / s])
    d = end - start
    idx = [math.floor(v) for v in start]
    step = [0, 0, 0]
    t_max = [math.inf] * 3
    t_delta = [math.inf] * 3
    for a in range(3):
        if d[a] > 0:
            step[a] = 1
            t_max[a] = (idx[a] + 1 - start[a]) / d[a]
            t_delta[a] = 1.0 / d[a]
        elif d[a] < 0:
            step[a] = -1
            t_max[a] = (start[a] - idx[a]) / -d[a]
            t_delta[a] = -1.0 / d[a]
    nx, ny, nz = grid.cells.shape
    while True:
        if 0 <= idx[0] < nx and 0 <= idx[1] < ny and 0 <= idx[2] < nz:
            yield (idx[0], idx[1], idx[2])
        a = min(range(3), key=t_max.__getitem__)
        if t_max[a] >= 1.0:
            return
        idx[a] += step[a]
        t_max[a] += t_delta[a]


def line_of_sight(grid: OccupancyGrid, p0: Sequence[float], p1: Sequence[float]) -> bool:
    cells = grid.cells
    for idx in traverse_voxels(grid, p0, p1):
        if cells[idx]:
            return False
    return True


def in_view(pose: Pose, target: Sequence[float], m: SensorModel) -> bool:
    """Within range and inside the downward-looking cone."""
    px, py, pz = pose.position
    dx, dy, dz = target[0] - px, target[1] - py, target[2] - pz
    rng = math.sqrt(dx * dx + dy * dy + dz * dz)
    if rng > m.max_range:
        return False
    if rng == 0.0:
        return True
    return -dz >= rng * math.cos(m.fov_half_angle)


def visible_entities(pose: Pose, s: Scenario, m: SensorModel) -> list[str]:
    out = []
    for ent in s.entities:
        if in_view(pose, ent.position, m) and line_of_sight(s.occupancy, pose.position, ent.position):
            out.append(ent.id)
    return out


def _noisy_likelihood(row: np.ndarray, jitter: float, rng: np.random.Generator) -> tuple[float, ...]:
    v = row * np.exp(rng.normal(0.0, jitter, size=row.shape)) if jitter > 0 else row.copy()
    v = v / v.sum()
    return tuple(float(x) for x in v)


def _frame_sigma(m: SensorModel, rng: np.random.Generator) -> float:
    if m.sigma_choices:
        return float(m.sigma_choices[int(rng.integers(len(m.sigma_choices)))])
    return m.position_noise_sigma


def sense(pose: Pose, s: Scenario, m: SensorModel, rng: np.random.Generator,
          frame_id: int = 0) -> list[Detection]:
    """One frame of noisy detections; deterministic given the generator state."""
    sigma0 = _frame_sigma(m, rng)
    by_id = {e.id: e for e in s.entities}
    out = []
    for ent_id in visible_entities(pose, s, m):
        if rng.random() >= m.p_detect:
            continue
        ent = by_id[ent_id]
        sigma = sigma0
        if m.range_scaled_noise:
            sigma *= 1.0 + math.dist(pose.position, ent.position) / m.max_range
        noise = rng.normal(0.0, sigma, size=3) if sigma > 0 else np.zeros(3)
        pos = tuple(float(v) for v in np.asarray(ent.position) + noise)
        color = _noisy_likelihood(m.color_confusion[COLORS.index(ent.color)], m.likelihood_jitter, rng)
        vtype = _noisy_likelihood(m.type_confusion[VEHICLE_TYPES.index(ent.vehicle_type)],
                                  m.likelihood_jitter, rng)
        out.append(Detection(frame_id, pos, max(sigma, MIN_REPORTED_SIGMA), color, vtype,
                             max(color) * max(vtype), ent_id))

    n_fp = int(rng.poisson(m.false_positive_rate)) if m.false_positive_rate > 0 else 0
    radius = m.footprint_radius(pose.position[2])
    ext = s.map_extent
    for _ in range(n_fp):
        # Spurious returns land on free ground inside the footprint.
        for _ in range(20):
            r = radius * math.sqrt(rng.random())
            th = rng.uniform(0.0, 2 * math.pi)
            x = pose.position[0] + r * math.cos(th)
            y = pose.position[1] + r * math.sin(th)
            z = s.occupancy.ground_height(x, y)
            if ext.contains(x, y) and not s.occupancy.is_occupied((x, y, z)):
                break
        else:
            continue
        sigma = max(sigma0, MIN_REPORTED_SIGMA)
        color = tuple(float(v) for v in rng.dirichlet(np.full(len(COLORS), 2.0)))
        vtype = tuple(float(v) for v in rng.dirichlet(np.full(len(VEHICLE_TYPES), 2.0)))
        out.append(Detection(frame_id, (x, y, z), sigma, color, vtype, max(color) * max(vtype), None))
    return out
