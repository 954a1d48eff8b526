"""Timed mission loop, trace writing and batch execution.

One mission wires the sensor, the world model and the three planners:
select AOIs, fly to the next one, sweep it, fold the sweep back into the
belief map, and repeat until the budget runs out, nothing is worth visiting,
or every EOI has been reported.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from shapely.geometry import LineString

from .coverage import (
    COVERAGE_MODES,
    EOIS_FOUND,
    CoverageState,
    free_component,
    rasterize_aoi,
    run_boustrophedon,
    run_coverage,
    sweep_lanes,
)
from .flight import Flight
from .generator import GeneratorConfig, generate_scenario
from .navigation import Navigator, Unreachable
from .scenario import BeliefMap, Pose, Scenario
from .scenario_io import load_scenario
from .selection import (
    DEFAULT_P_DETECT,
    DEFAULT_QUANTUM,
    ItineraryPlan,
    SelectionInstance,
    full_coverage_time,
    greedy_plan,
    route_plan,
    select_plan,
)
from .sensor import PRESETS, SensorModel, sense, sensor_from_section, sensor_preset
from .worldmodel import ACCUMULATION_MODES, DEFAULT_GATE, DEFAULT_THRESHOLD, WorldModel, WorldModelConfig

log = logging.getLogger(__name__)

TRACE_VERSION = 1
SELECTION_MODES = ("optimal", "greedy", "random")
THREADS_ENV = "NEUSIS_SIM_THREADS"


class ConfigError(ValueError):
    """Invalid mission configuration (exit code 1)."""


class MissionInvariantError(RuntimeError):
    """A runtime safety or timing invariant was violated (exit code 2)."""


@dataclass
class MissionConfig:
    scenario_path: str | None = None
    # Alternative to a file: generate the scenario from this seed.
    gen_seed: int | None = None
    generator: dict = field(default_factory=dict)
    # None means: take the scenario's [sensor] section, else "clear".
    sensor_preset: str | None = None
    sensor_overrides: dict = field(default_factory=dict)
    accumulation: str = "bayes"
    threshold: float = DEFAULT_THRESHOLD
    gate_radius: float = DEFAULT_GATE
    selection: str = "optimal"
    coverage: str = "snac"
    lam: float | None = None
    time_quantum: float = DEFAULT_QUANTUM
    altitude: float = 40.0
    speed: float = 10.0
    margin: float = 3.0
    grid_resolution: float = 20.0
    sweep_width: float = 20.0
    p_detect_given_covered: float = DEFAULT_P_DETECT
    time_budget: float | None = None
    seed: int = 0
    label: str = ""
    output: str | None = None

    def validate(self) -> None:
        if (self.scenario_path is None) == (self.gen_seed is None):
            raise ConfigError("give exactly one of scenario_path or gen_seed")
        if self.scenario_path is not None and not Path(self.scenario_path).is_file():
            raise ConfigError(f"scenario file not found: {self.scenario_path}")
        if self.sensor_preset is not None and self.sensor_preset not in PRESETS:
            raise ConfigError(f"unknown sensor preset {self.sensor_preset!r}")
        if self.accumulation not in ACCUMULATION_MODES:
            raise ConfigError(f"accumulation must be one of {ACCUMULATION_MODES}")
        if self.selection not in SELECTION_MODES:
            raise ConfigError(f"selection must be one of {SELECTION_MODES}")
        if self.coverage not in COVERAGE_MODES:
            raise ConfigError(f"coverage must be one of {COVERAGE_MODES}")
        for name in ("time_quantum", "speed", "grid_resolution", "sweep_width", "altitude", "gate_radius"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.margin < 0:
            raise ConfigError("margin must be non-negative")
        if self.lam is not None and self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError("report threshold must lie in (0, 1]")
        if not 0.0 <= self.p_detect_given_covered <= 1.0:
            raise ConfigError("p_detect_given_covered must lie in [0, 1]")
        if self.time_budget is not None and not self.time_budget > 0:
            raise ConfigError("time budget must be positive")

    def cell(self) -> str:
        """Ablation cell label: explicit label, else the flag combination."""
        if self.label:
            return self.label
        preset = self.sensor_preset or "scenario"
        return f"{self.selection}+{self.coverage}/{preset}/{self.accumulation}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("output")
        return d


@dataclass
class MissionResult:
    lines: list[str]
    outcome: dict
    track: list[tuple[float, float, float]]
    frame_poses: list[tuple[float, float, float]]
    coverage_states: dict[str, CoverageState]
    wall_clock: float = 0.0


def _r(v: float, nd: int = 6) -> float:
    v = round(float(v), nd)
    return 0.0 if v == 0 else v


def _rl(seq, nd: int = 6) -> list[float]:
    return [_r(v, nd) for v in seq]


def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), allow_nan=False)


def build_scenario(cfg: MissionConfig) -> Scenario:
    if cfg.scenario_path is not None:
        return load_scenario(cfg.scenario_path)
    return generate_scenario(cfg.gen_seed, GeneratorConfig(**cfg.generator))


def build_sensor(cfg: MissionConfig, scn: Scenario) -> SensorModel:
    overrides = dict(cfg.sensor_overrides)
    if "sigma_choices" in overrides:
        overrides["sigma_choices"] = tuple(overrides["sigma_choices"])
    if cfg.sensor_preset is None:
        base = sensor_from_section(scn.sensor)
        return replace(base, **overrides) if overrides else base
    return sensor_preset(cfg.sensor_preset, **overrides)


def _entry_path(waypoints: Sequence[Sequence[float]], aoi) -> list[tuple[float, float]]:
    """Cut a path at the first point where it enters the AOI."""
    pts = [tuple(map(float, p[:2])) for p in waypoints]
    if not pts or aoi.contains(*pts[0]):
        return pts[:1]
    out = [pts[0]]
    for a, b in zip(pts, pts[1:]):
        if aoi.contains(*b) or LineString([a, b]).intersects(aoi.shape):
            hit = LineString([a, b]).intersection(aoi.shape)
            coords = [c for g in getattr(hit, "geoms", [hit]) for c in getattr(g, "coords", [])]
            if coords:
                first = min(coords, key=lambda c: (c[0] - a[0]) ** 2 + (c[1] - a[1]) ** 2)
                out.append((float(first[0]), float(first[1])))
                return out
        out.append(b)
    return out


class _Mission:
    def __init__(self, cfg: MissionConfig, scn: Scenario):
        self.cfg = cfg
        self.scn = scn
        self.sensor = build_sensor(cfg, scn)
        self.budget = float(cfg.time_budget if cfg.time_budget is not None else scn.time_budget)
        sensor_seq, plan_seq = np.random.SeedSequence(cfg.seed).spawn(2)
        self.sensor_rng = np.random.default_rng(sensor_seq)
        self.plan_rng = np.random.default_rng(plan_seq)
        self.nav = Navigator.for_scenario([k.boundary for k in scn.kozs], scn.occupancy,
                                          cfg.altitude, cfg.margin, cfg.speed)
        start = scn.uav_start.position
        reachable = free_component(scn.map_extent, self.nav.obstacles, self.nav.free_point(start))
        self.states = {a.id: CoverageState(rasterize_aoi(a, cfg.grid_resolution, self.nav.obstacles, reachable),
                                           cfg.grid_resolution) for a in scn.aois}
        self.lanes = {}
        self.lane_progress = {a.id: [0] for a in scn.aois}
        if cfg.coverage == "boustrophedon":
            self.lanes = {a.id: sweep_lanes(a, cfg.sweep_width, self.nav.obstacles) for a in scn.aois}
        self.anchor = {a.id: self.nav.free_point(a.centroid) for a in scn.aois}
        self.full_time = {a.id: full_coverage_time(a.area, cfg.speed, cfg.sweep_width) for a in scn.aois}
        self.belief = BeliefMap.from_scenario(scn)
        self.wm = WorldModel(scn.occupancy, scn.map_extent, scn.aois, scn.eois, self.belief,
                             WorldModelConfig(cfg.accumulation, cfg.threshold, cfg.gate_radius))
        self.flight = Flight(start, cfg.altitude, cfg.speed, self.sensor.frame_period, self.budget, self._on_frame)
        self.lines: list[str] = []
        self.frame_poses: list[tuple[float, float, float]] = []
        self.route: list[str] | None = None
        self.lam = cfg.lam if cfg.lam is not None else 1.0 / self.budget

    # -- records -----------------------------------------------------------
    def emit(self, rec: dict) -> None:
        self.lines.append(_dump(rec))

    def header(self) -> dict:
        scn = self.scn
        return {
            "type": "header", "version": TRACE_VERSION, "cell": self.cfg.cell(), "seed": self.cfg.seed,
            "budget": self.budget, "frame_period": self.sensor.frame_period,
            "config": self.cfg.to_dict(),
            "scenario": {
                "seed": scn.seed,
                "extent": [scn.map_extent.xmin, scn.map_extent.ymin, scn.map_extent.xmax, scn.map_extent.ymax],
                "start": list(scn.uav_start.position),
                "aois": [{"id": a.id, "boundary": [list(p) for p in a.boundary]} for a in scn.aois],
                "kozs": [{"id": k.id, "boundary": [list(p) for p in k.boundary]} for k in scn.kozs],
                "obstacles": [[_rl(p, 3) for p in o] for o in self.nav.obstacles],
                "eois": [{"id": e.id, "type": e.vehicle_type, "color": e.color,
                          "position": list(scn.eoi_entity(e.id).position)} for e in scn.eois],
                "entities": [{"id": g.id, "position": list(g.position), "eoi": g.is_eoi} for g in scn.entities],
            },
        }

    def _on_frame(self, pose: Pose, k: int) -> None:
        x, y, _ = pose.position
        t = pose.timestamp
        if t > self.budget + 1e-9:
            raise MissionInvariantError(f"frame {k} at t={t} past budget {self.budget}")
        for koz in self.scn.kozs:
            if koz.contains(x, y):
                raise MissionInvariantError(f"frame {k} pose ({x:.3f}, {y:.3f}) inside KOZ {koz.id}")
        dets = sense(pose, self.scn, self.sensor, self.sensor_rng, k)
        summary = self.wm.step(dets, t)
        self.frame_poses.append((x, y, t))
        self.emit({"type": "frame", "frame": k, "t": _r(t), "pose": _rl((x, y, pose.position[2], pose.yaw)),
                   "raw": summary.raw, "kept": summary.kept, "tracks": summary.tracks,
                   "reports": [_report_dict(r) for r in summary.reports]})

    # -- planning ----------------------------------------------------------
    def instance(self) -> SelectionInstance | None:
        unfound = self.wm.unfound()
        active = [a for a in self.scn.aois if not self.states[a.id].empty]
        if not active or not unfound:
            return None
        here = self.nav.free_point(self.flight.xy)
        points = [here] + [self.anchor[a.id] for a in active]
        n = len(points)
        travel = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                try:
                    d = self.nav.distance(points[i], points[j]) / self.cfg.speed
                except Unreachable:
                    d = float("inf")
                travel[i, j] = travel[j, i] = d
        beliefs = [{e: self.belief.prob(e, a.id) for e in unfound} for a in active]
        full = [self.full_time[a.id] * (1.0 - self.states[a.id].fraction()) for a in active]
        return SelectionInstance([a.id for a in active], beliefs, full, travel,
                                 self.budget - self.flight.t, self.cfg.time_quantum,
                                 self.cfg.p_detect_given_covered, self.lam, [a.area for a in active])

    def plan(self, inst: SelectionInstance) -> ItineraryPlan:
        mode = self.cfg.selection
        if mode == "optimal":
            return select_plan(inst)
        if mode == "greedy":
            return greedy_plan(inst)
        if self.route is None:
            ids = [a.id for a in self.scn.aois]
            self.route = [ids[i] for i in self.plan_rng.permutation(len(ids))]
        return route_plan(inst, self.route)

    # -- execution ---------------------------------------------------------
    def on_path(self, waypoints) -> None:
        self.emit({"type": "path", "t": _r(self.flight.t), "waypoints": [_rl(p, 3) for p in waypoints]})

    def run_leg(self, aoi_id: str, alloc: float) -> str | None:
        fl = self.flight
        aoi = self.scn.aoi(aoi_id)
        try:
            path = self.nav.shortest_path(fl.xy, self.anchor[aoi_id])
        except Unreachable:
            log.warning("AOI %s unreachable", aoi_id)
            return None
        waypoints = _entry_path(path.waypoints, aoi)
        self.on_path(waypoints)
        status = fl.follow(waypoints, self.budget, stop=self.wm.all_found)
        if status != "arrived":
            return None
        state = self.states[aoi_id]
        if self.cfg.coverage == "snac":
            out = run_coverage(state, alloc, fl, self.nav, self.wm.all_found, self.on_path)
        else:
            out = run_boustrophedon(state, self.lanes[aoi_id], alloc, fl, self.nav, self.wm.all_found,
                                    self.on_path, self.lane_progress[aoi_id])
        before = out.fraction_before
        newly = 0.0 if before >= 1.0 else (out.fraction - before) / (1.0 - before)
        newly = min(1.0, max(0.0, newly))
        for e in self.wm.unfound():
            self.belief.negative_search(e, aoi_id, newly, self.cfg.p_detect_given_covered)
        self.emit({"type": "coverage", "aoi": aoi_id, "reason": out.reason, "allocation": _r(alloc),
                   "fraction": _r(out.fraction), "newly_covered": _r(newly),
                   "t_start": _r(out.t_start), "t_end": _r(out.t_end),
                   "belief": {e: {k: _r(v) for k, v in sorted(row["aois"].items())} | {"_outside": _r(row["residual"])}
                              for e, row in self.belief.to_dict().items()}})
        return out.reason

    def run(self) -> str:
        fl = self.flight
        while True:
            if self.wm.all_found():
                return EOIS_FOUND
            if fl.t >= self.budget:
                return "budget_exhausted"
            inst = self.instance()
            if inst is None:
                return "plan_empty"
            plan = self.plan(inst)
            if plan.total_time > inst.budget + 1e-6:
                raise MissionInvariantError(f"plan needs {plan.total_time}s with {inst.budget}s left")
            self.emit({"type": "plan", "t": _r(fl.t), "mode": self.cfg.selection,
                       "legs": [[a, _r(t)] for a, t in plan.legs], "expected_gain": _r(plan.expected_gain),
                       "total_time": _r(plan.total_time), "objective": _r(plan.objective),
                       "infeasible": plan.infeasible})
            if not plan.legs:
                return "infeasible" if plan.infeasible else "plan_empty"
            aoi_id, alloc = plan.legs[0]
            t_before, open_before = fl.t, self.states[aoi_id].n_open
            self.run_leg(aoi_id, alloc)
            stalled = fl.t == t_before and self.states[aoi_id].n_open == open_before
            if stalled and not self.wm.all_found():
                # Could not make progress towards this AOI; drop it for the rest of the mission.
                self.states[aoi_id].open_mask[:] = False


def _report_dict(r) -> dict:
    return {"eoi": r.eoi_id, "position": _rl(r.reported_position), "confidence": _r(r.confidence, 9),
            "t": _r(r.timestamp), "track": r.track_id}


def run_mission(cfg: MissionConfig, scenario: Scenario | None = None) -> MissionResult:
    """Simulate one mission; deterministic in (scenario, cfg, seed).

    The trace is written atomically to ``cfg.output`` when set. Wall-clock
    time goes to a ``.stats.json`` sidecar so trace bytes stay reproducible.
    """
    if scenario is None:
        cfg.validate()
        scenario = build_scenario(cfg)
    t_wall = time.perf_counter()
    m = _Mission(cfg, scenario)
    m.emit(m.header())
    try:
        termination = m.run()
    except MissionInvariantError as exc:
        m.emit({"type": "abort", "t": _r(m.flight.t), "error": str(exc)})
        if cfg.output:
            write_trace(cfg.output, m.lines)
        raise
    offline = m.wm.finalize(m.flight.t)
    found = {e.id: (_r(m.wm.found[e.id].timestamp) if e.id in m.wm.found else None) for e in scenario.eois}
    outcome = {"type": "outcome", "termination": termination, "end_time": _r(m.flight.t),
               "frames": m.flight.frames, "found": found,
               "offline": [_report_dict(r) for r in offline],
               "coverage": {a: _r(s.fraction()) for a, s in sorted(m.states.items())}}
    m.emit(outcome)
    wall = time.perf_counter() - t_wall
    if cfg.output:
        write_trace(cfg.output, m.lines)
        stats = Path(cfg.output).with_suffix(".stats.json")
        stats.write_text(json.dumps({"wall_clock_s": round(wall, 3)}) + "\n")
    return MissionResult(m.lines, outcome, m.flight.track, m.frame_poses, m.states, wall)


def write_trace(path: str | os.PathLike, lines: Sequence[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_trace(path: str | os.PathLike) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass
class BatchItem:
    index: int
    result: MissionResult | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.result is not None


def _run_one(args) -> BatchItem:
    index, cfg = args
    try:
        return BatchItem(index, run_mission(cfg))
    except Exception as exc:  # noqa: BLE001 - recorded, batch continues
        return BatchItem(index, error=f"{type(exc).__name__}: {exc}")


def worker_count(n_jobs: int, requested: int | None = None) -> int:
    cap = requested
    if cap is None:
        env = os.environ.get(THREADS_ENV)
        cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def run_batch(cfgs: Sequence[MissionConfig], workers: int | None = None) -> list[BatchItem]:
    """Run missions, in parallel across processes when allowed; results keep input order."""
    jobs = list(enumerate(cfgs))
    n = worker_count(len(jobs), workers)
    if n <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_run_one, jobs))


def sweep_configs(base: MissionConfig, gen_seeds: Sequence[int], seed_base: int = 0,
                  out_dir: str | None = None) -> list[MissionConfig]:
    """One config per generated scenario; mission seed = seed_base + index."""
    out = []
    for i, g in enumerate(gen_seeds):
        output = None
        if out_dir is not None:
            output = str(Path(out_dir) / f"{_slug(base.cell())}__s{g}.jsonl")
        out.append(replace(base, scenario_path=None, gen_seed=g, seed=seed_base + i, output=output))
    return out


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in text)
