"""Line-oriented scenario file format.

A scenario file is UTF-8 text made of ``[section]`` / ``[kind id]`` headers
followed by ``key = value`` lines. ``#`` starts a comment. Keys may repeat
(``box`` in ``[occupancy]``, one per occupied block)::

    [map]
    version = 1
    extent = 0 0 500 500
    time_budget = 300
    uav_start = 10 10 40 0
    seed = 7

    [aoi A1]
    boundary = 50 50, 150 50, 150 150, 50 150
    prior.E1 = 0.7

    [koz K1]
    boundary = 200 200, 240 200, 240 240, 200 240

    [eoi E1]
    type = suv
    color = red

    [entity E1]
    position = 100 100 0
    type = suv
    color = red
    eoi = true

    [occupancy]
    origin = 0 0
    cell_size = 2
    dims = 250 250 30
    box = 10 10 0 20 20 8
    file = grid.nsog        # optional external NSOG grid, relative to this file

    [sensor]
    preset = clear
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .occupancy import OccupancyGrid, read_nsog, write_nsog
from .scenario import (
    DEFAULT_TIME_BUDGET,
    Aoi,
    EoiDescriptor,
    GroundTruthEntity,
    Koz,
    MapExtent,
    Pose,
    Scenario,
    Violation,
    validate_scenario,
)

FORMAT_VERSION = 1


class ScenarioParseError(ValueError):
    pass


class ScenarioValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("invalid scenario: " + "; ".join(str(v) for v in violations))


@dataclass
class _Section:
    kind: str
    name: str | None
    line: int
    items: list[tuple[str, str, int]] = field(default_factory=list)

    def get(self, key: str, default=None):
        for k, v, _ in self.items:
            if k == key:
                return v
        return default

    def require(self, key: str) -> str:
        value = self.get(key)
        if value is None:
            raise ScenarioParseError(f"line {self.line}: [{self.kind}] is missing '{key}'")
        return value

    def getall(self, key: str) -> list[str]:
        return [v for k, v, _ in self.items if k == key]


def _parse_sections(text: str) -> list[_Section]:
    sections: list[_Section] = []
    current: _Section | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioParseError(f"line {lineno}: unterminated section header")
            parts = line[1:-1].split()
            if not parts or len(parts) > 2:
                raise ScenarioParseError(f"line {lineno}: bad section header {line!r}")
            current = _Section(parts[0], parts[1] if len(parts) == 2 else None, lineno)
            sections.append(current)
            continue
        if "=" not in line:
            raise ScenarioParseError(f"line {lineno}: expected 'key = value'")
        if current is None:
            raise ScenarioParseError(f"line {lineno}: key outside of any section")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ScenarioParseError(f"line {lineno}: empty key")
        current.items.append((key, value, lineno))
    return sections


def _floats(value: str, n: int | None, where: str) -> tuple[float, ...]:
    try:
        out = tuple(float(tok) for tok in value.replace(",", " ").split())
    except ValueError as exc:
        raise ScenarioParseError(f"{where}: {exc}") from None
    if n is not None and len(out) != n:
        raise ScenarioParseError(f"{where}: expected {n} numbers, got {len(out)}")
    return out


def _polygon(value: str, where: str):
    pts = []
    for chunk in value.split(","):
        xy = _floats(chunk, 2, where)
        pts.append((xy[0], xy[1]))
    if len(pts) < 3:
        raise ScenarioParseError(f"{where}: polygon needs at least 3 vertices")
    return tuple(pts)


def _bool(value: str, where: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise ScenarioParseError(f"{where}: not a boolean: {value!r}")


def parse_scenario(text: str, base_dir: str | os.PathLike | None = None) -> Scenario:
    """Parse scenario text without validating invariants."""
    sections = _parse_sections(text)
    by_kind: dict[str, list[_Section]] = {}
    for sec in sections:
        by_kind.setdefault(sec.kind, []).append(sec)
    unknown = set(by_kind) - {"map", "aoi", "koz", "eoi", "entity", "occupancy", "sensor"}
    if unknown:
        raise ScenarioParseError(f"unknown section kind(s): {sorted(unknown)}")
    if len(by_kind.get("map", [])) != 1:
        raise ScenarioParseError("exactly one [map] section is required")
    if len(by_kind.get("occupancy", [])) > 1:
        raise ScenarioParseError("at most one [occupancy] section is allowed")

    m = by_kind["map"][0]
    version = int(m.get("version", str(FORMAT_VERSION)))
    if version != FORMAT_VERSION:
        raise ScenarioParseError(f"unsupported scenario format version {version}")
    ext = MapExtent(*_floats(m.require("extent"), 4, "[map] extent"))
    budget = float(m.get("time_budget", str(DEFAULT_TIME_BUDGET)))
    start = _floats(m.get("uav_start", f"{ext.xmin} {ext.ymin} 40 0"), 4, "[map] uav_start")
    seed = int(m.get("seed", "0"))

    aois = []
    for sec in by_kind.get("aoi", []):
        if sec.name is None:
            raise ScenarioParseError(f"line {sec.line}: [aoi] needs an id")
        priors = {}
        for k, v, ln in sec.items:
            if k.startswith("prior."):
                priors[k[len("prior."):]] = _floats(v, 1, f"line {ln}")[0]
        aois.append(Aoi(sec.name, _polygon(sec.require("boundary"), f"[aoi {sec.name}]"), priors))

    kozs = []
    for sec in by_kind.get("koz", []):
        if sec.name is None:
            raise ScenarioParseError(f"line {sec.line}: [koz] needs an id")
        kozs.append(Koz(sec.name, _polygon(sec.require("boundary"), f"[koz {sec.name}]")))

    eois = []
    for sec in by_kind.get("eoi", []):
        if sec.name is None:
            raise ScenarioParseError(f"line {sec.line}: [eoi] needs an id")
        eois.append(EoiDescriptor(sec.name, sec.require("type"), sec.require("color")))

    entities = []
    for sec in by_kind.get("entity", []):
        if sec.name is None:
            raise ScenarioParseError(f"line {sec.line}: [entity] needs an id")
        pos = _floats(sec.require("position"), 3, f"[entity {sec.name}] position")
        entities.append(GroundTruthEntity(
            sec.name, pos, sec.require("type"), sec.require("color"),
            _bool(sec.get("eoi", "false"), f"[entity {sec.name}] eoi"),
        ))

    occ_file = None
    if "occupancy" in by_kind:
        o = by_kind["occupancy"][0]
        occ_file = o.get("file")
        if occ_file is not None:
            path = Path(base_dir or ".") / occ_file
            try:
                grid = read_nsog(path)
            except OSError as exc:
                raise ScenarioParseError(f"cannot read occupancy file {path}: {exc}") from None
        else:
            origin = _floats(o.get("origin", f"{ext.xmin} {ext.ymin}"), 2, "[occupancy] origin")
            cell = float(o.require("cell_size"))
            dims = tuple(int(v) for v in _floats(o.require("dims"), 3, "[occupancy] dims"))
            boxes = [_floats(v, 6, "[occupancy] box") for v in o.getall("box")]
            if cell <= 0:
                raise ScenarioParseError("[occupancy] cell_size must be positive")
            grid = OccupancyGrid.from_boxes(origin, cell, dims, boxes)
    else:
        cell = 2.0
        dims = (max(1, int(ext.width // cell)), max(1, int(ext.height // cell)), 30)
        grid = OccupancyGrid.empty((ext.xmin, ext.ymin), cell, dims)

    sensor = {}
    if "sensor" in by_kind:
        sensor = {k: v for k, v, _ in by_kind["sensor"][0].items}

    return Scenario(
        map_extent=ext, aois=tuple(aois), kozs=tuple(kozs), eois=tuple(eois),
        entities=tuple(entities), occupancy=grid, time_budget=budget,
        uav_start=Pose((start[0], start[1], start[2]), start[3], 0.0), seed=seed,
        sensor=sensor, occupancy_file=occ_file,
    )


def load_scenario(path: str | os.PathLike) -> Scenario:
    """Read, parse and validate a scenario file.

    Raises ScenarioParseError for malformed files and ScenarioValidationError
    (carrying the violation list) when an invariant does not hold.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc}") from None
    scenario = parse_scenario(text, base_dir=path.parent)
    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioValidationError(violations)
    return scenario


def _num(v: float) -> str:
    return repr(float(v)) if float(v) != int(v) else str(int(v))


def _pts(vertices) -> str:
    return ", ".join(f"{_num(x)} {_num(y)}" for x, y in vertices)


def format_scenario(s: Scenario) -> str:
    """Serialise a scenario deterministically (stable ordering and number format)."""
    ext = s.map_extent
    p = s.uav_start
    lines = [
        "[map]",
        f"version = {FORMAT_VERSION}",
        f"extent = {_num(ext.xmin)} {_num(ext.ymin)} {_num(ext.xmax)} {_num(ext.ymax)}",
        f"time_budget = {_num(s.time_budget)}",
        "uav_start = " + " ".join(_num(v) for v in (*p.position, p.yaw)),
        f"seed = {s.seed}",
    ]
    if s.sensor:
        lines += ["", "[sensor]"] + [f"{k} = {v}" for k, v in s.sensor.items()]
    for a in s.aois:
        lines += ["", f"[aoi {a.id}]", f"boundary = {_pts(a.boundary)}"]
        lines += [f"prior.{e} = {_num(v)}" for e, v in a.priors.items()]
    for k in s.kozs:
        lines += ["", f"[koz {k.id}]", f"boundary = {_pts(k.boundary)}"]
    for e in s.eois:
        lines += ["", f"[eoi {e.id}]", f"type = {e.vehicle_type}", f"color = {e.color}"]
    for ent in s.entities:
        lines += ["", f"[entity {ent.id}]",
                  "position = " + " ".join(_num(v) for v in ent.position),
                  f"type = {ent.vehicle_type}", f"color = {ent.color}",
                  f"eoi = {'true' if ent.is_eoi else 'false'}"]
    g = s.occupancy
    lines += ["", "[occupancy]"]
    if s.occupancy_file is not None:
        lines.append(f"file = {s.occupancy_file}")
    else:
        lines += [f"origin = {_num(g.origin[0])} {_num(g.origin[1])}",
                  f"cell_size = {_num(g.cell_size)}",
                  "dims = " + " ".join(str(d) for d in g.dims)]
        lines += ["box = " + " ".join(_num(v) for v in b) for b in g.boxes]
    return "\n".join(lines) + "\n"


def save_scenario(s: Scenario, path: str | os.PathLike) -> None:
    """Write the scenario text (and its NSOG grid when it references one)."""
    path = Path(path)
    if s.occupancy_file is not None:
        write_nsog(path.parent / s.occupancy_file, s.occupancy)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(format_scenario(s), encoding="utf-8")
    os.replace(tmp, path)


def bundled_scenario_path(name: str = "tutorial") -> Path:
    return Path(__file__).parent / "data" / f"{name}.scenario"
