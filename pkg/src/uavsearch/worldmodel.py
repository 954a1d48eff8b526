"""Persistent probabilistic world model.

Filters physically impossible detections, associates detections with tracks,
accumulates position and attribute evidence per track, and turns tracks into
online (thresholded, per frame) and offline (end of mission) EOI reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .occupancy import OccupancyGrid
from .scenario import Aoi, BeliefMap, EoiDescriptor, MapExtent
from .sensor import Detection

ACCUMULATION_MODES = ("off", "naive", "bayes")

DEFAULT_H_MAX = 2.5
DEFAULT_GATE = 4.0
DEFAULT_THRESHOLD = 0.85
# Prior odds that a matching non-EOI vehicle sits inside a candidate AOI.
DEFAULT_IN_AOI_FALSE_MATCH = 1e-3
REREPORT_DISTANCE = 1.0
PRUNE_AFTER = 30.0
PRUNE_CONFIDENCE = 0.1


@dataclass(frozen=True)
class Track:
    track_id: int
    position_mean: tuple[float, float, float]
    position_variance: float
    color_posterior: tuple[float, ...]
    type_posterior: tuple[float, ...]
    n_observations: int = 1
    last_seen: float = 0.0
    best_single_confidence: float = 0.0
    # Running sums for the naive mode's sample variance.
    sum_sq: float = 0.0

    @classmethod
    def from_detection(cls, track_id: int, det: Detection, t: float) -> "Track":
        p = tuple(float(v) for v in det.measured_position)
        return cls(track_id, p, det.position_sigma ** 2, tuple(det.color_likelihood),
                   tuple(det.type_likelihood), 1, t, det.confidence,
                   sum(v * v for v in p))


@dataclass(frozen=True)
class EoiReport:
    eoi_id: str
    reported_position: tuple[float, float, float]
    confidence: float
    timestamp: float
    mode: str
    track_id: int | None = None

    def to_dict(self) -> dict:
        return {"eoi": self.eoi_id, "position": list(self.reported_position),
                "confidence": self.confidence, "timestamp": self.timestamp,
                "mode": self.mode, "track": self.track_id}


def filter_physical(dets: Sequence[Detection], occ: OccupancyGrid,
                    extent: MapExtent | None = None, h_max: float = DEFAULT_H_MAX) -> list[Detection]:
    """Drop detections inside occupied voxels, too high above ground, or off the map."""
    if extent is None:
        x0, y0, x1, y1 = occ.extent
        extent = MapExtent(x0, y0, x1, y1)
    out = []
    for d in dets:
        x, y, z = d.measured_position
        if not extent.contains(x, y):
            continue
        if occ.is_occupied((x, y, z)):
            continue
        if z - occ.ground_height(x, y) > h_max:
            continue
        out.append(d)
    return out


def associate(dets: Sequence[Detection], tracks: Sequence[Track], gate: float = DEFAULT_GATE) -> list[int | None]:
    """Greedy global nearest-neighbour assignment.

    Returns, for each detection, the id of the track it updates or ``None``
    when it should seed a new track. Pairs are taken in order of increasing
    3-D distance (ties: lower track id, then lower detection index); each
    track and each detection is used at most once, and only pairs within the
    gate qualify.
    """
    pairs = []
    for j, d in enumerate(dets):
        for t in tracks:
            dist = math.dist(d.measured_position, t.position_mean)
            if dist <= gate:
                pairs.append((dist, t.track_id, j))
    pairs.sort()
    out: list[int | None] = [None] * len(dets)
    used: set[int] = set()
    for _, tid, j in pairs:
        if out[j] is None and tid not in used:
            out[j] = tid
            used.add(tid)
    return out


def update_position_bayes(t: Track, z: Sequence[float], sigma_z: float) -> Track:
    """Static-target Gaussian update, isotropic and independent per axis."""
    if not sigma_z > 0:
        raise ValueError("sigma_z must be positive")
    vz = sigma_z * sigma_z
    vt = t.position_variance
    denom = vt + vz
    mean = tuple((vz * m + vt * zi) / denom for m, zi in zip(t.position_mean, z))
    return replace(t, position_mean=mean, position_variance=vt * vz / denom,
                   n_observations=t.n_observations + 1)


def update_position_naive(t: Track, z: Sequence[float]) -> Track:
    """Running arithmetic mean; the variance field holds the per-axis sample variance."""
    n = t.n_observations + 1
    mean = tuple(m + (zi - m) / n for m, zi in zip(t.position_mean, z))
    sum_sq = t.sum_sq + sum(v * v for v in z)
    var = max(0.0, (sum_sq - n * sum(m * m for m in mean)) / (3 * (n - 1)))
    return replace(t, position_mean=mean, position_variance=var, n_observations=n, sum_sq=sum_sq)


def _bayes_categorical(prior: Sequence[float], lik: Sequence[float]) -> tuple[float, ...]:
    prod = [p * l for p, l in zip(prior, lik)]
    total = math.fsum(prod)
    if total <= 0.0:
        # Prior contradicted outright: restart from the new evidence.
        total = math.fsum(lik)
        return tuple(l / total for l in lik)
    return tuple(v / total for v in prod)


def update_attributes(t: Track, color_lik: Sequence[float], type_lik: Sequence[float]) -> Track:
    return replace(t, color_posterior=_bayes_categorical(t.color_posterior, color_lik),
                   type_posterior=_bayes_categorical(t.type_posterior, type_lik))


def average_attributes(t: Track, color_lik: Sequence[float], type_lik: Sequence[float]) -> Track:
    """Running mean of the likelihood vectors (no evidence multiplication).

    Call before the position update so ``n_observations`` still counts the
    measurements already folded in.
    """
    n = t.n_observations

    def mix(old, new):
        return tuple((o * n + v) / (n + 1) for o, v in zip(old, new))

    return replace(t, color_posterior=mix(t.color_posterior, color_lik),
                   type_posterior=mix(t.type_posterior, type_lik))


def location_factor(p: float, false_match_odds: float) -> float:
    """Probability that a matching vehicle at a place of belief ``p`` is the EOI.

    ``false_match_odds`` is the chance of a look-alike there relative to the
    EOI. With odds 1 this reduces to ``p`` itself.
    """
    denom = p + (1.0 - p) * false_match_odds
    return p / denom if denom > 0 else 0.0


def match_confidence(t: Track, e: EoiDescriptor, belief: BeliefMap, aois: Sequence[Aoi],
                     in_aoi_false_match: float = DEFAULT_IN_AOI_FALSE_MATCH) -> float:
    """Attribute match times location plausibility.

    Inside an AOI the location term is the belief for that AOI, discounted by
    how likely a look-alike is there (``in_aoi_false_match``; 1.0 gives the
    plain belief). Outside every AOI it is the residual belief.
    """
    x, y, _ = t.position_mean
    attr = t.color_posterior[e.color_index] * t.type_posterior[e.type_index]
    if attr == 0.0:
        return 0.0
    for a in aois:
        if a.contains(x, y):
            return attr * location_factor(belief.prob(e.id, a.id), in_aoi_false_match)
    return attr * belief.residual[e.id]


@dataclass
class ReportLedger:
    """Positions at which each (EOI, track) pair was last reported online."""

    last: dict[tuple[str, int], tuple[float, float, float]] = field(default_factory=dict)


def online_report(tracks: Sequence[Track], eois: Sequence[EoiDescriptor], belief: BeliefMap,
                  aois: Sequence[Aoi], threshold: float = DEFAULT_THRESHOLD, timestamp: float = 0.0,
                  ledger: ReportLedger | None = None,
                  in_aoi_false_match: float = DEFAULT_IN_AOI_FALSE_MATCH) -> list[EoiReport]:
    """At most one report per EOI: its best track, if above threshold and not already reported there."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    ledger = ledger if ledger is not None else ReportLedger()
    out = []
    for e in eois:
        best, best_conf = None, -1.0
        for t in tracks:
            c = match_confidence(t, e, belief, aois, in_aoi_false_match)
            if c > best_conf or (c == best_conf and best is not None and t.track_id < best.track_id):
                best, best_conf = t, c
        if best is None or best_conf < threshold:
            continue
        prev = ledger.last.get((e.id, best.track_id))
        if prev is not None and math.dist(prev, best.position_mean) <= REREPORT_DISTANCE:
            continue
        ledger.last[(e.id, best.track_id)] = best.position_mean
        out.append(EoiReport(e.id, best.position_mean, best_conf, timestamp, "online", best.track_id))
    return out


def offline_report(tracks: Sequence[Track], eois: Sequence[EoiDescriptor], belief: BeliefMap,
                   aois: Sequence[Aoi], timestamp: float = 0.0,
                   in_aoi_false_match: float = DEFAULT_IN_AOI_FALSE_MATCH) -> list[EoiReport]:
    """Best track per EOI with no threshold. Tracks with zero match probability never qualify."""
    out = []
    for e in eois:
        best, best_conf = None, 0.0
        for t in tracks:
            c = match_confidence(t, e, belief, aois, in_aoi_false_match)
            if c > best_conf:
                best, best_conf = t, c
        if best is not None:
            out.append(EoiReport(e.id, best.position_mean, best_conf, timestamp, "offline", best.track_id))
    return out


@dataclass
class WorldModelConfig:
    accumulation: str = "bayes"
    threshold: float = DEFAULT_THRESHOLD
    gate_radius: float = DEFAULT_GATE
    h_max: float = DEFAULT_H_MAX
    in_aoi_false_match: float = DEFAULT_IN_AOI_FALSE_MATCH

    def __post_init__(self):
        if self.accumulation not in ACCUMULATION_MODES:
            raise ValueError(f"accumulation must be one of {ACCUMULATION_MODES}")


@dataclass
class FrameSummary:
    raw: int
    kept: int
    tracks: int
    reports: list[EoiReport]


class WorldModel:
    """Mutable store owned by the mission loop: tracks, belief map and found EOIs."""

    def __init__(self, occupancy: OccupancyGrid, extent: MapExtent, aois: Sequence[Aoi],
                 eois: Sequence[EoiDescriptor], belief: BeliefMap,
                 config: WorldModelConfig | None = None):
        self.occupancy = occupancy
        self.extent = extent
        self.aois = tuple(aois)
        self.eois = tuple(eois)
        self.belief = belief
        self.config = config or WorldModelConfig()
        self.tracks: list[Track] = []
        self.found: dict[str, EoiReport] = {}
        self.reports: list[EoiReport] = []
        self._ledger = ReportLedger()
        self._next_id = 1

    def _containing_aoi(self, x: float, y: float) -> str | None:
        for a in self.aois:
            if a.contains(x, y):
                return a.id
        return None

    def _absorb(self, t: Track, d: Detection, now: float) -> Track:
        mode = self.config.accumulation
        if mode == "bayes":
            t = update_position_bayes(t, d.measured_position, d.position_sigma)
            t = update_attributes(t, d.color_likelihood, d.type_likelihood)
        elif mode == "naive":
            t = average_attributes(t, d.color_likelihood, d.type_likelihood)
            t = update_position_naive(t, d.measured_position)
        else:
            # World reasoning only: keep the latest measurement as-is.
            t = replace(t, position_mean=tuple(d.measured_position),
                        position_variance=d.position_sigma ** 2,
                        color_posterior=tuple(d.color_likelihood),
                        type_posterior=tuple(d.type_likelihood),
                        n_observations=t.n_observations + 1)
        return replace(t, last_seen=now, best_single_confidence=max(t.best_single_confidence, d.confidence))

    def confidence(self, t: Track) -> float:
        return max((match_confidence(t, e, self.belief, self.aois, self.config.in_aoi_false_match)
                    for e in self.eois), default=0.0)

    def _prune(self, now: float) -> None:
        self.tracks = [t for t in self.tracks
                       if not (t.n_observations == 1 and now - t.last_seen > PRUNE_AFTER
                               and self.confidence(t) < PRUNE_CONFIDENCE)]

    def step(self, dets: Iterable[Detection], now: float) -> FrameSummary:
        """Ingest one frame of detections and emit any online reports."""
        dets = list(dets)
        kept = filter_physical(dets, self.occupancy, self.extent, self.config.h_max)
        assignment = associate(kept, self.tracks, self.config.gate_radius)
        index = {t.track_id: i for i, t in enumerate(self.tracks)}
        for d, tid in zip(kept, assignment):
            if tid is None:
                self.tracks.append(Track.from_detection(self._next_id, d, now))
                self._next_id += 1
            else:
                i = index[tid]
                self.tracks[i] = self._absorb(self.tracks[i], d, now)
        self._prune(now)
        reports = online_report(self.tracks, self.eois, self.belief, self.aois,
                                self.config.threshold, now, self._ledger,
                                self.config.in_aoi_false_match)
        for r in reports:
            self.reports.append(r)
            if r.eoi_id not in self.found:
                self.found[r.eoi_id] = r
            self.belief.collapse(r.eoi_id, self._containing_aoi(*r.reported_position[:2]))
        return FrameSummary(len(dets), len(kept), len(self.tracks), reports)

    def unfound(self) -> list[str]:
        return [e.id for e in self.eois if e.id not in self.found]

    def all_found(self) -> bool:
        return len(self.found) == len(self.eois)

    def finalize(self, now: float) -> list[EoiReport]:
        return offline_report(self.tracks, self.eois, self.belief, self.aois, now,
                              self.config.in_aoi_false_match)
