"""High-level planner: which AOIs to visit, in what order, for how long.

The objective for a visit sequence is the expected number of EOI detections
minus ``lambda`` times the travel time. Expected detections in one AOI grow
linearly with the dwell time until a full sweep is done, so for a fixed
sequence the best dwell times come from water-filling quanta by marginal gain.
The search over sequences is exact: depth-first enumeration with a fractional
upper bound and dominance pruning on (visited set, last AOI).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

DEFAULT_QUANTUM = 10.0
DEFAULT_P_DETECT = 0.9
EXACT_LIMIT = 8
TIE_EPS = 1e-9


def full_coverage_time(area: float, speed: float, sweep_width: float) -> float:
    """Lawnmower lower bound: area swept at ``speed`` with a ``sweep_width`` swath."""
    if not (speed > 0 and sweep_width > 0):
        raise ValueError("speed and sweep_width must be positive")
    return area / (speed * sweep_width)


def coverage_fraction_for(t_alloc: float, full_time: float) -> float:
    if t_alloc <= 0:
        return 0.0
    if full_time <= 0:
        return 1.0
    return min(1.0, t_alloc / full_time)


def expected_gain(beliefs: Mapping[str, float] | Sequence[float], t_alloc: float, full_time: float,
                  p_detect: float = DEFAULT_P_DETECT) -> float:
    """Expected EOIs detected in one AOI after dwelling ``t_alloc`` seconds."""
    if t_alloc < 0:
        raise ValueError("t_alloc must be non-negative")
    values = beliefs.values() if isinstance(beliefs, Mapping) else beliefs
    return math.fsum(values) * coverage_fraction_for(t_alloc, full_time) * p_detect


@dataclass
class SelectionInstance:
    aoi_ids: list[str]
    # Per AOI: belief of each still-unfound EOI being there.
    beliefs: list[dict[str, float]]
    full_coverage_time: list[float]
    # (n+1) x (n+1) seconds; index 0 is the UAV's current position.
    travel: np.ndarray
    budget: float
    time_quantum: float = DEFAULT_QUANTUM
    p_detect: float = DEFAULT_P_DETECT
    lam: float | None = None
    areas: list[float] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.aoi_ids)
        self.travel = np.asarray(self.travel, dtype=float)
        if self.travel.shape != (n + 1, n + 1):
            raise ValueError("travel must be (n+1) x (n+1)")
        if not self.time_quantum > 0:
            raise ValueError("time_quantum must be positive")

    @property
    def n(self) -> int:
        return len(self.aoi_ids)

    @property
    def weight(self) -> list[float]:
        return [math.fsum(b.values()) * self.p_detect for b in self.beliefs]

    @property
    def travel_cost(self) -> float:
        if self.lam is not None:
            return self.lam
        return 1.0 / self.budget if self.budget > 0 else 0.0


@dataclass
class ItineraryPlan:
    legs: list[tuple[str, float]]
    expected_gain: float
    total_time: float
    travel_time: float = 0.0
    objective: float = 0.0
    infeasible: bool = False

    @property
    def aoi_sequence(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.legs)

    def to_dict(self) -> dict:
        return {"legs": [[a, t] for a, t in self.legs], "expected_gain": self.expected_gain,
                "total_time": self.total_time, "travel_time": self.travel_time,
                "objective": self.objective, "infeasible": self.infeasible}


def _units(seconds: float, quantum: float) -> int:
    return max(0, math.floor(seconds / quantum + 1e-9))


def _gain_units(w: float, full: float, units: int, quantum: float) -> float:
    return w * coverage_fraction_for(units * quantum, full)


def allocate(inst: SelectionInstance, seq: Sequence[int], travel: float) -> tuple[list[int], float] | None:
    """Optimal quanta per leg (each at least one) for a fixed sequence.

    Returns ``(units_per_leg, gain)`` or None when the sequence does not fit.
    """
    q = inst.time_quantum
    avail = _units(inst.budget - travel, q)
    k = len(seq)
    if avail < k:
        return None
    w = inst.weight
    full = inst.full_coverage_time
    units = [1] * k
    gains = [_gain_units(w[i], full[i], 1, q) for i in seq]
    spare = avail - k
    heap = []
    for pos, i in enumerate(seq):
        nxt = _gain_units(w[i], full[i], 2, q) - gains[pos]
        if nxt > 0:
            heap.append((-nxt, pos))
    heapq.heapify(heap)
    while spare > 0 and heap:
        neg, pos = heapq.heappop(heap)
        i = seq[pos]
        units[pos] += 1
        gains[pos] -= neg
        spare -= 1
        nxt = _gain_units(w[i], full[i], units[pos] + 1, q) - _gain_units(w[i], full[i], units[pos], q)
        if nxt > 1e-15:
            heapq.heappush(heap, (-nxt, pos))
    # Recompute gains from the final allocation so the value is path-independent.
    total = math.fsum(_gain_units(w[i], full[i], u, q) for i, u in zip(seq, units))
    return units, total


def _sequence_travel(inst: SelectionInstance, seq: Sequence[int]) -> float:
    total = 0.0
    prev = 0
    for i in seq:
        total += inst.travel[prev, i + 1]
        prev = i + 1
    return total


def evaluate_sequence(inst: SelectionInstance, seq: Sequence[int], units: Sequence[int]) -> tuple[float, float, float]:
    """(gain, travel, objective) of an explicit sequence and allocation."""
    travel = _sequence_travel(inst, seq)
    q = inst.time_quantum
    w, full = inst.weight, inst.full_coverage_time
    gain = math.fsum(_gain_units(w[i], full[i], u, q) for i, u in zip(seq, units))
    return gain, travel, gain - inst.travel_cost * travel


def _make_plan(inst: SelectionInstance, seq: Sequence[int], units: Sequence[int]) -> ItineraryPlan:
    gain, travel, obj = evaluate_sequence(inst, seq, units)
    q = inst.time_quantum
    legs = [(inst.aoi_ids[i], u * q) for i, u in zip(seq, units)]
    return ItineraryPlan(legs, gain, travel + sum(t for _, t in legs), travel, obj)


def _empty_plan(infeasible: bool = False) -> ItineraryPlan:
    return ItineraryPlan([], 0.0, 0.0, 0.0, 0.0, infeasible)


def _is_infeasible(inst: SelectionInstance) -> bool:
    if inst.n == 0:
        return False
    cheapest = min(inst.travel[0, 1:])
    return bool(inst.budget < cheapest + inst.time_quantum - 1e-9)


def _fractional_bound(inst: SelectionInstance, candidates: Sequence[int], seconds: float) -> float:
    """Gain bound: continuous knapsack over ``candidates`` with ``seconds`` of dwell."""
    w, full = inst.weight, inst.full_coverage_time
    items = []
    bound = 0.0
    for i in candidates:
        if w[i] <= 0:
            continue
        if full[i] <= 0:
            bound += w[i]
        else:
            items.append((w[i] / full[i], full[i], w[i]))
    items.sort(reverse=True)
    left = max(0.0, seconds)
    for density, f, wi in items:
        if left <= 0:
            break
        take = min(f, left)
        bound += density * take
        left -= take
    return bound


def _better(obj: float, seq: tuple[str, ...], best_obj: float, best_seq: tuple[str, ...]) -> bool:
    if obj > best_obj + TIE_EPS:
        return True
    if obj < best_obj - TIE_EPS:
        return False
    return (len(seq), seq) < (len(best_seq), best_seq)


def select_plan(inst: SelectionInstance) -> ItineraryPlan:
    """Exact maximiser of expected gain minus ``lambda`` x travel.

    Ties within 1e-9 go to fewer legs, then the lexicographically smaller AOI
    id sequence.
    """
    if inst.n > EXACT_LIMIT:
        raise ValueError(f"exact selection supports at most {EXACT_LIMIT} AOIs, got {inst.n}")
    if _is_infeasible(inst):
        return _empty_plan(infeasible=True)
    lam = inst.travel_cost
    q = inst.time_quantum
    order = sorted(range(inst.n), key=lambda i: inst.aoi_ids[i])
    best = {"obj": 0.0, "seq": (), "plan": _empty_plan()}
    # Lowest travel seen for each (visited set, last AOI) prefix.
    dominance: dict[tuple[int, int], float] = {}

    def dfs(seq: list[int], mask: int, travel: float) -> None:
        if seq:
            key = (mask, seq[-1])
            seen = dominance.get(key)
            if seen is not None and travel >= seen - TIE_EPS:
                return
            dominance[key] = travel
            alloc = allocate(inst, seq, travel)
            if alloc is None:
                return
            units, gain = alloc
            obj = gain - lam * travel
            ids = tuple(inst.aoi_ids[i] for i in seq)
            if _better(obj, ids, best["obj"], best["seq"]):
                best.update(obj=obj, seq=ids, plan=_make_plan(inst, seq, units))
        remaining = [i for i in order if not mask & (1 << i)]
        if not remaining:
            return
        bound = _fractional_bound(inst, [*seq, *remaining], inst.budget - travel) - lam * travel
        if bound < best["obj"] - TIE_EPS:
            return
        last = seq[-1] + 1 if seq else 0
        for i in remaining:
            t = travel + inst.travel[last, i + 1]
            if _units(inst.budget - t, q) < len(seq) + 1:
                continue
            seq.append(i)
            dfs(seq, mask | (1 << i), t)
            seq.pop()

    dfs([], 0, 0.0)
    return best["plan"]


def _fill_in_order(inst: SelectionInstance, seq: Sequence[int]) -> ItineraryPlan:
    """Visit ``seq`` in order, each for a full sweep, while the budget lasts."""
    q = inst.time_quantum
    left = inst.budget
    prev = 0
    chosen, units = [], []
    for i in seq:
        t = inst.travel[prev, i + 1]
        avail = _units(left - t, q)
        if avail < 1:
            continue
        want = max(1, math.ceil(inst.full_coverage_time[i] / q - 1e-9))
        u = min(want, avail)
        chosen.append(i)
        units.append(u)
        left -= t + u * q
        prev = i + 1
    if not chosen:
        return _empty_plan(infeasible=_is_infeasible(inst))
    return _make_plan(inst, chosen, units)


def greedy_plan(inst: SelectionInstance) -> ItineraryPlan:
    """Belief-density ordering with full sweeps, no joint time optimisation."""
    w, full = inst.weight, inst.full_coverage_time

    def density(i: int) -> float:
        return w[i] / full[i] if full[i] > 0 else math.inf

    seq = sorted((i for i in range(inst.n) if w[i] > 0), key=lambda i: (-density(i), inst.aoi_ids[i]))
    return _fill_in_order(inst, seq)


def route_plan(inst: SelectionInstance, route: Sequence[str]) -> ItineraryPlan:
    """Follow a fixed AOI route (e.g. a random permutation) with full sweeps."""
    index = {a: i for i, a in enumerate(inst.aoi_ids)}
    return _fill_in_order(inst, [index[a] for a in route if a in index])


def replan(inst: SelectionInstance) -> ItineraryPlan:
    """Same contract as select_plan; the instance already carries the new origin and beliefs."""
    return select_plan(inst)
