"""Metrics over mission traces: success rate, precision/recall/F1, search times.

Reports are matched to ground truth by 3-D distance. Within one EOI the
closest report under the radius is the match; other reports for the same EOI
under the radius are duplicates (correct but redundant); everything else is a
false positive.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

DEFAULT_RADIUS = 5.0
ABSENT = "–"
N_RANKS = 4


@dataclass
class Matching:
    # eoi id -> index of its matched report
    pairs: dict[str, int]
    duplicates: list[int]
    false_positives: list[int]
    missed: list[str]

    @property
    def n_matched(self) -> int:
        return len(self.pairs)


def _dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def match_reports(reports: Sequence[Mapping], ground_truth: Mapping[str, Sequence[float]],
                  radius: float = DEFAULT_RADIUS) -> Matching:
    """One-to-one EOI/report matching by minimum distance under ``radius``.

    ``reports`` are mappings with ``eoi`` and ``position`` keys.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    pairs: dict[str, int] = {}
    within: dict[str, list[int]] = {}
    fps: list[int] = []
    for i, r in enumerate(reports):
        gt = ground_truth.get(r["eoi"])
        if gt is None or _dist(r["position"], gt) > radius:
            fps.append(i)
            continue
        within.setdefault(r["eoi"], []).append(i)
    dups = []
    for eoi, idx in within.items():
        best = min(idx, key=lambda i: (_dist(reports[i]["position"], ground_truth[eoi]), i))
        pairs[eoi] = best
        dups.extend(i for i in idx if i != best)
    missed = [e for e in ground_truth if e not in pairs]
    return Matching(pairs, sorted(dups), fps, missed)


def f1_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass
class TraceData:
    """What evaluation needs from one mission trace."""

    cell: str
    seed: int
    ground_truth: dict[str, tuple[float, float, float]]
    online: list[dict]
    offline: list[dict]
    scenario_seed: int | None = None

    @classmethod
    def from_records(cls, records: Sequence[Mapping]) -> "TraceData":
        header = next(r for r in records if r["type"] == "header")
        outcome = next((r for r in records if r["type"] == "outcome"), None)
        gt = {e["id"]: tuple(e["position"]) for e in header["scenario"]["eois"]}
        online = [rep for r in records if r["type"] == "frame" for rep in r["reports"]]
        offline = list(outcome["offline"]) if outcome else []
        return cls(header["cell"], header["seed"], gt, online, offline, header["scenario"].get("seed"))

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "TraceData":
        return cls.from_records([json.loads(l) for l in lines if l.strip()])

    @classmethod
    def from_file(cls, path) -> "TraceData":
        with open(path) as fh:
            return cls.from_lines(fh)


def success_rate(traces: Sequence[TraceData], radius: float = DEFAULT_RADIUS) -> tuple[float, float]:
    """(micro, macro) fraction of EOIs matched by any online or offline report."""
    hit = total = 0
    per = []
    for t in traces:
        m = match_reports(t.online + t.offline, t.ground_truth, radius)
        n = len(t.ground_truth)
        hit += m.n_matched
        total += n
        if n:
            per.append(m.n_matched / n)
    micro = hit / total if total else 0.0
    macro = sum(per) / len(per) if per else 0.0
    return micro, macro


@dataclass
class Prf:
    precision: float
    recall: float
    f1: float
    undefined: bool
    matched: int
    duplicates: int
    false_positives: int
    missed: int
    reports: int


def prf(traces: Sequence[TraceData], mode: str = "offline", radius: float = DEFAULT_RADIUS) -> Prf:
    """Micro-averaged precision/recall/F1 over a batch.

    Duplicates count as correct claims in the precision numerator and
    denominator; they never count as false positives.
    """
    if mode not in ("online", "offline"):
        raise ValueError("mode must be online or offline")
    matched = dups = fps = missed = n_reports = n_eois = 0
    for t in traces:
        reps = t.online if mode == "online" else t.offline
        m = match_reports(reps, t.ground_truth, radius)
        matched += m.n_matched
        dups += len(m.duplicates)
        fps += len(m.false_positives)
        missed += len(m.missed)
        n_reports += len(reps)
        n_eois += len(t.ground_truth)
    undefined = n_reports == 0
    precision = 0.0 if undefined else (matched + dups) / n_reports
    recall = matched / n_eois if n_eois else 0.0
    return Prf(precision, recall, f1_score(precision, recall), undefined, matched, dups, fps, missed, n_reports)


def first_correct_times(t: TraceData, radius: float = DEFAULT_RADIUS) -> list[float]:
    """Sorted timestamps of each EOI's first online report under the radius."""
    first: dict[str, float] = {}
    for r in t.online:
        gt = t.ground_truth.get(r["eoi"])
        if gt is not None and _dist(r["position"], gt) <= radius and r["eoi"] not in first:
            first[r["eoi"]] = float(r["t"])
    return sorted(first.values())


def search_times(traces: Sequence[TraceData], radius: float = DEFAULT_RADIUS,
                 ranks: int = N_RANKS) -> list[float | None]:
    """Mean k-th find time over missions that reached rank k; None when none did."""
    sums = [0.0] * ranks
    counts = [0] * ranks
    for t in traces:
        for k, v in enumerate(first_correct_times(t, radius)[:ranks]):
            sums[k] += v
            counts[k] += 1
    return [sums[k] / counts[k] if counts[k] else None for k in range(ranks)]


def localization_error(traces: Sequence[TraceData], radius: float = DEFAULT_RADIUS) -> float | None:
    """Mean 3-D error of matched offline reports."""
    errs = []
    for t in traces:
        m = match_reports(t.offline, t.ground_truth, radius)
        errs.extend(_dist(t.offline[i]["position"], t.ground_truth[e]) for e, i in sorted(m.pairs.items()))
    return sum(errs) / len(errs) if errs else None


@dataclass
class MetricsSummary:
    cell: str
    missions: int
    eois: int
    success_rate: float
    success_rate_macro: float
    online: Prf
    offline: Prf
    search_times: list[float | None] = field(default_factory=list)
    localization_error: float | None = None


def summarize(traces: Sequence[TraceData], radius: float = DEFAULT_RADIUS, cell: str | None = None) -> MetricsSummary:
    micro, macro = success_rate(traces, radius)
    return MetricsSummary(
        cell if cell is not None else (traces[0].cell if traces else ""),
        len(traces), sum(len(t.ground_truth) for t in traces), micro, macro,
        prf(traces, "online", radius), prf(traces, "offline", radius),
        search_times(traces, radius), localization_error(traces, radius))


def group_by_cell(traces: Sequence[TraceData], order: Sequence[str] | None = None) -> list[tuple[str, list[TraceData]]]:
    groups: dict[str, list[TraceData]] = {}
    for t in traces:
        groups.setdefault(t.cell, []).append(t)
    keys = list(order) if order is not None else list(groups)
    keys += [k for k in groups if k not in keys]
    return [(k, groups.get(k, [])) for k in keys]


def evaluate(traces: Sequence[TraceData], radius: float = DEFAULT_RADIUS,
             order: Sequence[str] | None = None) -> list[MetricsSummary]:
    return [summarize(ts, radius, cell) for cell, ts in group_by_cell(traces, order)]


def load_traces(directory) -> list[TraceData]:
    """All ``*.jsonl`` traces under ``directory``, in file-name order."""
    return [TraceData.from_file(p) for p in sorted(Path(directory).glob("*.jsonl"))]


# -- rendering ---------------------------------------------------------------

COLUMNS = ["cell", "missions", "eois", "sr", "sr_macro",
           "online_p", "online_r", "online_f1", "offline_p", "offline_r", "offline_f1",
           "t1", "t2", "t3", "t4", "loc_err_m", "matched", "duplicates", "false_pos", "missed",
           "precision_undefined"]


def _pct(v: float) -> str:
    return f"{100.0 * v:.2f}"


def _opt(v: float | None, nd: int) -> str:
    return ABSENT if v is None else f"{v:.{nd}f}"


def summary_row(s: MetricsSummary) -> list[str]:
    times = list(s.search_times) + [None] * (N_RANKS - len(s.search_times))
    return [s.cell, str(s.missions), str(s.eois), _pct(s.success_rate), _pct(s.success_rate_macro),
            _pct(s.online.precision), _pct(s.online.recall), _pct(s.online.f1),
            _pct(s.offline.precision), _pct(s.offline.recall), _pct(s.offline.f1),
            *(_opt(t, 1) for t in times[:N_RANKS]), _opt(s.localization_error, 3),
            str(s.offline.matched), str(s.online.duplicates), str(s.online.false_positives),
            str(s.offline.missed), "yes" if s.online.undefined else "no"]


def to_csv(summaries: Sequence[MetricsSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for s in summaries:
        w.writerow(summary_row(s))
    return buf.getvalue()


MD_COLUMNS = [("Configuration", 0), ("SR %", 3), ("Online P", 5), ("Online R", 6), ("Online F1", 7),
              ("Offline F1", 10), ("1st (s)", 11), ("2nd (s)", 12), ("3rd (s)", 13), ("4th (s)", 14),
              ("Loc. err (m)", 15)]


def to_markdown(summaries: Sequence[MetricsSummary], title: str | None = None) -> str:
    lines = []
    if title:
        lines += [f"### {title}", ""]
    lines.append("| " + " | ".join(name for name, _ in MD_COLUMNS) + " |")
    lines.append("|" + "|".join("---" for _ in MD_COLUMNS) + "|")
    for s in summaries:
        row = summary_row(s)
        lines.append("| " + " | ".join(row[i] for _, i in MD_COLUMNS) + " |")
    return "\n".join(lines) + "\n"
