"""Figures for mission traces and ablation tables (written to files, never shown)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Polygon as MplPolygon  # noqa: E402

from .evaluation import MetricsSummary  # noqa: E402


def _poly(ax, pts, **kw):
    ax.add_patch(MplPolygon([tuple(p[:2]) for p in pts], closed=True, **kw))


def plot_mission(records: Sequence[Mapping], path) -> Path:
    """Map of one mission: AOIs, KOZs, inflated obstacles, flown poses, truth and reports."""
    header = next(r for r in records if r["type"] == "header")
    outcome = next((r for r in records if r["type"] == "outcome"), None)
    scn = header["scenario"]
    fig, ax = plt.subplots(figsize=(7, 7))
    for o in scn["obstacles"]:
        _poly(ax, o, facecolor="0.85", edgecolor="0.6", lw=0.5)
    for a in scn["aois"]:
        _poly(ax, a["boundary"], facecolor="tab:blue", alpha=0.12, edgecolor="tab:blue")
        xs = [p[0] for p in a["boundary"]]
        ys = [p[1] for p in a["boundary"]]
        ax.text(sum(xs) / len(xs), sum(ys) / len(ys), a["id"], ha="center", va="center", color="tab:blue")
    for k in scn["kozs"]:
        _poly(ax, k["boundary"], facecolor="tab:red", alpha=0.35, edgecolor="tab:red")
    poses = [r["pose"] for r in records if r["type"] == "frame"]
    sx, sy = scn["start"][:2]
    if poses:
        ax.plot([sx] + [p[0] for p in poses], [sy] + [p[1] for p in poses], "-", color="k", lw=0.8)
    ax.plot(sx, sy, "k^", ms=8, label="start")
    for e in scn["eois"]:
        ax.plot(*e["position"][:2], "g*", ms=12)
        ax.annotate(e["id"], e["position"][:2], textcoords="offset points", xytext=(4, 4), color="g")
    if outcome:
        for r in outcome["offline"]:
            ax.plot(*r["position"][:2], "mx", ms=9)
    x0, y0, x1, y1 = scn["extent"]
    ax.set_xlim(x0, x1)
    ax.set_ylim(y0, y1)
    ax.set_aspect("equal")
    title = header["cell"]
    if outcome:
        title += f"  ({outcome['termination']} at {outcome['end_time']:.1f} s)"
    ax.set_title(title, fontsize=9)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_ablation(summaries: Sequence[MetricsSummary], path, title: str = "") -> Path:
    """Grouped bars of success rate and online/offline F1 per configuration."""
    metrics = [("SR", lambda s: s.success_rate), ("online F1", lambda s: s.online.f1),
               ("offline F1", lambda s: s.offline.f1)]
    n = len(summaries)
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * n + 2), 4))
    width = 0.8 / len(metrics)
    for k, (name, fn) in enumerate(metrics):
        xs = [i + (k - (len(metrics) - 1) / 2) * width for i in range(n)]
        ax.bar(xs, [100 * fn(s) for s in summaries], width, label=name)
    ax.set_xticks(range(n))
    ax.set_xticklabels([s.cell for s in summaries], rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("%")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path
