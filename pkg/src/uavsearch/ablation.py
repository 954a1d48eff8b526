"""Ablation grids: which configurations make up each comparison table."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .evaluation import MetricsSummary, TraceData, evaluate, load_traces, to_csv, to_markdown
from .runner import BatchItem, MissionConfig, run_batch, sweep_configs

# Heterogeneous per-frame noise: mostly sharp fixes with occasional poor ones.
NOISY_SIGMA_MIX = (0.5, 0.5, 4.0)


@dataclass(frozen=True)
class Cell:
    label: str
    overrides: dict


@dataclass(frozen=True)
class Table:
    name: str
    title: str
    radius: float
    n_seeds: int
    cells: tuple[Cell, ...]
    # Shared by every cell before cell overrides apply.
    base: dict


TABLES: dict[str, Table] = {
    "planner": Table(
        "planner", "Planner ablation (ground-truth perception, 25 m match)", 25.0, 12,
        (
            Cell("baseline (random + back-and-forth)", dict(selection="random", coverage="boustrophedon")),
            Cell("+ AOI selection (greedy)", dict(selection="greedy", coverage="boustrophedon")),
            Cell("+ optimization", dict(selection="optimal", coverage="boustrophedon")),
            Cell("+ coverage (optimal + snac)", dict(selection="optimal", coverage="snac")),
        ),
        dict(sensor_preset="perfect", accumulation="bayes"),
    ),
    "worldmodel": Table(
        "worldmodel", "World-model ablation (noisy perception, 5 m match)", 5.0, 8,
        (
            Cell("world reasoning only", dict(accumulation="off")),
            Cell("+ naive averaging", dict(accumulation="naive")),
            Cell("+ Bayesian filtering", dict(accumulation="bayes")),
        ),
        dict(sensor_preset="clear", sensor_overrides={"sigma_choices": NOISY_SIGMA_MIX},
             selection="optimal", coverage="snac"),
    ),
    "system": Table(
        "system", "System comparison (5 m match)", 5.0, 6,
        (
            Cell("baseline planner / weak perception / no world model",
                 dict(selection="random", coverage="boustrophedon", sensor_preset="night", accumulation="off")),
            Cell("baseline planner / strong perception / no world model",
                 dict(selection="random", coverage="boustrophedon", sensor_preset="clear", accumulation="off")),
            Cell("baseline planner / strong perception / world model",
                 dict(selection="random", coverage="boustrophedon", sensor_preset="clear", accumulation="bayes")),
            Cell("full planner / weak perception / no world model",
                 dict(selection="optimal", coverage="snac", sensor_preset="night", accumulation="off")),
            Cell("full planner / weak perception / world model",
                 dict(selection="optimal", coverage="snac", sensor_preset="night", accumulation="bayes")),
            Cell("full planner / strong perception / world model",
                 dict(selection="optimal", coverage="snac", sensor_preset="clear", accumulation="bayes")),
        ),
        dict(),
    ),
}

ALIASES = {"4": "planner", "3": "worldmodel", "1": "system"}


def get_table(name: str) -> Table:
    key = ALIASES.get(str(name), str(name))
    if key not in TABLES:
        raise ValueError(f"unknown table {name!r}; choose from {sorted(TABLES)} or {sorted(ALIASES)}")
    return TABLES[key]


def table_configs(table: Table, n_seeds: int | None = None, first_seed: int = 0,
                  out_dir: str | None = None, **extra) -> list[MissionConfig]:
    """Every (cell, scenario seed) mission for a table; cells share scenarios and mission seeds."""
    n = table.n_seeds if n_seeds is None else n_seeds
    gen_seeds = list(range(first_seed, first_seed + n))
    cfgs = []
    for cell in table.cells:
        base = MissionConfig(gen_seed=0, label=cell.label, **{**table.base, **cell.overrides, **extra})
        cfgs.extend(sweep_configs(base, gen_seeds, seed_base=first_seed, out_dir=out_dir))
    return cfgs


def run_table(table: Table, n_seeds: int | None = None, first_seed: int = 0, out_dir: str | None = None,
              workers: int | None = None, radius: float | None = None,
              **extra) -> tuple[list[MetricsSummary], list[BatchItem]]:
    cfgs = table_configs(table, n_seeds, first_seed, out_dir, **extra)
    items = run_batch(cfgs, workers)
    traces = [TraceData.from_lines(i.result.lines) for i in items if i.ok]
    return summarize_table(table, traces, radius), items


def summarize_table(table: Table, traces: Sequence[TraceData], radius: float | None = None) -> list[MetricsSummary]:
    r = table.radius if radius is None else radius
    return evaluate(traces, r, order=[c.label for c in table.cells])


def table_from_traces(table: Table, directory, radius: float | None = None) -> list[MetricsSummary]:
    return summarize_table(table, load_traces(directory), radius)


def write_outputs(table: Table, summaries: Sequence[MetricsSummary], out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{table.name}.csv", "md": out / f"{table.name}.md"}
    paths["csv"].write_text(to_csv(summaries))
    paths["md"].write_text(to_markdown(summaries, table.title))
    return paths
