"""Command-line interface: gen, run, batch, eval, ablate.

Exit codes: 0 success, 1 configuration error, 2 runtime invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .ablation import get_table, run_table, table_from_traces, write_outputs
from .evaluation import DEFAULT_RADIUS, TraceData, evaluate, load_traces, summarize, to_csv, to_markdown
from .generator import GenerationError, GeneratorConfig, generate_scenario
from .runner import (
    ConfigError,
    MissionConfig,
    MissionInvariantError,
    read_trace,
    run_batch,
    run_mission,
    sweep_configs,
)
from .scenario_io import ScenarioParseError, ScenarioValidationError, bundled_scenario_path, save_scenario
from .sensor import PRESETS

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from exc


def _seed_range(text: str) -> list[int]:
    """'0-11' or '3,5,9' -> list of ints."""
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _mission_args(p: argparse.ArgumentParser, with_scenario: bool = True) -> None:
    if with_scenario:
        src = p.add_mutually_exclusive_group()
        src.add_argument("--scenario", help="scenario file (default: bundled tutorial)")
        src.add_argument("--gen-seed", type=int, help="generate the scenario from this seed instead")
    p.add_argument("--sensor-preset", choices=sorted(PRESETS))
    p.add_argument("--sigma-mix", type=_floats, help="per-frame position sigma choices, e.g. '0.5,4'")
    p.add_argument("--report-threshold", type=float, default=0.85)
    p.add_argument("--gate-radius", type=float, default=4.0)
    p.add_argument("--accumulation", choices=["off", "naive", "bayes"], default="bayes")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="travel-time cost (default 1/budget)")
    p.add_argument("--time-quantum", type=float, default=10.0)
    p.add_argument("--selection", choices=["optimal", "greedy", "random"], default="optimal")
    p.add_argument("--coverage", choices=["snac", "boustrophedon"], default="snac")
    p.add_argument("--altitude", type=float, default=40.0)
    p.add_argument("--speed", type=float, default=10.0)
    p.add_argument("--inflation-margin", type=float, default=3.0)
    p.add_argument("--grid-resolution", type=float, default=20.0)
    p.add_argument("--sweep-width", type=float, default=20.0)
    p.add_argument("--time-budget", type=float, default=None, help="override the scenario's budget (s)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label", default="")


def _config(args, **extra) -> MissionConfig:
    overrides = {}
    if args.sigma_mix:
        overrides["sigma_choices"] = args.sigma_mix
    scenario = getattr(args, "scenario", None)
    gen_seed = getattr(args, "gen_seed", None)
    if scenario is None and gen_seed is None:
        scenario = str(bundled_scenario_path())
    return MissionConfig(
        scenario_path=scenario, gen_seed=gen_seed, sensor_preset=args.sensor_preset,
        sensor_overrides=overrides, accumulation=args.accumulation, threshold=args.report_threshold,
        gate_radius=args.gate_radius, selection=args.selection, coverage=args.coverage, lam=args.lam,
        time_quantum=args.time_quantum, altitude=args.altitude, speed=args.speed,
        margin=args.inflation_margin, grid_resolution=args.grid_resolution, sweep_width=args.sweep_width,
        time_budget=args.time_budget, seed=args.seed, label=args.label, **extra)


def cmd_gen(args) -> int:
    cfg = GeneratorConfig(n_aois=(args.min_aois, args.max_aois), n_eois=args.eois, time_budget=args.time_budget)
    s = generate_scenario(args.seed, cfg)
    save_scenario(s, args.out)
    print(f"scenario,{args.out},aois={len(s.aois)},eois={len(s.eois)},kozs={len(s.kozs)},entities={len(s.entities)}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args, output=args.out)
    result = run_mission(cfg)
    o = result.outcome
    trace = TraceData.from_lines(result.lines)
    print("eoi,found_at_s,offline_x,offline_y,offline_z,offline_confidence")
    offline = {r["eoi"]: r for r in o["offline"]}
    for eoi, t in o["found"].items():
        r = offline.get(eoi)
        pos = ",".join(f"{v:.2f}" for v in r["position"]) if r else ",,"
        conf = f"{r['confidence']:.4f}" if r else ""
        print(f"{eoi},{'' if t is None else f'{t:.1f}'},{pos},{conf}")
    print(f"# termination={o['termination']} end_time={o['end_time']:.1f} frames={o['frames']}")
    print(to_csv([summarize([trace], args.gt_radius)]), end="")
    if args.plot:
        from .plotting import plot_mission
        plot_mission(read_trace(args.out) if args.out else [__import__("json").loads(l) for l in result.lines],
                     args.plot)
    return EXIT_OK


def cmd_batch(args) -> int:
    base = _config(args)
    if args.scenarios:
        cfgs = [MissionConfig(**{**base.__dict__, "scenario_path": p, "gen_seed": None, "seed": args.seed + i,
                                 "output": str(Path(args.out_dir) / f"mission_{i:03d}.jsonl")})
                for i, p in enumerate(args.scenarios)]
    else:
        seeds = _seed_range(args.gen_seeds)
        cfgs = sweep_configs(base, seeds, seed_base=args.seed, out_dir=args.out_dir)
    items = run_batch(cfgs, args.workers)
    print("index,cell,termination,found,error")
    failed = 0
    for item, cfg in zip(items, cfgs):
        if item.ok:
            o = item.result.outcome
            found = sum(v is not None for v in o["found"].values())
            print(f"{item.index},{cfg.cell()},{o['termination']},{found}/{len(o['found'])},")
        else:
            failed += 1
            print(f"{item.index},{cfg.cell()},,,{item.error}")
    print(f"# {len(items) - failed} ok, {failed} failed")
    return EXIT_OK


def cmd_eval(args) -> int:
    traces = load_traces(args.traces)
    if not traces:
        raise ConfigError(f"no *.jsonl traces in {args.traces}")
    summaries = evaluate(traces, args.gt_radius)
    csv_text = to_csv(summaries)
    print(csv_text, end="")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(csv_text)
        (out / "metrics.md").write_text(to_markdown(summaries))
        from .plotting import plot_ablation
        plot_ablation(summaries, out / "metrics.png")
    return EXIT_OK


def cmd_ablate(args) -> int:
    table = get_table(args.table)
    out = Path(args.out_dir)
    if args.from_traces:
        summaries = table_from_traces(table, args.from_traces, args.gt_radius)
    else:
        summaries, items = run_table(table, args.seeds, args.first_seed, str(out / "traces"),
                                     args.workers, args.gt_radius)
        for i in items:
            if not i.ok:
                print(f"# mission {i.index} failed: {i.error}", file=sys.stderr)
    paths = write_outputs(table, summaries, out)
    print(paths["csv"].read_text(), end="")
    if not args.no_plot:
        from .plotting import plot_ablation
        plot_ablation(summaries, out / f"{table.name}.png", table.title)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavsearch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random scenario file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-aois", type=int, default=4)
    p.add_argument("--max-aois", type=int, default=6)
    p.add_argument("--eois", type=int, default=4)
    p.add_argument("--time-budget", type=float, default=300.0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="simulate one mission")
    _mission_args(p)
    p.add_argument("--out", help="trace file (JSON lines)")
    p.add_argument("--plot", help="write a mission map PNG here")
    p.add_argument("--gt-radius", type=float, default=DEFAULT_RADIUS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="simulate a sweep of missions")
    _mission_args(p, with_scenario=False)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--gen-seeds", help="scenario seeds, e.g. '0-11'")
    src.add_argument("--scenarios", nargs="+", help="scenario files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("eval", help="metrics over a directory of traces")
    p.add_argument("traces")
    p.add_argument("--gt-radius", type=float, default=DEFAULT_RADIUS)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run or re-score an ablation table")
    p.add_argument("--table", default="planner", help="planner|worldmodel|system (or 4|3|1)")
    p.add_argument("--seeds", type=int, default=None, help="scenario count (default per table)")
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--out-dir", default="ablation")
    p.add_argument("--from-traces", help="re-score stored traces instead of simulating")
    p.add_argument("--gt-radius", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except MissionInvariantError as exc:
        print(f"error: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, ScenarioParseError, ScenarioValidationError, GenerationError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
