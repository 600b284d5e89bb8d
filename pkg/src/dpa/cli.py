"""Command line entry point: ``dpa run | plan | abstract``.

The log level comes from the ``DPA_LOG`` environment variable (default WARNING).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .abstraction import build_abstraction
from .env import BUILTIN_MAPS, TreasureGame, builtin_map
from .explorer import Datasets
from .goals import Strategy
from .harness import RunConfig, run_experiment
from .planner import plan
from .ppddl import PPDDLError, emit_domain, parse_domain, parse_problem
from .report import emit_report, success_percent


def _cmd_run(args) -> int:
    strategies = [Strategy.parse(s) for s in args.strategy.split(",")]
    out = Path(args.out)
    domain = builtin_map(args.domain).name
    matrices, reports = {}, {}
    for strategy in strategies:
        config = RunConfig(domain=domain, strategy=strategy, cycles=args.cycles, trials=args.trials,
                           seed=args.seed, out_dir=str(out / strategy.value))
        if args.dpa_steps:
            config.dpa_steps = args.dpa_steps

        def progress(r, s=strategy):
            print(f"{domain} {s.value} trial {r.trial} cycle {r.cycle}: "
                  f"symbols={r.n_symbols} operators={r.n_operators} "
                  f"goal={'executed' if r.goal_executed else 'found' if r.goal_found else 'none'}",
                  file=sys.stderr, flush=True)

        matrices[strategy], reports[strategy] = run_experiment(config, None if args.quiet else progress)
    if args.cycles == 0 or args.trials == 0:
        print("nothing to run")
        return 0
    for path in emit_report(matrices, out, domain, reports):
        print(path)
    for strategy, M in matrices.items():
        pct = success_percent(M)
        print(f"{strategy.value}: " + " ".join(f"{p:.0f}" for p in pct))
    return 0


def _cmd_plan(args) -> int:
    try:
        domain = parse_domain(Path(args.domain).read_text())
        problem = parse_problem(Path(args.problem).read_text(), domain)
    except (OSError, PPDDLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    p = plan(domain, problem)
    if p is None:
        print("no plan")
        return 1
    print(p.format(args.title))
    return 0


def _infer_map(data: Datasets) -> str:
    n = len((data.transitions or data.initiation)[0].s)
    fits = [m for m in BUILTIN_MAPS if builtin_map(m).state_size == n]
    if len(fits) != 1:
        raise ValueError(f"cannot tell the map from a {n}-variable state; pass --map")
    return fits[0]


def _cmd_abstract(args) -> int:
    try:
        data = Datasets.load(args.data)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not data.initiation and not data.transitions:
        print("error: empty dataset", file=sys.stderr)
        return 2
    maze = builtin_map(args.map or _infer_map(data))
    options = {t.o for t in data.initiation} | {t.o for t in data.transitions}
    model = build_abstraction(data, options, maze.scale(), TreasureGame(maze).initial_state(), seed=args.seed)
    text = emit_domain(model.domain)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"{len(model.factors)} factors, {len(model.symbols)} symbols, "
          f"{len(model.domain.operators)} operators", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dpa", description="Discover-Plan-Act on the Treasure Game.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run trials and write success.csv, reports.jsonl and a chart")
    r.add_argument("--domain", default="domain1", help="built-in map, e.g. d3 or domain3")
    r.add_argument("--strategy", default="gb", help="ab, gb, dgb or a comma list")
    r.add_argument("--cycles", type=int, default=15)
    r.add_argument("--trials", type=int, default=10)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--dpa-steps", type=int, default=None, help="override the per-map default")
    r.add_argument("--out", default="runs")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=_cmd_run)

    p = sub.add_parser("plan", help="plan on a .ppddl domain/problem pair")
    p.add_argument("--domain", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--title", default="PLAN")
    p.set_defaults(func=_cmd_plan)

    a = sub.add_parser("abstract", help="rebuild the symbolic domain from a dataset file")
    a.add_argument("--data", required=True)
    a.add_argument("--map", default=None, help="built-in map the data came from (inferred if unique)")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default=None, help="write the domain here instead of stdout")
    a.set_defaults(func=_cmd_abstract)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DPA_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
