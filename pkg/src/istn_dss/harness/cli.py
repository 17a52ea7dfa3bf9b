"""Command-line entry point: run, sweep, validate, gen-traces.

Exit codes: 0 success, 2 constraint violations reported, 1 error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from ..channel import build_cycle_channels, dump_channels
from ..queueing import write_trace
from .experiments import AXES, SUMMARY_HEADER, SWEEP_HEADER, summary_row, sweep, validate_decision_files, validate_runs
from .run import ALGORITHMS, run_many
from .scenario import build_world, list_configs, load_scenario
from .store import format_table, save_decision

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def _algorithms(values: List[str]) -> List[str]:
    if not values or values == ["all"]:
        return list(ALGORITHMS)
    bad = [a for a in values if a not in ALGORITHMS]
    if bad:
        raise ValueError(f"unknown algorithm(s) {bad}; choose from {', '.join(ALGORITHMS)}")
    return values


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)


def _load(args):
    sc = load_scenario(args.config)
    if getattr(args, "cycles", None):
        from dataclasses import replace

        sc = replace(sc, grid=replace(sc.grid, n_cycles=args.cycles))
    return sc


def cmd_run(args) -> int:
    sc = _load(args)
    algs = _algorithms(args.algorithm)
    reports = run_many(sc, algs, args.seeds or [sc.seed], keep_decisions=bool(args.save_decisions))
    if args.per_cycle:
        header, rows = None, []
        for r in reports:
            header, rr = r.cycle_rows()
            rows.extend(rr)
        text = format_table(header, rows)
    else:
        text = format_table(SUMMARY_HEADER, [summary_row(r) for r in reports])
    _emit(text, args.out)
    if args.save_decisions:
        d = Path(args.save_decisions)
        d.mkdir(parents=True, exist_ok=True)
        for r in reports:
            for c, dec in zip(r.cycles, r.decisions):
                save_decision(d / f"{r.algorithm}_s{r.seed}_c{c.cycle}.npz", dec,
                              {"seed": r.seed, "cycle": c.cycle, "scenario": sc.name},
                              dec.info.get("q0"))
    if any(r.failure for r in reports):
        return EXIT_ERROR
    bad = any(r.structural_violations() or r.unexpected_service_violations() for r in reports)
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_sweep(args) -> int:
    sc = _load(args)
    rows = sweep(sc, args.axis, args.values, _algorithms(args.algorithm), args.seeds or [sc.seed])
    _emit(format_table(SWEEP_HEADER, rows), args.out)
    return EXIT_ERROR if any(r[-1] != "-" for r in rows) else EXIT_OK


def cmd_validate(args) -> int:
    if args.decisions:
        sc = _load(args) if args.config else None
        rows = validate_decision_files(args.decisions, sc)
        _emit(format_table(("file", "tag", "count", "detail"), rows), args.out)
        return EXIT_VIOLATION if rows else EXIT_OK
    if not args.config:
        raise ValueError("validate needs a scenario config or --decisions files")
    sc = _load(args)
    reports = run_many(sc, _algorithms(args.algorithm), args.seeds or [sc.seed])
    rows = validate_runs(reports)
    _emit(format_table(("algorithm", "seed", "cycle", "tag", "count", "expected"), rows), args.out)
    if any(r.failure for r in reports):
        return EXIT_ERROR
    return EXIT_VIOLATION if any(r[-1] == "no" for r in rows) else EXIT_OK


def cmd_gen_traces(args) -> int:
    sc = _load(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in args.seeds or [sc.seed]:
        world = build_world(sc, seed)
        write_trace(world.traffic, out / f"traffic_s{seed}.txt")
        if args.channels:
            for c in range(sc.grid.n_cycles + 1):
                real, _ = build_cycle_channels(world.geometry(c), c, sc.coupling(seed), sc.grid, sc.channel)
                dump_channels(real, out / f"channels_s{seed}_c{c}.txt")
    sys.stdout.write(f"wrote traces for seeds {args.seeds or [sc.seed]} to {out}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="istn-dss", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("config", nargs=None if config_required else "?",
                        help=f"scenario YAML or bundled name ({', '.join(list_configs())})")
        sp.add_argument("--seeds", type=int, nargs="+")
        sp.add_argument("--cycles", type=int, help="override the number of planning cycles")
        sp.add_argument("--out", help="also write the table to this file")

    r = sub.add_parser("run", help="simulate a scenario")
    common(r)
    r.add_argument("-a", "--algorithm", nargs="+", default=["rt_refine"], help="planner(s) or 'all'")
    r.add_argument("--per-cycle", action="store_true", help="one row per cycle")
    r.add_argument("--save-decisions", metavar="DIR")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="vary one parameter")
    common(s)
    s.add_argument("--axis", required=True, choices=sorted(AXES))
    s.add_argument("--values", type=float, nargs="+", required=True)
    s.add_argument("-a", "--algorithm", nargs="+", default=["rt_refine"])
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="check constraints of runs or stored decisions")
    common(v, config_required=False)
    v.add_argument("-a", "--algorithm", nargs="+", default=["all"])
    v.add_argument("--decisions", nargs="+", help="decision .npz files")
    v.set_defaults(func=cmd_validate)

    g = sub.add_parser("gen-traces", help="write traffic (and optionally channel) traces")
    common(g)
    g.add_argument("--out-dir", default="traces")
    g.add_argument("--channels", action="store_true")
    g.set_defaults(func=cmd_gen_traces)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
