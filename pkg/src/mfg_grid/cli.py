"""Command-line entry point: ``mfg-grid {run,validate,metrics,oracle,sweep}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .dispatch import SolverFailure, oracle_check
from .grid_model import NetworkError, validate_network
from .metrics import deviation_gain, heuristic_policies, metric_series, summarize
from .persist import DESK_AGENTS_PER_NODE, PRESETS, ScenarioError, emit_results, load_run, \
    load_scenario
from .simulate import run_simulation

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
SCENARIO_AGENTS_PER_NODE = 3000

log = logging.getLogger("mfg_grid")


def _threads(value):
    if value is not None:
        return value
    env = os.environ.get("MFG_GRID_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ScenarioError(f"MFG_GRID_THREADS must be an integer, got {env!r}") from None
        return n
    return None


def _overrides(args) -> dict:
    ov = {}
    if getattr(args, "seed", None) is not None:
        ov["seed"] = args.seed
    if getattr(args, "days", None) is not None:
        ov["days"] = args.days
    if getattr(args, "desk", False):
        ov["agents_per_node"] = DESK_AGENTS_PER_NODE
    if getattr(args, "agents_per_node", None) is not None:
        ov["agents_per_node"] = args.agents_per_node
    if getattr(args, "beta", None) is not None:
        ov["discount"] = args.beta
    if getattr(args, "delta", None) is not None:
        ov["delta"] = args.delta
    t = _threads(getattr(args, "threads", None))
    if t is not None:
        ov["threads"] = t
    return ov


def _add_scenario_flags(p, scenario=True):
    if scenario:
        p.add_argument("--scenario", default="mf-shock-info",
                       help=f"preset ({', '.join(PRESETS)}), 'ieee14_baseline' or a JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--days", type=int, help="simulated days (scenario default 100)")
    p.add_argument("--agents-per-node", type=int,
                   help=f"agents per bus (scenario default {SCENARIO_AGENTS_PER_NODE})")
    p.add_argument("--desk", action="store_true",
                   help=f"desk-scale preset: {DESK_AGENTS_PER_NODE} agents per node")
    p.add_argument("--threads", type=int, help="worker threads (env MFG_GRID_THREADS)")
    p.add_argument("--beta", type=float, help="hourly discount factor")
    p.add_argument("--delta", type=float, help="learning-rate scale")


def _run_one(scenario: str, overrides: dict, outdir: str) -> dict:
    sc = load_scenario(scenario, overrides)
    network, types, config = sc
    lg = run_simulation(network, types, config)
    man = emit_results(lg, metric_series(lg), outdir, sc)
    out = summarize(lg) if lg.days else {}
    out.update({"scenario": scenario, "seed": config.seed, "outdir": str(outdir),
                "config_hash": man.config_hash})
    return out


def cmd_run(args) -> int:
    res = _run_one(args.scenario, _overrides(args), args.outdir)
    print(json.dumps(res, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario, _overrides(args))
    problems = validate_network(sc.network)
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_CONFIG
    c = sc.config
    print(f"scenario {sc.name}: {sc.network.n_buses} buses, {sc.network.n_lines} lines, "
          f"{len(sc.types)} agent types, {c.agents_per_node} agents/node, "
          f"{c.days} days, mode {c.mode}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    lg, _ = load_run(args.rundir)
    bus = args.bus - 1
    out = summarize(lg, bus, args.window)
    if args.deviation:
        pols = heuristic_policies()
        gains = []
        for p in range(min(args.deviation, lg.probe_index.size)):
            r = deviation_gain(lg, p, pols, days=min(args.window, lg.days))
            gains.append({"probe": p, "bus": int(lg.probe_bus[p]) + 1, "gain": r.gain,
                          "relative_gain": r.relative_gain, "best_policy": r.best_policy})
        out["deviation"] = gains
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_oracle(args) -> int:
    rep = oracle_check(args.cases, args.seed)
    print(f"cases {rep.cases}  max |dg| {rep.max_gen_diff:.3e} MW  "
          f"max |dLMP| {rep.max_lmp_diff:.3e} $/MWh  redraws {rep.redraws}")
    for case, msg in rep.failures:
        print(f"case {case}: {msg}", file=sys.stderr)
    return EXIT_OK if rep.ok(args.tol, args.tol) else EXIT_SOLVER


def _sweep_job(job):
    scenario, ov, outdir = job
    logging.getLogger("mfg_grid").setLevel(logging.ERROR)
    return _run_one(scenario, ov, outdir)


def cmd_sweep(args) -> int:
    scenarios = args.scenario or list(PRESETS)
    base = _overrides(args)
    seeds = range(args.first_seed, args.first_seed + args.seeds)
    jobs = []
    for sc in scenarios:
        tag = Path(sc).stem if sc not in PRESETS else sc
        for s in seeds:
            jobs.append((sc, {**base, "seed": s}, str(Path(args.outdir) / tag / f"seed_{s}")))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_sweep_job, jobs))
    else:
        results = [_run_one(*j) for j in jobs]
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["scenario,seed,imv,mean_peak_spread,window_cost,infeasible_hours"]
    for (sc, ov, _), r in zip(jobs, results):
        rows.append(f"{sc},{ov['seed']},{r.get('imv')!r},{r.get('mean_peak_spread')!r},"
                    f"{r.get('window_cost')!r},{r.get('infeasible_hours')}")
    (out / "sweep_summary.csv").write_text("\n".join(rows) + "\n")
    for sc in scenarios:
        vals = [r["imv"] for (s, _, _), r in zip(jobs, results) if s == sc and r.get("imv")]
        if vals:
            print(f"{sc}: mean IMV {np.mean(vals):.4f} over {len(vals)} seeds")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfg-grid", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="simulate one scenario and write result tables")
    _add_scenario_flags(p)
    p.add_argument("--outdir", default="results")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="load and check a scenario without running it")
    _add_scenario_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("metrics", help="recompute metrics from a stored run")
    p.add_argument("rundir")
    p.add_argument("--bus", type=int, default=3, help="one-based bus for price metrics")
    p.add_argument("--window", type=int, default=10, help="trailing days")
    p.add_argument("--deviation", type=int, default=0, metavar="N",
                   help="also run deviation probes for the first N probe agents")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("oracle", help="cross-check dispatch against active-set enumeration")
    p.add_argument("--cases", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="run several seeds (and presets) into per-seed folders")
    _add_scenario_flags(p, scenario=False)
    p.add_argument("--scenario", action="append",
                   help="repeatable; default is all three presets")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="seeds run in parallel processes")
    p.add_argument("--outdir", default="sweep")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, NetworkError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
