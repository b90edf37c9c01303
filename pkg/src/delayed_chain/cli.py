"""Command-line entry point: run, sweep, analyze, game.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
from dataclasses import replace

from . import economics, game
from .engine import DISCRETE, POISSON, SimulationError
from .params import ConfigError, ProtocolParams, validate_params
from .report import SUMMARY_COLUMNS, render_report, summarize
from .scenario import load_scenario
from .sweep import MEAN_COLUMNS, SWEEP_COLUMNS, parse_grid, parse_values, run_sweep

log = logging.getLogger("delayed_chain")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _fmt(value):
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return value


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _apply_overrides(config, args):
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    if getattr(args, "horizon", None) is not None:
        changes["horizon"] = args.horizon
    return replace(config, **changes).validate() if changes else config


def cmd_run(args) -> int:
    config, _ = load_scenario(args.scenario)
    config = _apply_overrides(config, args)
    os.makedirs(args.out, exist_ok=True)
    try:
        summary = summarize(config)
    except SimulationError as exc:
        exc.events.write(os.path.join(args.out, "events.log"))
        raise
    summary.result.events.write(os.path.join(args.out, "events.log"))
    write_csv(os.path.join(args.out, "summary.csv"), SUMMARY_COLUMNS, [summary.row()])
    report = render_report(summary)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report)
    print(report, end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config, doc = load_scenario(args.scenario)
    config = _apply_overrides(config, args)
    grid = {}
    if args.sweep:
        with open(args.sweep, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("sweep", "sweep file must map parameter names to value lists")
        for name, values in raw.items():
            grid[name] = parse_values(values) if isinstance(values, str) else list(values)
    grid.update(parse_grid(args.grid or []))
    n_seeds = args.seeds if args.seeds is not None else doc.get("seeds", 32)
    seeds = [config.seed + i for i in range(n_seeds)]
    rows, means = run_sweep(config, grid, seeds, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "sweep.csv"), SWEEP_COLUMNS, rows)
    write_csv(os.path.join(args.out, "sweep_mean.csv"), MEAN_COLUMNS, means)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(MEAN_COLUMNS)
    for row in means:
        writer.writerow([_fmt(row[c]) for c in MEAN_COLUMNS])
    return EXIT_OK


ANALYZE_COLUMNS = ["k", "d", "gamma0", "delta", "l", "p_v", "expected_startup_rounds",
                   "value_at_risk", "break_even_eps", "magnitude"]


def _table(columns, rows) -> str:
    cells = [[str(c) for c in columns]]
    for row in rows:
        cells.append([f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c])
                      for c in columns])
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def cmd_analyze(args) -> int:
    if args.scenario:
        config, _ = load_scenario(args.scenario)
        base = config.params
    else:
        base = ProtocolParams(discount=0.9)
    overrides = {}
    for name, field in (("alpha", "alpha"), ("lam", "lam"), ("delta_t", "delta_t")):
        if getattr(args, name) is not None:
            overrides[field] = getattr(args, name)
    base = replace(base, **overrides)

    grid = parse_grid(args.grid or [])
    unknown = set(grid) - {"k", "d", "gamma0", "delta", "l", "p"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown analyze parameter")
    axes = {
        "k": grid.get("k", [args.k if args.k is not None else base.k]),
        "d": grid.get("d", [args.d if args.d is not None else base.d]),
        "gamma0": grid.get("gamma0", [args.gamma0 if args.gamma0 is not None else base.gamma0]),
        "delta": grid.get("delta", [args.delta if args.delta is not None else base.discount]),
        "l": grid.get("l", [args.l]),
        "p": grid.get("p", [args.p]),
    }
    rows = []
    for k, d, g, dl, l, p in itertools.product(*axes.values()):
        params = validate_params(replace(base, k=int(k), d=d, gamma0=g, discount=dl))
        l = int(l)
        if not 0 < p <= 1:
            raise ConfigError("p", "power fraction must lie in (0, 1]")
        if l <= params.k:
            raise ConfigError("l", f"attack round {l} must exceed k={params.k}")
        r = economics.expected_startup_rounds(params.d, economics.startup_success_rate(params, p))
        rows.append({
            "k": params.k, "d": params.d, "gamma0": params.gamma0, "delta": params.discount,
            "l": l, "p_v": p, "expected_startup_rounds": r,
            "value_at_risk": economics.value_at_risk(params, p, l),
            "break_even_eps": economics.value_at_risk_with_startup(params, p, l, r),
            "magnitude": economics.attack_cost_magnitude(params, r),
        })
    print(_table(ANALYZE_COLUMNS, rows))
    return EXIT_OK


def cmd_game(args) -> int:
    try:
        g = game.CoordinationGame(args.n, args.alpha, args.beta)
    except ValueError as exc:
        raise ConfigError("game", str(exc)) from None
    if not 1 <= args.k <= args.n:
        raise ConfigError("k", f"coalition size must lie in [1, {args.n}]")
    if args.t < 0:
        raise ConfigError("t", "punishment length must be >= 0")
    if args.n > game.MAX_RESILIENCE_PLAYERS:
        raise ConfigError("n", f"exhaustive analysis supports n <= {game.MAX_RESILIENCE_PLAYERS}")

    print(f"coordination game n={g.n} alpha={g.alpha:g} beta={g.beta:g}")
    print("profile  payoffs  nash")
    for profile in game.all_profiles(g.n):
        u = game.payoff(g, profile)
        print(f"{''.join(map(str, profile))}  {' '.join(f'{x:g}' for x in u)}  "
              f"{'yes' if game.is_nash(g, profile) else 'no'}")
    zero = (0,) * g.n
    brute = game.is_k_resilient(g, zero, args.k)
    ruled_out = game.paper_resilience_condition(g.alpha, g.beta, args.k)
    print(f"all-zero profile {args.k}-resilient (exhaustive): {'yes' if brute else 'no'}")
    print(f"closed-form rule 2*beta/k > alpha: {'true' if ruled_out else 'false'} "
          f"(resilience {'ruled out' if ruled_out else 'not ruled out'})")
    if brute == ruled_out:
        print("note: exhaustive check and closed-form rule disagree")
    dstar = game.min_discount(g.alpha, g.beta, args.k, args.t)
    target = game.cooperation_target(g.alpha, g.beta, args.k)
    shown = "Infeasible" if dstar is None else f"{dstar:.9f}"
    print(f"minimum discount for t={args.t} (need lhs >= {target:.6g}): {shown}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delayed-chain",
        description="Simulate and analyze (k, d, gamma)-delayed proof-of-work protocols.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def sim_flags(p):
        p.add_argument("--scenario", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default="out")
        p.add_argument("--mode", choices=[DISCRETE, POISSON])
        p.add_argument("--horizon", type=float)

    p = sub.add_parser("run", help="simulate one scenario")
    sim_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="simulate a parameter grid over many seeds")
    sim_flags(p)
    p.add_argument("--grid", action="append", metavar="NAME=VALUES",
                   help="e.g. epsilon=0.5:1.5:0.05 or d=0,5,20,80 (repeatable)")
    p.add_argument("--sweep", metavar="FILE", help="JSON object of NAME -> values")
    p.add_argument("--seeds", type=int, help="seeds per grid point (default 32)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="closed-form attack thresholds")
    p.add_argument("--scenario")
    for name, typ in (("k", int), ("d", float), ("gamma0", float), ("delta", float),
                      ("alpha", float), ("lam", float), ("delta-t", float)):
        p.add_argument(f"--{name}", type=typ)
    p.add_argument("--l", type=int, default=10, help="attack round")
    p.add_argument("--p", type=float, default=1.0, help="attacker power fraction")
    p.add_argument("--grid", action="append", metavar="NAME=VALUES")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("game", help="coordination game analysis")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--t", type=int, default=1)
    p.set_defaults(func=cmd_game)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
