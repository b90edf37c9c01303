"""Parameter sweeps over (k, d, gamma0, delta, epsilon, attack_round) with seed averaging."""

from __future__ import annotations

import itertools
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Iterable, Mapping, Sequence

from . import economics
from .agents import DoubleSpender
from .engine import SimConfig
from .params import ConfigError
from .report import summarize

GRID_NAMES = ("k", "d", "gamma0", "delta", "epsilon", "attack_round")
_PARAM_FIELD = {"k": "k", "d": "d", "gamma0": "gamma0", "delta": "discount"}

SWEEP_COLUMNS = ["seed", "k", "d", "gamma0", "delta", "epsilon", "attack_round",
                 "attacker_profit", "honest_mean_utility", "slashed_total", "break_even_eps"]
MEAN_COLUMNS = ["k", "d", "gamma0", "delta", "epsilon", "attack_round", "n_seeds",
                "mean_attacker_profit", "stderr_attacker_profit", "mean_honest_utility",
                "mean_slashed_total", "break_even_eps"]


def parse_values(text: str) -> list[float]:
    """``"1,2,5"`` or an inclusive range ``"0.5:1.5:0.05"``."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        try:
            start, stop, step = (float(x) for x in text.split(":"))
        except ValueError:
            raise ConfigError("grid", f"bad range {text!r}") from None
        if step <= 0 or stop < start:
            raise ConfigError("grid", f"bad range {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError("grid", f"bad value list {text!r}") from None


def parse_grid(items: Iterable[str]) -> dict[str, list[float]]:
    grid: dict[str, list[float]] = {}
    for item in items:
        name, sep, values = item.partition("=")
        name = name.strip()
        if not sep:
            raise ConfigError("grid", f"expected name=values, got {item!r}")
        grid[name] = parse_values(values)
    return grid


def check_grid(grid: Mapping[str, Sequence[float]], config: SimConfig) -> None:
    if not grid:
        raise ConfigError("grid", "empty sweep grid")
    for name, values in grid.items():
        if name not in GRID_NAMES:
            raise ConfigError(name, f"unknown sweep parameter (choose from {', '.join(GRID_NAMES)})")
        if not values:
            raise ConfigError(name, "empty value list")
        if name in ("epsilon", "attack_round") and not _attackers(config):
            raise ConfigError(name, "no double_spend miner in the roster to apply it to")


def _attackers(config: SimConfig) -> list[int]:
    return [i for i, e in enumerate(config.roster) if isinstance(e.strategy, DoubleSpender)]


def apply_point(config: SimConfig, point: Mapping[str, float], seed: int) -> SimConfig:
    """Copy of ``config`` with the grid point and seed applied."""
    changes = {}
    for name, field in _PARAM_FIELD.items():
        if name in point:
            value = point[name]
            changes[field] = int(value) if name == "k" else value
    params = replace(config.params, **changes)
    roster = list(config.roster)
    for i in _attackers(config):
        s = roster[i].strategy
        roster[i] = replace(roster[i], strategy=DoubleSpender(
            int(point.get("attack_round", s.attack_round)),
            point.get("epsilon", s.epsilon)))
    return replace(config, params=params, roster=roster, seed=seed).validate()


def _point_row(config: SimConfig) -> dict:
    summary = summarize(config)
    row = summary.row()
    idx = _attackers(config)
    row["attack_round"] = config.roster[idx[0]].strategy.attack_round if idx else ""
    row["break_even_eps"] = math.nan
    if idx:
        total = math.fsum(e.power for e in config.roster)
        entry = config.roster[idx[0]]
        l = entry.strategy.attack_round
        if l > config.params.k:
            row["break_even_eps"] = economics.break_even_epsilon(
                config.params, entry.power / total, l)
    return {c: row[c] for c in SWEEP_COLUMNS}


def _key(row: Mapping) -> tuple:
    return tuple(row[c] for c in ("k", "d", "gamma0", "delta", "epsilon", "attack_round"))


def run_sweep(config: SimConfig, grid: Mapping[str, Sequence[float]],
              seeds: Sequence[int], jobs: int = 1) -> tuple[list[dict], list[dict]]:
    """Every grid point x seed; returns (per-seed rows, seed-averaged rows), sorted."""
    check_grid(grid, config)
    if not seeds:
        raise ConfigError("seeds", "need at least one seed")
    names = list(grid)
    configs = []
    for combo in itertools.product(*(grid[n] for n in names)):
        point = dict(zip(names, combo))
        for seed in seeds:
            configs.append(apply_point(config, point, seed))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_point_row, configs, chunksize=4))
    else:
        rows = [_point_row(c) for c in configs]
    rows.sort(key=lambda r: (_key(r), r["seed"]))

    means = []
    for key, group in itertools.groupby(rows, key=_key):
        group = list(group)
        profits = [r["attacker_profit"] for r in group]
        mean_profit = statistics.fmean(profits)
        stderr = (statistics.stdev(profits) / math.sqrt(len(profits))
                  if len(profits) > 1 else math.nan)
        means.append({
            **dict(zip(("k", "d", "gamma0", "delta", "epsilon", "attack_round"), key)),
            "n_seeds": len(group),
            "mean_attacker_profit": mean_profit,
            "stderr_attacker_profit": stderr,
            "mean_honest_utility": statistics.fmean(r["honest_mean_utility"] for r in group),
            "mean_slashed_total": statistics.fmean(r["slashed_total"] for r in group),
            "break_even_eps": group[0]["break_even_eps"],
        })
    return rows, means
