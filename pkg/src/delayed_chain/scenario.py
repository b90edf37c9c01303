"""Scenario files: protocol parameters plus a miner roster, as JSON.

Example::

    {
      "k": 3, "d": 0, "gamma0": 0, "discount": 0.9,
      "mode": "discrete", "horizon": 100, "seed": 7,
      "roster": [
        {"id": "attacker", "power": 1, "strategy": "double_spend(l=10, eps=1.0)"},
        {"id": "watcher", "power": 0, "strategy": "honest"}
      ]
    }

Protocol parameters may sit at the top level or under ``"params"``.
"""

from __future__ import annotations

import json
from typing import Any, Mapping

from .agents import parse_strategy
from .engine import DISCRETE, RosterEntry, SimConfig
from .params import ConfigError, MissingFieldError, ProtocolParams

RUN_KEYS = {"mode", "horizon", "seed", "seeds", "roster", "params"}
ROSTER_KEYS = {"id", "power", "strategy", "strategy_args", "args", "mining_cost"}


def parse_roster(raw: Any) -> list[RosterEntry]:
    if not isinstance(raw, list):
        raise ConfigError("roster", "must be a list of miners")
    roster = []
    for i, item in enumerate(raw):
        if not isinstance(item, Mapping):
            raise ConfigError(f"roster[{i}]", "must be an object")
        unknown = set(item) - ROSTER_KEYS
        if unknown:
            raise ConfigError(f"roster[{i}]", f"unknown keys {sorted(unknown)}")
        for key in ("id", "power"):
            if key not in item:
                raise MissingFieldError(f"roster[{i}].{key}", "is required")
        args = item.get("strategy_args", item.get("args"))
        strategy = parse_strategy(item.get("strategy", "honest"), args)
        roster.append(RosterEntry(str(item["id"]), item["power"], strategy,
                                  item.get("mining_cost")))
    return roster


def config_from_mapping(doc: Mapping[str, Any]) -> SimConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("scenario", "must be a JSON object")
    if "roster" not in doc:
        raise MissingFieldError("roster", "is required")
    if "horizon" not in doc:
        raise MissingFieldError("horizon", "is required")
    raw_params = dict(doc.get("params", {}))
    raw_params.update({k: v for k, v in doc.items() if k not in RUN_KEYS})
    params = ProtocolParams.from_mapping(raw_params)
    cfg = SimConfig(
        params=params,
        roster=parse_roster(doc["roster"]),
        horizon=doc["horizon"],
        seed=doc.get("seed", 0),
        mode=doc.get("mode", DISCRETE),
    )
    return cfg.validate()


def load_scenario(path) -> tuple[SimConfig, dict]:
    """Parse and validate a scenario file; also returns the raw document."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("scenario", f"invalid JSON: {exc}") from None
    except OSError as exc:
        raise ConfigError("scenario", str(exc)) from None
    return config_from_mapping(doc), doc


def config_to_mapping(cfg: SimConfig) -> dict[str, Any]:
    doc: dict[str, Any] = dict(cfg.params.to_dict())
    doc.update(mode=cfg.mode, horizon=cfg.horizon, seed=cfg.seed)
    doc["roster"] = [
        {"id": e.id, "power": e.power, "strategy": e.strategy.spec(),
         **({"mining_cost": e.mining_cost} if e.mining_cost is not None else {})}
        for e in cfg.roster
    ]
    return doc
