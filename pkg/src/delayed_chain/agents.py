"""Miner strategies: honest, one-shot double spender, and identity churner."""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from typing import Any, Mapping

from .params import ConfigError, Status


@dataclass(frozen=True)
class MineHonest:
    pass


@dataclass(frozen=True)
class DoubleSpend:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("double-spend payoff must be positive")


@dataclass(frozen=True)
class ChurnIdentity:
    pass


@dataclass(frozen=True)
class Idle:
    pass


Action = MineHonest | DoubleSpend | ChurnIdentity | Idle


@dataclass(frozen=True)
class Observation:
    """What an agent sees when asked to act: the round and its own standing."""

    round: int
    identity: str
    status: Status
    pending: int = 0
    paid_balance: float = 0.0


class Strategy:
    name = "strategy"

    def act(self, obs: Observation) -> Action:
        raise NotImplementedError

    def spec(self) -> str:
        return self.name

    @property
    def attacks(self) -> bool:
        return False


class Honest(Strategy):
    name = "honest"

    def act(self, obs):
        return MineHonest()


class DoubleSpender(Strategy):
    """Mines honestly, double-spends once at ``attack_round``, then starts over.

    The round after the attack it abandons the doomed identity for a fresh
    one, which mines as soon as its startup work is done.
    """

    name = "double_spend"

    def __init__(self, attack_round: int, epsilon: float):
        if attack_round < 1:
            raise ConfigError("l", "attack round must be >= 1")
        if not epsilon > 0:
            raise ConfigError("eps", "double-spend payoff must be positive")
        self.attack_round = int(attack_round)
        self.epsilon = float(epsilon)

    def act(self, obs):
        if obs.round == self.attack_round:
            return DoubleSpend(self.epsilon)
        if obs.round == self.attack_round + 1 or obs.status is Status.BLACKLISTED:
            return ChurnIdentity()
        return MineHonest()

    def spec(self):
        return f"double_spend(l={self.attack_round}, eps={self.epsilon!r})"

    @property
    def attacks(self):
        return True


class Churner(Strategy):
    name = "churn"

    def __init__(self, period: int):
        if period < 1:
            raise ConfigError("period", "churn period must be >= 1")
        self.period = int(period)

    def act(self, obs):
        if obs.round % self.period == 0:
            return ChurnIdentity()
        return MineHonest()

    def spec(self):
        return f"churn(period={self.period})"


# spec-string argument aliases
_ARGS = {
    "honest": {},
    "double_spend": {"l": "attack_round", "attack_round": "attack_round",
                     "eps": "epsilon", "epsilon": "epsilon"},
    "churn": {"period": "period"},
}
_FACTORIES = {"honest": Honest, "double_spend": DoubleSpender, "churn": Churner}
_SPEC_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_strategy(spec: str, args: Mapping[str, Any] | None = None) -> Strategy:
    """Parse ``"honest"``, ``"double_spend(l=50, eps=2.0)"`` or ``"churn(period=10)"``.

    Keyword arguments may also be given separately through ``args``.
    """
    m = _SPEC_RE.match(spec or "")
    if not m:
        raise ConfigError("strategy", f"cannot parse strategy {spec!r}")
    name, body = m.group(1), m.group(2)
    if name not in _FACTORIES:
        raise ConfigError("strategy", f"unknown strategy {name!r}")

    kwargs: dict[str, Any] = {}
    if body and body.strip():
        try:
            call = ast.parse(f"f({body})", mode="eval").body
            if call.args:
                raise ValueError("positional arguments are not accepted")
            for kw in call.keywords:
                kwargs[kw.arg] = ast.literal_eval(kw.value)
        except (SyntaxError, ValueError) as exc:
            raise ConfigError("strategy", f"bad arguments in {spec!r}: {exc}") from None
    kwargs.update(args or {})

    aliases = _ARGS[name]
    resolved = {}
    for key, value in kwargs.items():
        if key not in aliases:
            raise ConfigError("strategy", f"{name} takes no argument {key!r}")
        resolved[aliases[key]] = value
    try:
        return _FACTORIES[name](**resolved)
    except TypeError as exc:
        raise ConfigError("strategy", f"{name}: {exc}") from None
