"""Protocol parameters, miner identities and the pending-reward record.

A (k, d, gamma)-delayed protocol locks every block reward for ``k`` rounds,
asks each fresh identity for ``d`` units of startup work before it may earn,
and lets locked rewards decay at a per-identity rate that grows every time a
past winner drops out of the miner set.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field, fields, replace
from typing import Any, Iterable, Mapping


class ConfigError(ValueError):
    """Invalid configuration. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class MissingFieldError(ConfigError):
    pass


class ParamRangeError(ConfigError):
    pass


# JSON key -> dataclass attribute, where they differ
_KEY_ALIASES = {"lambda": "lam", "gamma": "gamma0", "delta": "discount"}


@dataclass(frozen=True)
class ProtocolParams:
    """The (k, d, gamma) tuple plus the economic constants around it.

    ``discount`` has no default on purpose: an unset discount factor is
    reported differently from one outside (0, 1).
    """

    k: int = 0
    d: float = 0.0
    gamma0: float = 0.0
    decay_growth: float = 1.0
    alpha: float = 1.0
    alpha_decay: float = 0.0
    lam: float = 1.0
    delta_t: float = 1.0
    discount: float | None = None
    reporter_share: float = 0.0
    mining_cost: float = 0.0

    @property
    def legacy(self) -> bool:
        """True for (k, 0, 0) protocols: plain maturity delay, no stake mechanics."""
        return self.d == 0 and self.gamma0 == 0

    def alpha_at(self, round_: int) -> float:
        if self.alpha_decay == 0:
            return self.alpha
        return self.alpha * math.exp(-self.alpha_decay * round_)

    def gamma_for(self, dropouts: int) -> float:
        return self.gamma0 * self.decay_growth**dropouts

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            key = "lambda" if f.name == "lam" else f.name
            out[key] = getattr(self, f.name)
        return out

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "ProtocolParams":
        """Build from a key-value document; unknown keys are rejected."""
        names = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            name = _KEY_ALIASES.get(key, key)
            if name not in names:
                raise ConfigError(key, "unknown protocol parameter")
            kwargs[name] = value
        return cls(**kwargs)


def _number(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParamRangeError(name, f"expected a number, got {value!r}")
    if math.isnan(value):
        raise ParamRangeError(name, "is NaN")
    return float(value)


def validate_params(raw: ProtocolParams) -> ProtocolParams:
    """Check every parameter invariant; returns ``raw`` (normalized types) or raises.

    Fields are checked in declaration order so the first violation is the one
    reported. ``params.legacy`` flags the (k, 0, 0) case.
    """
    if raw.discount is None:
        raise MissingFieldError("discount", "discount factor is required")

    integral = isinstance(raw.k, int) or (isinstance(raw.k, float) and raw.k.is_integer())
    if isinstance(raw.k, bool) or not integral:
        raise ParamRangeError("k", f"timelock must be an integer, got {raw.k!r}")
    k = int(raw.k)
    if k < 0:
        raise ParamRangeError("k", "timelock must be >= 0")

    checked = {}
    for name in ("d", "gamma0", "decay_growth", "alpha", "alpha_decay", "lam",
                 "delta_t", "discount", "reporter_share", "mining_cost"):
        checked[name] = _number(name, getattr(raw, name))

    if checked["d"] < 0:
        raise ParamRangeError("d", "startup work must be >= 0")
    if checked["gamma0"] < 0:
        raise ParamRangeError("gamma0", "decay rate must be >= 0")
    if checked["decay_growth"] < 1:
        raise ParamRangeError("decay_growth", "decay growth must be >= 1")
    if checked["alpha"] <= 0:
        raise ParamRangeError("alpha", "block reward must be > 0")
    if checked["alpha_decay"] < 0:
        raise ParamRangeError("alpha_decay", "reward decay must be >= 0")
    if checked["lam"] <= 0:
        raise ParamRangeError("lambda", "arrival rate must be > 0")
    if checked["delta_t"] <= 0:
        raise ParamRangeError("delta_t", "step length must be > 0")
    if not 0 < checked["discount"] < 1:
        raise ParamRangeError("discount", "discount out of range (0, 1)")
    if not 0 <= checked["reporter_share"] <= 1:
        raise ParamRangeError("reporter_share", "reporter share must lie in [0, 1]")
    if checked["mining_cost"] < 0:
        raise ParamRangeError("mining_cost", "mining cost must be >= 0")

    return replace(raw, k=k, **checked)


class Status(enum.Enum):
    ACTIVE = "active"
    BLACKLISTED = "blacklisted"
    RESTARTING = "restarting"
    # identity abandoned by its agent after a churn; still collects its locked rewards
    RETIRED = "retired"


@dataclass(slots=True)
class PendingReward:
    owner: str
    nominal: float
    created_round: int
    unlock_round: int
    accrued_decay: float = 0.0
    slashed: bool = False

    @property
    def decay_factor(self) -> float:
        return math.exp(-self.accrued_decay)

    @property
    def value(self) -> float:
        """Decay-adjusted value if it were settled now."""
        return self.nominal * math.exp(-self.accrued_decay)


@dataclass(slots=True)
class MinerRecord:
    """One identity (key pair handle) of a logical agent."""

    id: str
    power: float
    agent: str = ""
    status: Status = Status.ACTIVE
    remaining_work: int = 0
    dropouts: int = 0
    pending: deque = field(default_factory=deque)
    paid_balance: float = 0.0
    key_history: list = field(default_factory=list)
    mining_cost: float | None = None

    def __post_init__(self):
        if not self.agent:
            self.agent = self.id


def normalize_powers(miners: Iterable[MinerRecord]) -> list[MinerRecord]:
    """Rescale Active powers to sum to one. Records are updated in place and returned."""
    miners = list(miners)
    for m in miners:
        if m.power < 0 or math.isnan(m.power):
            raise ConfigError("power", f"negative power for {m.id}")
    active = [m for m in miners if m.status is Status.ACTIVE]
    total = math.fsum(m.power for m in active)
    if total <= 0:
        raise ConfigError("power", "all-zero power vector")
    for m in active:
        m.power = m.power / total
    return miners
