"""Simulator and economic analyzer for (k, d, gamma)-delayed proof-of-work protocols."""

from .params import (ConfigError, MinerRecord, PendingReward, ProtocolParams, Status,
                     normalize_powers, validate_params)
from .engine import SimConfig, RosterEntry, run

__all__ = [
    "ConfigError", "MinerRecord", "PendingReward", "ProtocolParams", "Status",
    "normalize_powers", "validate_params", "SimConfig", "RosterEntry", "run",
]
__version__ = "0.1.0"
