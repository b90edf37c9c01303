"""Deterministic round-based mining simulator.

Each round runs, in order:

1. startup completions, then agent actions (churn takes effect immediately,
   double spends are signed and queued for reporting next round);
2. winner selection, one block per round (discrete) or Poisson arrivals
   inside the round window (poisson);
3. reward accrual;
4. decay tick;
5. fraud reports and slashes;
6. maturity payouts;
7. dropout accounting;
8. startup-work progress for restarting identities.

Randomness comes from named substreams of one seed: one for arrival times,
one for winner draws, and one per agent (keys, startup work). Adding an
agent does not perturb the draws of the others' substreams.
"""

from __future__ import annotations

import bisect
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .agents import ChurnIdentity, DoubleSpend, Honest, Idle, Observation, Strategy
from .fraud import FraudProof, KeyRing, sign_transaction, verify_fraud_proof
from .ledger import RewardLedger
from .params import ConfigError, MinerRecord, ProtocolParams, Status, validate_params

DISCRETE = "discrete"
POISSON = "poisson"


class Kind(str, enum.Enum):
    STARTUP_SOLVED = "StartupSolved"
    IDENTITY_CHURNED = "IdentityChurned"
    DOUBLE_SPEND = "DoubleSpendAttempted"
    BLOCK_WON = "BlockWon"
    REWARD_ACCRUED = "RewardAccrued"
    FRAUD_REPORTED = "FraudReported"
    SLASHED = "Slashed"
    REWARD_MATURED = "RewardMatured"
    DROPOUT = "Dropout"


# tie-break rank inside a round; matches processing order
KIND_RANK = {kind: i for i, kind in enumerate(Kind)}


class SimEvent:
    __slots__ = ("round", "time", "kind", "miner", "data")

    def __init__(self, round_: int, time: float, kind: Kind, miner: str | None,
                 data: dict | None = None):
        self.round = round_
        self.time = time
        self.kind = kind
        self.miner = miner
        self.data = data or {}

    def to_record(self) -> dict[str, Any]:
        rec = {"round": self.round, "time": self.time, "kind": self.kind.value,
               "miner": self.miner}
        rec.update(self.data)
        return rec

    def __repr__(self):
        return f"SimEvent({self.round}, {self.kind.value}, {self.miner}, {self.data})"


LEDGER_COLUMNS = ["round", "kind", "owner", "nominal", "decay_factor", "amount",
                  "reporter_credit", "burned"]


class EventLog:
    def __init__(self, events: Iterable[SimEvent] = ()):
        self.events: list[SimEvent] = list(events)

    def append(self, ev: SimEvent) -> None:
        self.events.append(ev)

    def __iter__(self) -> Iterator[SimEvent]:
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def of_kind(self, kind: Kind) -> list[SimEvent]:
        return [e for e in self.events if e.kind is kind]

    def lines(self) -> Iterator[str]:
        for ev in self.events:
            yield json.dumps(ev.to_record(), separators=(",", ":"))

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.lines():
                fh.write(line)
                fh.write("\n")

    def ledger_rows(self) -> list[list]:
        """Payout and slash events in :data:`LEDGER_COLUMNS` order."""
        rows = []
        for ev in self.events:
            if ev.kind is Kind.REWARD_MATURED:
                d = ev.data
                rows.append([ev.round, ev.kind.value, ev.miner, d["nominal"],
                             d["decay_factor"], d["amount"], 0.0, 0.0])
            elif ev.kind is Kind.SLASHED:
                d = ev.data
                rows.append([ev.round, ev.kind.value, ev.miner, d["nominal"], "",
                             d["slashed_total"], d["reporter_credit"], d["burned"]])
        return rows


def read_event_log(path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def replay_balances(records: Iterable[Mapping[str, Any]]) -> dict[str, float]:
    """Paid balance per identity, rebuilt from event records alone."""
    paid: dict[str, float] = {}
    for rec in records:
        kind = rec["kind"]
        if kind == Kind.REWARD_MATURED.value:
            paid[rec["miner"]] = paid.get(rec["miner"], 0.0) + rec["amount"]
        elif kind == Kind.SLASHED.value and rec["reporter"] is not None:
            if rec["reporter_credit"]:
                paid[rec["reporter"]] = paid.get(rec["reporter"], 0.0) + rec["reporter_credit"]
    return paid


# ---------------------------------------------------------------------------
# randomness

def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``, derived from the run seed."""
    code = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(code,)))


class _Buffered:
    """Chunked draws from a generator; cuts per-call overhead in the round loop."""

    def __init__(self, rng: np.random.Generator, draw, chunk: int = 4096):
        self._rng = rng
        self._draw = draw
        self._chunk = chunk
        self._buf: list[float] = []
        self._i = 0

    def __call__(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self._draw(self._rng, self._chunk).tolist()
            self._i = 0
        x = self._buf[self._i]
        self._i += 1
        return x


def _pick(cum: Sequence[float], total: float, u: float) -> int:
    i = min(bisect.bisect_right(cum, u * total), len(cum) - 1)
    while i > 0 and cum[i] == cum[i - 1]:  # never land on a zero-power entry
        i -= 1
    return i


def select_winner(powers, rng: np.random.Generator):
    """Categorical draw. ``powers`` is a sequence (returns an index) or a mapping id -> power."""
    if isinstance(powers, Mapping):
        ids, values = list(powers.keys()), list(powers.values())
    else:
        ids, values = None, list(powers)
    if not values or any(p < 0 for p in values):
        raise ValueError("powers must be a non-empty, nonnegative vector")
    total = math.fsum(values)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"powers are not normalized (sum={total!r})")
    i = _pick(np.cumsum(values).tolist(), 1.0, rng.random())
    return ids[i] if ids is not None else i


def poisson_arrivals(lam: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Arrival times of a rate-``lam`` Poisson process on [0, horizon)."""
    times = []
    t = 0.0
    chunk = max(16, int(lam * horizon * 1.1) + 16)
    while True:
        gaps = rng.exponential(1.0 / lam, chunk)
        arr = t + np.cumsum(gaps)
        keep = arr[arr < horizon]
        times.append(keep)
        if len(keep) < len(arr):
            break
        t = float(arr[-1])
    return np.concatenate(times)


def sample_startup_rounds(d: float, p_v: float, params: ProtocolParams,
                          rng: np.random.Generator) -> int:
    """Rounds needed to collect ceil(d) successes at per-round success rate min(1, p_v*lambda*dt)."""
    if d < 0:
        raise ValueError("startup work must be >= 0")
    if d == 0:
        return 0
    if not p_v > 0:
        raise ValueError("a miner without power never finishes its startup work")
    q = min(1.0, p_v * params.lam * params.delta_t)
    n = math.ceil(d)
    if q >= 1.0:
        return n
    return n + int(rng.negative_binomial(n, q))


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RosterEntry:
    id: str
    power: float
    strategy: Strategy = field(default_factory=Honest)
    mining_cost: float | None = None

    def __post_init__(self):
        if not self.id or "/" in self.id:
            raise ConfigError("roster.id", f"bad miner id {self.id!r}")
        if isinstance(self.power, bool) or not isinstance(self.power, (int, float)) \
                or self.power < 0 or math.isnan(self.power):
            raise ConfigError("roster.power", f"bad power for {self.id}: {self.power!r}")


@dataclass
class SimConfig:
    params: ProtocolParams
    roster: list[RosterEntry]
    horizon: float
    seed: int = 0
    mode: str = DISCRETE

    def validate(self) -> "SimConfig":
        self.params = validate_params(self.params)
        if self.mode not in (DISCRETE, POISSON):
            raise ConfigError("mode", f"unknown mode {self.mode!r}")
        if not self.horizon > 0:
            raise ConfigError("horizon", "horizon must be positive")
        if self.mode == DISCRETE and float(self.horizon) != int(self.horizon):
            raise ConfigError("horizon", "discrete horizon must be a whole number of rounds")
        if not self.roster:
            raise ConfigError("roster", "roster is empty")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) \
                or not 0 <= self.seed < 2**64:
            raise ConfigError("seed", "seed must be an unsigned 64-bit integer")
        ids = [e.id for e in self.roster]
        if len(set(ids)) != len(ids):
            raise ConfigError("roster", "duplicate miner ids")
        if math.fsum(e.power for e in self.roster) <= 0:
            raise ConfigError("roster.power", "all-zero power vector")
        return self

    @property
    def n_rounds(self) -> int:
        if self.mode == DISCRETE:
            return int(self.horizon)
        return math.ceil(self.horizon / self.params.delta_t - 1e-12)


@dataclass
class AgentState:
    name: str
    strategy: Strategy
    share: float
    rng: np.random.Generator
    mining_cost: float
    identity: str = ""
    generation: int = 0
    secrets: dict = field(default_factory=dict)
    external: float = 0.0
    discounted_cost: float = 0.0
    spends: int = 0

    @property
    def identities(self) -> list[str]:
        return [f"{self.name}/{g}" for g in range(self.generation + 1)]


@dataclass
class SimResult:
    config: SimConfig
    events: EventLog
    ledger: RewardLedger
    agents: dict[str, AgentState]
    rounds: int

    def agent_of(self, identity: str) -> str:
        return self.ledger.miners[identity].agent


class SimulationError(RuntimeError):
    def __init__(self, message: str, events: EventLog):
        super().__init__(message)
        self.events = events


# ---------------------------------------------------------------------------

class _Engine:
    def __init__(self, config: SimConfig):
        self.cfg = config
        self.p = config.params
        self.keys = KeyRing()
        self.ledger = RewardLedger(self.p, self.keys)
        self.log = EventLog()
        total = math.fsum(e.power for e in config.roster)
        self.agents: dict[str, AgentState] = {}
        for entry in config.roster:
            cost = entry.mining_cost if entry.mining_cost is not None else self.p.mining_cost
            agent = AgentState(entry.id, entry.strategy, entry.power / total,
                               substream(config.seed, f"agent:{entry.id}"), cost)
            self.agents[entry.id] = agent
            self._new_identity(agent, Status.ACTIVE)
        self.winner_u = _Buffered(substream(config.seed, "winners"),
                                  lambda rng, n: rng.random(n))
        self.gap = _Buffered(substream(config.seed, "arrivals"),
                             lambda rng, n: rng.exponential(1.0 / self.p.lam, n))
        self.next_arrival = self.gap() if config.mode == POISSON else 0.0
        self.reports: dict[int, list] = {}
        self.restarting: dict[str, MinerRecord] = {}
        self.churned_at: dict[str, int] = {}

    def _new_identity(self, agent: AgentState, status: Status, remaining: int = 0):
        ident = f"{agent.name}/{agent.generation}"
        secret = agent.rng.bytes(32)
        self.keys.register(ident, secret)
        agent.secrets[ident] = secret
        history = []
        if agent.identity:
            old = self.ledger.miners[agent.identity]
            history = old.key_history + [old.id]
        rec = MinerRecord(ident, agent.share, agent=agent.name, status=status,
                          remaining_work=remaining, key_history=history,
                          mining_cost=agent.mining_cost)
        self.ledger.add_miner(rec)
        agent.identity = ident
        if status is Status.RESTARTING:
            self.restarting[ident] = rec
        return rec

    def _emit(self, rnd, time, kind, miner, data=None):
        self.log.append(SimEvent(rnd, time, kind, miner, data))

    def _churn(self, agent: AgentState, rnd: int, t0: float) -> MinerRecord:
        old = self.ledger.miners[agent.identity]
        if old.status is not Status.BLACKLISTED:
            old.status = Status.RETIRED
        old.power = 0.0
        self.restarting.pop(old.id, None)
        r = sample_startup_rounds(self.p.d, agent.share, self.p, agent.rng)
        agent.generation += 1
        rec = self._new_identity(agent, Status.RESTARTING if r > 0 else Status.ACTIVE, r)
        self.churned_at[rec.id] = rnd
        self._emit(rnd, t0, Kind.IDENTITY_CHURNED, old.id,
                   {"new_identity": rec.id, "startup_rounds": r})
        return rec

    def _double_spend(self, agent: AgentState, rec: MinerRecord, eps: float,
                      rnd: int, t0: float) -> None:
        secret = agent.secrets[rec.id]
        outpoint = f"{rec.id}:out:{agent.spends}"
        agent.spends += 1
        tx_a = sign_transaction(self.keys, secret, rec.id, outpoint, eps, nonce=0)
        tx_b = sign_transaction(self.keys, secret, rec.id, outpoint, eps, nonce=1)
        agent.external += eps
        self._emit(rnd, t0, Kind.DOUBLE_SPEND, rec.id,
                   {"epsilon": eps, "tx_a": tx_a.to_record(), "tx_b": tx_b.to_record()})
        self.reports.setdefault(rnd + 1, []).append((rec.id, tx_a, tx_b))

    def _reporter_for(self, accused: str) -> str | None:
        owner = self.ledger.miners[accused].agent
        for ident in sorted(self.ledger.miners):
            rec = self.ledger.miners[ident]
            if rec.status is Status.ACTIVE and rec.agent != owner:
                return ident
        return None

    def step(self, rnd: int) -> None:
        p, ledger = self.p, self.ledger
        dt = p.delta_t
        t0, t1 = (rnd - 1) * dt, rnd * dt
        disc = p.discount ** (rnd - 1)

        # 1. startup completions and actions
        mining: list[MinerRecord] = []
        for agent in self.agents.values():
            rec = ledger.miners[agent.identity]
            if rec.status is Status.RESTARTING and rec.remaining_work <= 0:
                rec.status = Status.ACTIVE
                del self.restarting[rec.id]
                self._emit(rnd, t0, Kind.STARTUP_SOLVED, rec.id,
                           {"churned_round": self.churned_at[rec.id]})
            obs = Observation(rnd, rec.id, rec.status, len(rec.pending), rec.paid_balance)
            action = agent.strategy.act(obs)
            if isinstance(action, ChurnIdentity):
                rec = self._churn(agent, rnd, t0)
            elif isinstance(action, DoubleSpend) and rec.status is not Status.BLACKLISTED:
                self._double_spend(agent, rec, action.epsilon, rnd, t0)
            if rec.status is Status.ACTIVE and not isinstance(action, Idle):
                mining.append(rec)
                if agent.mining_cost:
                    agent.discounted_cost += disc * agent.mining_cost * dt

        # 2-3. winners and accrual
        cum, total = [], 0.0
        for rec in mining:
            total += rec.power
            cum.append(total)
        if total > 0:
            if self.cfg.mode == DISCRETE:
                self._award(mining[_pick(cum, total, self.winner_u())], rnd, t0)
            else:
                end = min(t1, float(self.cfg.horizon))
                while self.next_arrival < end:
                    self._award(mining[_pick(cum, total, self.winner_u())], rnd,
                                self.next_arrival)
                    self.next_arrival += self.gap()
        elif self.cfg.mode == POISSON:
            end = min(t1, float(self.cfg.horizon))
            while self.next_arrival < end:  # nobody mining: arrivals are lost
                self.next_arrival += self.gap()

        # 4. decay
        ledger.tick_decay(rnd)

        # 5. fraud reports
        for accused, tx_a, tx_b in self.reports.pop(rnd, ()):
            proof = FraudProof(tx_a, tx_b, accused, self._reporter_for(accused), rnd)
            valid = verify_fraud_proof(proof, self.keys)
            self._emit(rnd, t1, Kind.FRAUD_REPORTED, accused,
                       {**proof.to_record(), "valid": valid})
            if not valid:
                continue
            out = ledger.slash(proof)
            self._emit(rnd, t1, Kind.SLASHED, accused, {
                "reporter": out.reporter,
                "created_rounds": [e.created_round for e in out.entries],
                "nominal": math.fsum(e.nominal for e in out.entries),
                "slashed_total": out.slashed_total,
                "reporter_credit": out.reporter_credit,
                "burned": out.burned,
            })

        # 6. maturity
        for pay in ledger.mature_rewards(rnd):
            self._emit(rnd, t1, Kind.REWARD_MATURED, pay.owner, {
                "nominal": pay.nominal,
                "created_round": pay.created_round,
                "decay_factor": pay.decay_factor,
                "amount": pay.amount,
                "discounted": disc * pay.amount,
            })

        # 7. participation
        for ident in ledger.update_participation(rnd, (r.id for r in mining)):
            rec = ledger.miners[ident]
            self._emit(rnd, t1, Kind.DROPOUT, ident,
                       {"dropouts": rec.dropouts, "gamma": p.gamma_for(rec.dropouts)})

        # 8. startup progress
        for rec in self.restarting.values():
            rec.remaining_work -= 1

    def _award(self, rec: MinerRecord, rnd: int, time: float) -> None:
        self._emit(rnd, time, Kind.BLOCK_WON, rec.id)
        entry = self.ledger.accrue_reward(rec.id, rnd)
        self._emit(rnd, time, Kind.REWARD_ACCRUED, rec.id, {
            "nominal": entry.nominal,
            "created_round": entry.created_round,
            "unlock_round": entry.unlock_round,
        })


def run(config: SimConfig) -> SimResult:
    """Simulate ``config``; a pure function of the configuration and its seed."""
    config.validate()
    engine = _Engine(config)
    n = config.n_rounds
    try:
        for rnd in range(1, n + 1):
            engine.step(rnd)
    except Exception as exc:
        raise SimulationError(f"simulation aborted: {exc}", engine.log) from exc
    return SimResult(config, engine.log, engine.ledger, engine.agents, n)
