"""Timelocked reward ledger: accrual, decay, maturity, slashing, dropouts.

Decay is tracked per entry as the running sum of ``gamma_v(r) * delta_t``
over the rounds the entry stays locked. Nominal amounts never change; the
factor ``exp(-accrued_decay)`` is applied once, when the entry is settled by
maturity or by a slash.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .fraud import FraudProof, KeyRing, verify_fraud_proof
from .params import MinerRecord, PendingReward, ProtocolParams, Status


class LedgerError(RuntimeError):
    """A protocol violation requested of the ledger."""


@dataclass(frozen=True)
class Payout:
    round: int
    owner: str
    nominal: float
    created_round: int
    decay_factor: float
    amount: float


@dataclass(frozen=True)
class SlashOutcome:
    accused: str
    reporter: str | None
    slashed_total: float
    reporter_credit: float
    burned: float
    entries: tuple = ()

    @property
    def is_noop(self) -> bool:
        return not self.entries and self.slashed_total == 0


class RewardLedger:
    def __init__(self, params: ProtocolParams, keys: KeyRing | None = None):
        self.params = params
        self.keys = keys if keys is not None else KeyRing()
        self.miners: dict[str, MinerRecord] = {}
        self._by_unlock: dict[int, list[PendingReward]] = {}
        self._holders: dict[str, MinerRecord] = {}  # identities with pending entries
        # running totals for the conservation audit
        self.accrued_nominal = 0.0
        self.paid_out = 0.0
        self.decay_lost = 0.0
        self.slashed_value = 0.0
        self.reporter_credits = 0.0
        self.burned = 0.0

    def add_miner(self, rec: MinerRecord) -> MinerRecord:
        if rec.id in self.miners:
            raise LedgerError(f"duplicate identity {rec.id!r}")
        self.miners[rec.id] = rec
        return rec

    def gamma_of(self, miner_id: str) -> float:
        return self.params.gamma_for(self.miners[miner_id].dropouts)

    def accrue_reward(self, miner_id: str, round_: int) -> PendingReward:
        rec = self.miners[miner_id]
        if rec.status is not Status.ACTIVE:
            raise LedgerError(f"{miner_id} is {rec.status.value}; cannot accrue rewards")
        nominal = self.params.alpha_at(round_)
        entry = PendingReward(miner_id, nominal, round_, round_ + self.params.k)
        rec.pending.append(entry)
        self._holders[miner_id] = rec
        self._by_unlock.setdefault(entry.unlock_round, []).append(entry)
        self.accrued_nominal += nominal
        return entry

    def tick_decay(self, round_: int) -> None:
        """Add one round of decay to every entry still locked after ``round_``."""
        dt = self.params.delta_t
        for rec in self._holders.values():
            inc = self.params.gamma_for(rec.dropouts) * dt
            if inc == 0.0:
                continue
            for entry in rec.pending:
                if entry.unlock_round > round_:
                    entry.accrued_decay += inc

    def mature_rewards(self, round_: int) -> list[Payout]:
        payouts = []
        for entry in self._by_unlock.pop(round_, ()):
            if entry.slashed:
                continue
            rec = self.miners[entry.owner]
            head = rec.pending.popleft()
            if head is not entry:
                raise LedgerError(f"pending order broken for {rec.id}")
            if not rec.pending:
                self._holders.pop(rec.id, None)
            factor = math.exp(-entry.accrued_decay)
            amount = entry.nominal * factor
            rec.paid_balance += amount
            self.paid_out += amount
            self.decay_lost += entry.nominal - amount
            payouts.append(Payout(round_, rec.id, entry.nominal, entry.created_round,
                                  factor, amount))
        return payouts

    def slash(self, proof: FraudProof) -> SlashOutcome:
        """Forfeit every locked entry of the accused and blacklist it."""
        if not verify_fraud_proof(proof, self.keys):
            raise LedgerError("refusing to slash on an unverified fraud proof")
        accused = self.miners.get(proof.accused)
        if accused is None:
            raise LedgerError(f"unknown identity {proof.accused!r}")
        if accused.status is Status.BLACKLISTED:
            return SlashOutcome(accused.id, proof.reporter, 0.0, 0.0, 0.0)

        entries = tuple(accused.pending)
        values = []
        for entry in entries:
            entry.slashed = True
            value = entry.nominal * math.exp(-entry.accrued_decay)
            values.append(value)
            self.decay_lost += entry.nominal - value
        accused.pending.clear()
        self._holders.pop(accused.id, None)
        accused.status = Status.BLACKLISTED
        accused.power = 0.0

        total = math.fsum(values)
        reporter = self.miners.get(proof.reporter) if proof.reporter else None
        credit = self.params.reporter_share * total if reporter is not None else 0.0
        burned = total - credit
        if reporter is not None:
            reporter.paid_balance += credit
        self.slashed_value += total
        self.reporter_credits += credit
        self.burned += burned
        return SlashOutcome(accused.id, proof.reporter, total, credit, burned, entries)

    def update_participation(self, round_: int, active: Iterable[str]) -> list[str]:
        """Count a dropout for every holder of locked rewards missing from ``active``."""
        active = set(active)
        dropped = []
        for rec in self._holders.values():
            if rec.id not in active:
                rec.dropouts += 1
                dropped.append(rec.id)
        return sorted(dropped)

    def pending_nominal(self) -> float:
        return math.fsum(e.nominal for rec in self._holders.values() for e in rec.pending)

    def audit(self) -> float:
        """Conservation residual; zero up to float rounding.

        accrued = paid by maturity + lost to decay + still pending + slashed value,
        and slashed value = reporter credits + burned.
        """
        lhs = self.accrued_nominal
        rhs = math.fsum([self.paid_out, self.decay_lost, self.pending_nominal(),
                         self.reporter_credits, self.burned])
        return lhs - rhs
