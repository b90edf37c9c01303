"""Transactions, double-spend detection and fraud proofs.

Signatures are simulated: a transaction is tagged with HMAC-SHA256 keyed by
the signer's secret seed. The :class:`KeyRing` plays the role of the
protocol's public key set; it is what lets any node check a tag without
being able to produce one for somebody else.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from typing import Any


class SigningError(ValueError):
    pass


def fingerprint(secret_seed: bytes) -> str:
    return hashlib.sha256(b"pk:" + secret_seed).hexdigest()


class KeyRing:
    """Registry of identities and the seeds bound to them."""

    def __init__(self):
        self._seeds: dict[str, bytes] = {}

    def register(self, identity: str, secret_seed: bytes) -> str:
        if identity in self._seeds and self._seeds[identity] != secret_seed:
            raise SigningError(f"identity {identity!r} already bound to another key")
        self._seeds[identity] = bytes(secret_seed)
        return fingerprint(secret_seed)

    def __contains__(self, identity: str) -> bool:
        return identity in self._seeds

    def owns(self, identity: str, secret_seed: bytes) -> bool:
        seed = self._seeds.get(identity)
        return seed is not None and hmac.compare_digest(seed, secret_seed)

    def check_tag(self, identity: str, payload: bytes, tag: str) -> bool:
        seed = self._seeds.get(identity)
        if seed is None or not isinstance(tag, str):
            return False
        return hmac.compare_digest(_tag(seed, payload), tag)


def _tag(seed: bytes, payload: bytes) -> str:
    return hmac.new(seed, payload, hashlib.sha256).hexdigest()


def _tx_id(signer: str, spent_output: str, amount: float, nonce: int) -> str:
    body = f"{signer}|{spent_output}|{amount!r}|{nonce}".encode()
    return hashlib.sha256(body).hexdigest()


def _payload(signer: str, spent_output: str, amount: float, tx_id: str) -> bytes:
    return f"{signer}|{spent_output}|{amount!r}|{tx_id}".encode()


@dataclass(frozen=True)
class Transaction:
    tx_id: str
    signer: str
    spent_output: str
    amount: float
    signature: str

    def to_record(self) -> dict[str, Any]:
        return {
            "tx_id": self.tx_id,
            "signer": self.signer,
            "spent_output": self.spent_output,
            "amount": self.amount,
            "signature": self.signature,
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "Transaction":
        return cls(rec["tx_id"], rec["signer"], rec["spent_output"],
                   rec["amount"], rec["signature"])


@dataclass(frozen=True)
class FraudProof:
    tx_a: Transaction
    tx_b: Transaction
    accused: str
    reporter: str | None
    round_submitted: int

    def to_record(self) -> dict[str, Any]:
        # canonical field order
        return {
            "accused": self.accused,
            "reporter": self.reporter,
            "round": self.round_submitted,
            "tx_a": self.tx_a.to_record(),
            "tx_b": self.tx_b.to_record(),
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "FraudProof":
        return cls(
            tx_a=Transaction.from_record(rec["tx_a"]),
            tx_b=Transaction.from_record(rec["tx_b"]),
            accused=rec["accused"],
            reporter=rec["reporter"],
            round_submitted=rec["round"],
        )


def sign_transaction(keys: KeyRing, secret_seed: bytes, signer: str,
                     spent_output: str, amount: float, nonce: int = 0) -> Transaction:
    """Sign a spend of ``spent_output``. Deterministic in all arguments.

    ``nonce`` distinguishes otherwise identical payloads, which is how a
    double spender produces two different transactions on one output.
    """
    if not keys.owns(signer, secret_seed):
        raise SigningError(f"seed does not belong to {signer!r}")
    if not amount > 0:
        raise SigningError("amount must be positive")
    tx_id = _tx_id(signer, spent_output, amount, nonce)
    sig = _tag(secret_seed, _payload(signer, spent_output, amount, tx_id))
    return Transaction(tx_id, signer, spent_output, amount, sig)


def verify_signature(keys: KeyRing, tx: Transaction) -> bool:
    try:
        payload = _payload(tx.signer, tx.spent_output, tx.amount, tx.tx_id)
    except Exception:
        return False
    return keys.check_tag(tx.signer, payload, tx.signature)


def detect_conflict(tx_a: Transaction, tx_b: Transaction) -> bool:
    """Same signer spending the same output twice under different ids."""
    return (
        tx_a.signer == tx_b.signer
        and tx_a.spent_output == tx_b.spent_output
        and tx_a.tx_id != tx_b.tx_id
    )


def verify_fraud_proof(proof: FraudProof, keys: KeyRing) -> bool:
    """O(1) check of a double-spend proof. Malformed input returns False."""
    try:
        return (
            isinstance(proof.tx_a, Transaction)
            and isinstance(proof.tx_b, Transaction)
            and verify_signature(keys, proof.tx_a)
            and verify_signature(keys, proof.tx_b)
            and detect_conflict(proof.tx_a, proof.tx_b)
            and proof.accused == proof.tx_a.signer
        )
    except Exception:
        return False
