"""Signed rolling hash chain for alert streams, and equivocation evidence.

A producer signs ``(index, chain_hash)`` for every batch, where the chain
hash folds in all payloads so far.  Every subscriber sees the same chain, so
two valid signatures over the same index with different hashes prove the
producer forked the stream.
"""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from ..crypto import KeyPair, canon, digest, verify

DEFAULT_BATCH_SIZE = 10


@dataclass(frozen=True)
class Alert:
    """Generic alert record.  ``raw`` carries an external payload untouched."""

    time: str
    source: str
    target: str
    classification: str
    assessment: str
    raw: str | None = None

    def fields(self) -> tuple:
        return (self.time, self.source, self.target, self.classification, self.assessment, self.raw)

    @classmethod
    def from_fields(cls, fields: Sequence) -> Alert:
        return cls(*fields)


def encode_payload(alerts: Sequence[Alert]) -> bytes:
    return canon([a.fields() for a in alerts])


def next_chain_hash(prev: bytes, alerts: Sequence[Alert]) -> bytes:
    """``H(prev || payload)``; ``prev`` is empty for the first batch."""
    return digest(prev + encode_payload(alerts))


def chain_hashes(batches: Iterable[Sequence[Alert]]) -> list[bytes]:
    out, h = [], b""
    for alerts in batches:
        h = next_chain_hash(h, alerts)
        out.append(h)
    return out


def signed_message(index: int, chain_hash: bytes) -> bytes:
    return canon(("trident-batch", index, chain_hash))


@dataclass(frozen=True)
class SignedBatch:
    index: int
    payload: tuple[Alert, ...]
    chain_hash: bytes
    signature: bytes


@dataclass(frozen=True)
class SignedHead:
    """A producer-signed ``(index, chain_hash)`` pair without its payload."""

    index: int
    chain_hash: bytes
    signature: bytes

    def valid(self, verify_key: bytes) -> bool:
        return verify(verify_key, signed_message(self.index, self.chain_hash), self.signature)


class StreamClosed(Exception):
    """Raised when producing on a stream whose deposit is gone."""


class Producer:
    """Signs batches on a single chain shared by all subscribers.

    ``guard`` is called before each batch and must return True while the
    stream deposit is posted and not yet reclaimed or slashed.
    """

    def __init__(self, keys: KeyPair, guard: Callable[[], bool] | None = None):
        self.keys = keys
        self.guard = guard
        self.index = -1
        self.chain_hash = b""

    def produce_batch(self, alerts: Sequence[Alert]) -> SignedBatch:
        if self.guard is not None and not self.guard():
            raise StreamClosed("stream deposit is not active")
        alerts = tuple(alerts)
        h = next_chain_hash(self.chain_hash, alerts)
        i = self.index + 1
        batch = SignedBatch(i, alerts, h, self.keys.sign(signed_message(i, h)))
        self.index, self.chain_hash = i, h
        return batch

    def fork(self) -> Producer:
        """Copy of the chain state; producing on both equivocates."""
        other = copy.copy(self)
        return other


class Verdict(enum.Enum):
    OK = "ok"
    CHAIN_MISMATCH = "chain-mismatch"
    BAD_SIGNATURE = "bad-signature"


@dataclass
class Consumer:
    producer_key: bytes
    index: int = -1
    chain_hash: bytes = b""
    heads: dict[int, SignedHead] = field(default_factory=dict)

    def verify_batch(self, batch: SignedBatch) -> Verdict:
        """Check signature, contiguity and chain hash; advance only on OK."""
        if not verify(self.producer_key, signed_message(batch.index, batch.chain_hash), batch.signature):
            return Verdict.BAD_SIGNATURE
        if batch.index != self.index + 1:
            return Verdict.CHAIN_MISMATCH
        if next_chain_hash(self.chain_hash, batch.payload) != batch.chain_hash:
            return Verdict.CHAIN_MISMATCH
        self.index, self.chain_hash = batch.index, batch.chain_hash
        self.heads[batch.index] = SignedHead(batch.index, batch.chain_hash, batch.signature)
        return Verdict.OK


@dataclass(frozen=True)
class Challenge:
    challenger: str
    stream: int  # deposit id in the marketplace
    head: SignedHead

    @property
    def index(self) -> int:
        return self.head.index

    def valid(self, verify_key: bytes) -> bool:
        return self.head.valid(verify_key)


@dataclass(frozen=True)
class EquivocationProof:
    first: SignedHead
    second: SignedHead

    def valid(self, verify_key: bytes) -> bool:
        return (
            self.first.index == self.second.index
            and self.first.chain_hash != self.second.chain_hash
            and self.first.valid(verify_key)
            and self.second.valid(verify_key)
        )


def make_challenge(consumer: Consumer, index: int, challenger: str, stream: int) -> Challenge:
    head = consumer.heads.get(index)
    if head is None:
        raise KeyError(f"no verified batch at index {index}")
    return Challenge(challenger, stream, head)


def respond_to_challenge(challenge: Challenge, consumer: Consumer) -> EquivocationProof | None:
    """Proof of a fork if our verified head at the index disagrees."""
    mine = consumer.heads.get(challenge.index)
    if mine is None or mine.chain_hash == challenge.head.chain_hash:
        return None
    proof = EquivocationProof(challenge.head, mine)
    return proof if proof.valid(consumer.producer_key) else None
