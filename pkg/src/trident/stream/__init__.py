"""Alert streaming: handshake, signed hash chain, equivocation settlement."""

from __future__ import annotations

from typing import TYPE_CHECKING

from .chain import (
    DEFAULT_BATCH_SIZE,
    Alert,
    Challenge,
    Consumer,
    EquivocationProof,
    Producer,
    SignedBatch,
    SignedHead,
    StreamClosed,
    Verdict,
    chain_hashes,
    make_challenge,
    respond_to_challenge,
)
from .handshake import (
    HandshakeError,
    HandshakeRejected,
    SellerServer,
    Session,
    SessionRegistry,
    handshake_buyer,
    handshake_seller,
    market_lookup,
    open_endpoint,
    seal_endpoint,
)

if TYPE_CHECKING:
    from ..market import Market


def post_challenge(market: Market, challenge: Challenge) -> int:
    """Publish a challenge as a bounty; returns its id in the market."""
    return market.challenge(challenge.challenger, challenge.stream, challenge.head)["challenge"]


def adjudicate(market: Market, challenge_id: int, proof: EquivocationProof, prover: str) -> dict:
    """Settle a proof against a posted challenge.

    The proof must contain the challenged head; the deposit is split between
    challenger and prover and the stream is closed.  Invalid proofs raise
    :class:`~trident.market.Rejected` and leave the deposit intact.
    """
    from ..market import Rejected

    rec = market.state.challenges.get(challenge_id)
    if rec is None:
        raise Rejected("prove", f"unknown challenge {challenge_id!r}")
    if proof.first == rec.head:
        other = proof.second
    elif proof.second == rec.head:
        other = proof.first
    else:
        raise Rejected("prove", "proof does not contain the challenged head")
    return market.prove(prover, challenge_id, other)


def reclaim_deposit(market: Market, producer: str, deposit: int) -> dict:
    return market.reclaim(producer, deposit)


__all__ = [
    "DEFAULT_BATCH_SIZE", "Alert", "Challenge", "Consumer", "EquivocationProof",
    "HandshakeError", "HandshakeRejected", "Producer", "SellerServer", "Session",
    "SessionRegistry", "SignedBatch", "SignedHead", "StreamClosed", "Verdict",
    "adjudicate", "chain_hashes", "handshake_buyer", "handshake_seller",
    "make_challenge", "market_lookup", "open_endpoint", "post_challenge",
    "reclaim_deposit", "respond_to_challenge", "seal_endpoint",
]
