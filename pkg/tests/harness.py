"""Randomized fork and honest scenarios for the signed alert chain."""

from __future__ import annotations

import random
import socket
from dataclasses import dataclass

from trident.crypto import KeyPair
from trident.market import Market, Rejected
from trident.stream import adjudicate, post_challenge
from trident.stream.chain import Alert, Consumer, Producer, make_challenge, respond_to_challenge
from trident.stream.handshake import (
    HandshakeError,
    SellerServer,
    handshake_buyer,
    nonce_message,
    seal_endpoint,
)

TAGS = {"throughput": 5, "price": 10, "detector": "anomaly", "network": "enterprise", "attacks": []}


def _alert(rng: random.Random, label: str) -> Alert:
    return Alert(str(rng.randrange(10**9)), "10.0.0.1", "10.0.0.2", label, f"{rng.random():.3f}")


@dataclass
class ScenarioResult:
    fork_at: int | None
    challenged: int
    proof: bool
    settled: dict | None


def run_scenario(rng: random.Random, keys: KeyPair, fork: bool, market: Market | None = None) -> ScenarioResult:
    """One producer, two consumers; with ``fork`` the second sees a forked chain.

    The first consumer challenges a random index it holds; the second answers.
    If ``market`` is given the challenge and any proof go through it.
    """
    n = rng.randint(2, 12)
    k = rng.randint(0, n - 1) if fork else None
    prod = Producer(keys)
    forked = None
    a, b = Consumer(keys.verify_key), Consumer(keys.verify_key)
    for i in range(n):
        if k is not None and i == k:
            forked = prod.fork()
        batch = prod.produce_batch([_alert(rng, "honest")])
        a.verify_batch(batch)
        b.verify_batch(forked.produce_batch([_alert(rng, "forked")]) if forked else batch)
    j = rng.randint(k, n - 1) if fork else rng.randint(0, n - 1)
    ch = make_challenge(a, j, "bob", 0)
    proof = respond_to_challenge(ch, b)
    settled = None
    if market is not None:
        dep = market_deposit(market)
        ch = make_challenge(a, j, "bob", dep)
        cid = post_challenge(market, ch)
        if proof is not None:
            settled = adjudicate(market, cid, proof, "carol")
    return ScenarioResult(k, j, proof is not None, settled)


def streaming_market(keys: KeyPair, deposit: int = 9_000, reclaim_delay: int = 1_000) -> Market:
    m = Market(reclaim_delay=reclaim_delay)
    for name in ("alice", "bob", "carol"):
        m.mint(name, 100_000)
        pk = keys.public.encode() if name == "alice" else KeyPair.from_seed(name).public.encode()
        m.register(name, 1_000, pk)
    adv = m.advertise("alice", TAGS)["advert"]
    m.post_deposit("alice", adv, deposit)
    return m


def market_deposit(m: Market) -> int:
    return max(m.state.deposits)


def early_reclaim_rejected(rng: random.Random, keys: KeyPair) -> bool:
    """Try to reclaim at a random time before takedown + delay; True if refused."""
    delay = rng.randint(2, 5_000)  # with 1 there is no early step left
    m = streaming_market(keys, reclaim_delay=delay)
    dep = market_deposit(m)
    if rng.random() < 0.3:
        try:
            m.reclaim("alice", dep)
            return False
        except Rejected:
            return True
    adv = m.state.deposits[dep].advert
    m.rm_advert("alice", adv)
    due = m.state.deposits[dep].takedown + delay
    gap = rng.randint(0, due - m.state.clock - 1)
    if gap:
        m.advance(gap - 1)  # advance takes one extra step for itself
    assert m.state.clock < due
    try:
        m.reclaim("alice", dep)
        return False
    except Rejected:
        return True


# -- handshake matrix ---------------------------------------------------------

CASES = ("correct-key", "wrong-key", "tampered-nonce", "replayed-nonce")


def handshake_matrix(seed: int = 0) -> dict[str, bool]:
    """Run every case over loopback; returns case -> accepted."""
    seller = KeyPair.from_seed(f"{seed}:seller")
    buyer = KeyPair.from_seed(f"{seed}:buyer")
    intruder = KeyPair.from_seed(f"{seed}:intruder")
    subscription = 7
    lookup = lambda sub: buyer.verify_key if sub == subscription else None  # noqa: E731
    server = SellerServer(lookup, lambda session: None)
    captured: list[bytes] = []

    def honest(nonce: bytes) -> bytes:
        sig = buyer.sign(nonce_message(nonce))
        captured.append(sig)
        return sig

    responders = {
        "correct-key": honest,
        "wrong-key": lambda nonce: intruder.sign(nonce_message(nonce)),
        "tampered-nonce": lambda nonce: buyer.sign(nonce_message(bytes([nonce[0] ^ 1]) + nonce[1:])),
        "replayed-nonce": lambda nonce: captured[0],
    }
    out = {}
    with server:
        host, port = server.address
        sealed = seal_endpoint(seller, buyer.public, host, port)
        for case in CASES:
            try:
                session = handshake_buyer(sealed, buyer, seller.verify_key, subscription, respond=responders[case])
            except HandshakeError:
                out[case] = False
                continue
            out[case] = True
            session.close()
            server.join()
    return out


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]
