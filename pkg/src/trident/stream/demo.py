"""Seller/buyer streaming demo over loopback, with fault injection.

Both roles rebuild the same marketplace from the seed, so a seller process
and a buyer process agree on subscriptions and keys without sharing state.
The seller produces one chain for everyone; with ``fork-at-k`` the last buyer
receives a forked continuation from batch ``k``.  Afterwards the first buyer
posts its latest head as a challenge, the other buyers check it against
their own chain, and any proof is settled in the market.
"""

from __future__ import annotations

import re
import threading
import time
from base64 import b64decode
from dataclasses import dataclass, field

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

from ..attacker import make_rng
from ..crypto import KeyPair, digest
from ..market import Market, Rejected
from ..scenario import party_keys as keys_for
from . import adjudicate, post_challenge
from .chain import (
    Alert,
    Consumer,
    Producer,
    SignedBatch,
    Verdict,
    make_challenge,
    respond_to_challenge,
)
from .handshake import (
    HandshakeError,
    SellerServer,
    Session,
    handshake_buyer,
    market_lookup,
    nonce_message,
    seal_endpoint,
)

SELLER = "seller"
ROLES = ("all", "seller", "buyer")
FEE, RATING_DEPOSIT, STREAM_DEPOSIT = 1_000, 1_000, 9_000  # milli-tokens

_FAULT = re.compile(r"^(none|bad-signature|fork-at-(\d+))$")


@dataclass(frozen=True)
class Fault:
    kind: str = "none"  # none | fork | bad-signature
    at: int = 0
    stage: str = "batch"  # for bad-signature: handshake | batch

    @classmethod
    def parse(cls, text: str, stage: str = "batch", batches: int = 100) -> Fault:
        m = _FAULT.match(text)
        if m is None:
            raise ValueError(f"unknown fault mode {text!r}")
        if m.group(2) is not None:
            k = int(m.group(2))
            if not 0 < k < batches:
                raise ValueError(f"fork point must lie in 1..{batches - 1}")
            return cls("fork", k)
        if m.group(1) == "bad-signature":
            if stage not in ("handshake", "batch"):
                raise ValueError(f"unknown stage {stage!r}")
            return cls("bad-signature", batches // 2, stage)
        return cls()


def buyer_name(i: int) -> str:
    return f"buyer{i + 1}"


@dataclass
class DemoMarket:
    market: Market
    advert: int
    deposit: int
    subscriptions: dict[str, int]  # buyer name -> subscription id


def build_market(seed: int, buyers: int, host: str, port: int) -> DemoMarket:
    """Deterministic setup up to live subscriptions for ``buyers`` buyers."""
    m = Market()
    names = [SELLER] + [buyer_name(i) for i in range(buyers)]
    for name in names:
        m.mint(name, 100_000)
        m.register(name, 1_000, keys_for(seed, name).public.encode())
    tags = {"throughput": 10, "price": FEE, "detector": "signature-IDS", "network": "industrial", "attacks": ["DDoS"]}
    advert = m.advertise(SELLER, tags)["advert"]
    deposit = m.post_deposit(SELLER, advert, STREAM_DEPOSIT)["deposit"]
    offers = {b: m.mk_offer(b, advert, FEE, RATING_DEPOSIT)["offer"] for b in names[1:]}
    seller = keys_for(seed, SELLER)
    subs = {}
    for b, off in offers.items():
        eph = X25519PrivateKey.from_private_bytes(digest(f"{seed}:endpoint:{b}".encode()))
        sealed = seal_endpoint(seller, keys_for(seed, b).public, host, port, ephemeral=eph)
        subs[b] = m.acc_offer(SELLER, off, sealed)["subscription"]
    return DemoMarket(m, advert, deposit, subs)


def _alerts(rng, n: int, forged: bool) -> list[Alert]:
    kinds = ("DDoS", "PortScan", "BruteForce", "Malware")
    out = []
    for _ in range(n):
        t, src, dst, k, score = rng.integers(0, 2**31), *rng.integers(1, 255, 2), rng.integers(0, 4), rng.random()
        label = "forged" if forged else kinds[k]
        out.append(Alert(str(t), f"10.0.0.{src}", f"10.0.1.{dst}", label, f"{score:.3f}"))
    return out


def produce_streams(dm: DemoMarket, seed: int, batches: int, batch_size: int, fault: Fault) -> dict[str, list[SignedBatch]]:
    """Batches each buyer will be sent, produced up front and deterministically."""
    keys = keys_for(seed, SELLER)
    rng = make_rng(seed, "stream-demo")
    honest = Producer(keys, guard=dm.market.stream_guard(dm.deposit))
    main: list[SignedBatch] = []
    forked: list[SignedBatch] = []
    fork = None
    for i in range(batches):
        if fault.kind == "fork" and i == fault.at:
            fork = honest.fork()
        main.append(honest.produce_batch(_alerts(rng, batch_size, False)))
        if fork is not None:
            forked.append(fork.produce_batch(_alerts(rng, batch_size, True)))
    buyers = list(dm.subscriptions)
    streams = {b: main for b in buyers}
    last = buyers[-1]
    if fault.kind == "fork" and len(buyers) > 1:
        streams[last] = main[: fault.at] + forked
    elif fault.kind == "bad-signature" and fault.stage == "batch":
        bad = main[fault.at]
        sig = bytes([bad.signature[0] ^ 1]) + bad.signature[1:]
        streams[last] = main[: fault.at] + [SignedBatch(bad.index, bad.payload, bad.chain_hash, sig)] + main[fault.at + 1 :]
    return streams


@dataclass
class BuyerReport:
    name: str
    verified: int = 0
    verdict: str = "ok"
    at: int | None = None
    error: str | None = None
    consumer: Consumer | None = field(default=None, repr=False)

    def line(self) -> str:
        if self.error is not None:
            return f"{self.name}: {self.error}"
        tail = "" if self.verdict == "ok" else f", {self.verdict} at batch {self.at}"
        return f"{self.name}: verified {self.verified} batches{tail}"


def run_buyer(dm: DemoMarket, seed: int, name: str, fault: Fault, timeout: float) -> BuyerReport:
    seller_vk = keys_for(seed, SELLER).verify_key
    keys = keys_for(seed, name)
    sub = dm.subscriptions[name]
    sealed = dm.market.state.subscriptions[sub].sealed_endpoint
    report = BuyerReport(name, consumer=Consumer(seller_vk))
    respond = None
    if fault.kind == "bad-signature" and fault.stage == "handshake" and name == list(dm.subscriptions)[-1]:
        impostor = KeyPair.from_seed(f"{seed}:impostor")

        def respond(nonce: bytes) -> bytes:
            return impostor.sign(nonce_message(nonce))

    try:
        session = handshake_buyer(b64decode(sealed), keys, seller_vk, sub, respond=respond, timeout=timeout)
    except HandshakeError as exc:
        report.error = f"handshake failed: {exc}"
        return report
    try:
        while (batch := session.recv_batch()) is not None:
            v = report.consumer.verify_batch(batch)
            if v is not Verdict.OK:
                report.verdict, report.at = v.value, batch.index
                break
            report.verified += 1
    except OSError as exc:
        report.error = f"connection lost after {report.verified} batches: {exc}"
    finally:
        session.close()
    return report


class SellerRole:
    """Serves every buyer's stream; :meth:`wait` returns once all have finished.

    The listener binds at construction so its port can go into the sealed
    endpoints; :meth:`serve` attaches the market and streams afterwards.
    """

    def __init__(self, host: str, port: int):
        self.dm: DemoMarket | None = None
        self._by_sub: dict[int, list[SignedBatch]] = {}
        self._lookup = None
        self.server = SellerServer(lambda sub: self._lookup(sub), self._on_session, host, port)

    def _on_session(self, session: Session) -> None:
        try:
            for batch in self._by_sub[session.subscription]:
                session.send_batch(batch)
        except OSError:
            pass  # the buyer hung up after a failed verification

    def serve(self, dm: DemoMarket, streams: dict[str, list[SignedBatch]]) -> SellerRole:
        self.dm = dm
        self._by_sub = {dm.subscriptions[b]: s for b, s in streams.items()}
        self._lookup = market_lookup(dm.market, dm.advert)
        self.server.start()
        return self

    @property
    def port(self) -> int:
        return self.server.address[1]

    def wait(self, connections: int, timeout: float) -> bool:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if len(self.server.outcomes) >= connections:
                self.server.join(max(0.0, deadline - time.monotonic()))
                return True
            time.sleep(0.01)
        return False

    def transcript(self) -> list[str]:
        out = []
        names = {s: b for b, s in self.dm.subscriptions.items()}
        for o in sorted(self.server.outcomes, key=lambda o: (o.subscription is None, o.subscription or 0, o.reason)):
            if o.accepted:
                out.append(f"seller: session for {names[o.subscription]} accepted")
            else:
                out.append(f"seller: connection rejected ({o.reason})")
        return out

    def close(self) -> None:
        self.server.close()


def settle(dm: DemoMarket, reports: list[BuyerReport]) -> list[str]:
    """Challenge, respond, adjudicate, then take down and reclaim if unslashed."""
    m, out = dm.market, []
    live = [r for r in reports if r.error is None and r.consumer.heads]
    if live:
        first = live[0]
        idx = max(first.consumer.heads)
        ch = make_challenge(first.consumer, idx, first.name, dm.deposit)
        cid = post_challenge(m, ch)
        out.append(f"{first.name}: challenge posted on batch {idx}")
        proved = False
        for r in live[1:]:
            proof = respond_to_challenge(ch, r.consumer)
            if proof is None:
                out.append(f"{r.name}: no conflicting head at batch {idx}")
                continue
            ev = adjudicate(m, cid, proof, r.name)
            out.append(f"{r.name}: equivocation proof at batch {idx}")
            out.append(
                f"adjudication: deposit {STREAM_DEPOSIT} split {ev['challenger_share']} to {ev['challenger']}, "
                f"{ev['prover_share']} to {ev['prover']}"
            )
            proved = True
            break
        if not proved:
            out.append("no proof produced")
    if m.deposit_active(dm.deposit):
        m.rm_advert(SELLER, dm.advert)
        try:
            m.reclaim(SELLER, dm.deposit)
        except Rejected as exc:
            out.append(f"seller: early reclaim rejected ({exc.reason})")
        m.advance(m.state.config["reclaim_delay"])
        ev = m.reclaim(SELLER, dm.deposit)
        out.append(f"seller: reclaimed {ev['amount']} after takedown delay")
    out.append(f"conservation: {'ok' if m.state.conserved() else 'VIOLATED'}")
    return out


@dataclass
class DemoResult:
    lines: list[str]
    reports: list[BuyerReport]
    failed: bool = False


def run_demo(
    *,
    role: str = "all",
    host: str = "127.0.0.1",
    port: int = 0,
    fault: Fault = Fault(),
    batches: int = 100,
    batch_size: int = 10,
    buyers: int = 2,
    seed: int = 0,
    timeout: float = 30.0,
) -> DemoResult:
    if role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}")
    if role != "all" and port == 0:
        raise ValueError("separate seller and buyer processes need an explicit port")
    if buyers < 1 or (fault.kind == "fork" and buyers < 2):
        raise ValueError("fork detection needs at least two buyers")
    lines: list[str] = [f"# seed={seed} fault={fault.kind} batches={batches} buyers={buyers}"]
    seller = None
    if role in ("all", "seller"):
        # the seller listens first so the sealed endpoints carry its real port
        seller = SellerRole(host, port)
        port = seller.port
        dm = build_market(seed, buyers, host, port)
        seller.serve(dm, produce_streams(dm, seed, batches, batch_size, fault))
    else:
        dm = build_market(seed, buyers, host, port)
    try:
        if role == "seller":
            ok = seller.wait(buyers, timeout)
            lines += seller.transcript()
            if not ok:
                lines.append("seller: timed out waiting for buyers")
            return DemoResult(lines, [], not ok)
        results: dict[str, BuyerReport] = {}
        threads = []
        for b in dm.subscriptions:
            t = threading.Thread(target=lambda b=b: results.__setitem__(b, run_buyer(dm, seed, b, fault, timeout)))
            t.start()
            threads.append(t)
        for t in threads:
            t.join()
        reports = [results[b] for b in dm.subscriptions]
        if seller is not None:
            seller.wait(buyers, timeout)
            lines += seller.transcript()
        lines += [r.line() for r in reports]
        connect_failed = any(r.error and "cannot connect" in r.error for r in reports)
        if not connect_failed:
            lines += settle(dm, reports)
        return DemoResult(lines, reports, connect_failed)
    finally:
        if seller is not None:
            seller.close()
