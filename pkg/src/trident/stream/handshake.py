"""Stream establishment between a seller and a subscribed buyer.

The seller seals a signed ``host:port`` to the buyer's encryption key and
publishes it with the accepted offer.  The buyer opens it, connects, and
proves possession of the registered key by signing a fresh 32-byte nonce.
A signature only ever verifies against the nonce of its own connection, so
replaying an old one fails.
"""

from __future__ import annotations

import json
import socket
import threading
from dataclasses import dataclass, field
from typing import Callable

from ..crypto import CryptoError, KeyPair, PublicKeys, canon, random_nonce, seal, verify
from . import wire
from .chain import SignedBatch

NONCE_SIZE = 32


class HandshakeError(Exception):
    """The buyer could not reach or authenticate the seller."""


class HandshakeRejected(HandshakeError):
    def __init__(self, reason: str):
        super().__init__(f"rejected: {reason}")
        self.reason = reason


def endpoint_message(host: str, port: int) -> bytes:
    return canon(("trident-endpoint", host, port))


def nonce_message(nonce: bytes) -> bytes:
    return canon(("trident-nonce", nonce))


def seal_endpoint(seller: KeyPair, buyer: PublicKeys, host: str, port: int, **kw) -> bytes:
    sig = seller.sign(endpoint_message(host, port))
    body = json.dumps({"host": host, "port": port, "signature": wire.b64(sig)}).encode()
    return seal(buyer.enc_key, body, **kw)


def open_endpoint(buyer: KeyPair, sealed: bytes, seller_key: bytes) -> tuple[str, int]:
    try:
        d = json.loads(buyer.open(sealed))
        host, port, sig = str(d["host"]), int(d["port"]), wire.unb64(d["signature"])
    except (CryptoError, ValueError, KeyError, TypeError, wire.WireError) as exc:
        raise HandshakeError("endpoint undecryptable") from exc
    if not verify(seller_key, endpoint_message(host, port), sig):
        raise HandshakeError("endpoint not signed by the seller")
    return host, port


class SessionRegistry:
    """At most one live session per subscription."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._live: set[int] = set()

    def acquire(self, subscription: int) -> bool:
        with self._lock:
            if subscription in self._live:
                return False
            self._live.add(subscription)
            return True

    def release(self, subscription: int) -> None:
        with self._lock:
            self._live.discard(subscription)

    def live(self) -> set[int]:
        with self._lock:
            return set(self._live)


@dataclass
class Session:
    sock: socket.socket
    subscription: int
    registry: SessionRegistry | None = None
    closed: bool = field(default=False, init=False)

    def send_batch(self, batch: SignedBatch) -> None:
        wire.send_batch(self.sock, batch)

    def recv_batch(self) -> SignedBatch | None:
        """Next batch, or ``None`` once the seller hangs up."""
        try:
            msg = wire.recv(self.sock, "BATCH")
        except wire.WireError as exc:
            if str(exc) == "connection closed":
                return None
            raise
        return wire.batch_from(msg)

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        try:
            self.sock.close()
        finally:
            if self.registry is not None:
                self.registry.release(self.subscription)


# maps a subscription id to the subscriber's verification key, or None if the
# subscription is not live on this seller's advert
KeyLookup = Callable[[int], "bytes | None"]


def market_lookup(market, advert: int, lock: threading.Lock | None = None) -> KeyLookup:
    lock = lock or threading.Lock()

    def lookup(subscription: int) -> bytes | None:
        with lock:
            sub = market.state.subscriptions.get(subscription)
            if sub is None or sub.advert != advert:
                return None
            party = market.state.parties.get(sub.subscriber)
        if party is None:
            return None
        try:
            return PublicKeys.decode(party.public_key).verify_key
        except CryptoError:
            return None

    return lookup


def handshake_seller(
    conn: socket.socket,
    lookup: KeyLookup,
    registry: SessionRegistry,
    nonce_source: Callable[[], bytes] = lambda: random_nonce(NONCE_SIZE),
) -> Session:
    """Authenticate one incoming connection.

    Sends ``REJECT`` and raises :class:`HandshakeRejected` on an unknown
    subscription, a bad nonce signature, or a second live session.
    """

    def reject(reason: str) -> HandshakeRejected:
        try:
            wire.send(conn, "REJECT", reason=reason)
        except OSError:
            pass
        return HandshakeRejected(reason)

    try:
        hello = wire.recv(conn, "HELLO")
        subscription = int(hello["subscription"])
        nonce = nonce_source()
        wire.send(conn, "NONCE", nonce=wire.b64(nonce))
        sig = wire.unb64(wire.recv(conn, "NONCE_SIG")["signature"])
    except (wire.WireError, KeyError, TypeError, ValueError, OSError) as exc:
        raise reject(f"protocol error: {exc}") from exc
    vk = lookup(subscription)
    if vk is None:
        raise reject("unknown subscription")
    if not verify(vk, nonce_message(nonce), sig):
        raise reject("nonce signature does not verify")
    if not registry.acquire(subscription):
        raise reject("session already live")
    wire.send(conn, "ACCEPT", subscription=subscription)
    return Session(conn, subscription, registry)


def handshake_buyer(
    sealed_endpoint: bytes,
    keys: KeyPair,
    seller_key: bytes,
    subscription: int,
    *,
    respond: Callable[[bytes], bytes] | None = None,
    timeout: float = 5.0,
) -> Session:
    """Connect to the sealed endpoint and answer the nonce challenge.

    ``respond`` maps the received nonce to the signature sent back; the
    default signs it with ``keys``.  Tests use it to inject faults.
    """
    host, port = open_endpoint(keys, sealed_endpoint, seller_key)
    respond = respond or (lambda nonce: keys.sign(nonce_message(nonce)))
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise HandshakeError(f"cannot connect to {host}:{port}: {exc}") from exc
    try:
        wire.send(sock, "HELLO", subscription=subscription)
        nonce = wire.unb64(wire.recv(sock, "NONCE")["nonce"])
        wire.send(sock, "NONCE_SIG", signature=wire.b64(respond(nonce)))
        reply = wire.recv(sock, ("ACCEPT", "REJECT"))
    except (wire.WireError, OSError, KeyError) as exc:
        sock.close()
        raise HandshakeError(f"transport failure: {exc}") from exc
    if reply["kind"] == "REJECT":
        sock.close()
        raise HandshakeRejected(reply.get("reason", ""))
    return Session(sock, subscription)


@dataclass
class Outcome:
    subscription: int | None
    accepted: bool
    reason: str = ""


class SellerServer:
    """Loopback listener running one handshake thread per connection.

    Accepted sessions are passed to ``on_session`` (in the connection's
    thread); the session is closed when it returns.
    """

    def __init__(
        self,
        lookup: KeyLookup,
        on_session: Callable[[Session], None],
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self.lookup = lookup
        self.on_session = on_session
        self.registry = SessionRegistry()
        self.outcomes: list[Outcome] = []
        self._lock = threading.Lock()
        self._sock = socket.create_server((host, port))
        self._threads: list[threading.Thread] = []
        self._accept = threading.Thread(target=self._serve, daemon=True)
        self._closing = False

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    def start(self) -> SellerServer:
        self._accept.start()
        return self

    def _serve(self) -> None:
        while not self._closing:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            t = threading.Thread(target=self._handle, args=(conn,), daemon=True)
            with self._lock:
                self._threads.append(t)
            t.start()

    def _handle(self, conn: socket.socket) -> None:
        conn.settimeout(5.0)
        try:
            session = handshake_seller(conn, self.lookup, self.registry)
        except HandshakeRejected as exc:
            with self._lock:
                self.outcomes.append(Outcome(None, False, exc.reason))
            conn.close()
            return
        with self._lock:
            self.outcomes.append(Outcome(session.subscription, True))
        try:
            self.on_session(session)
        finally:
            session.close()

    def join(self, timeout: float = 5.0) -> None:
        """Wait for the connection threads started so far."""
        with self._lock:
            threads = list(self._threads)
        for t in threads:
            t.join(timeout)

    def close(self) -> None:
        self._closing = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        self.join()

    def __enter__(self) -> SellerServer:
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()
