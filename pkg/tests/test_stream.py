import hashlib
import random
import socket
import threading

import pytest
from harness import CASES, early_reclaim_rejected, handshake_matrix, run_scenario, streaming_market
from hypothesis import given, settings
from hypothesis import strategies as st

from trident.crypto import KeyPair, canon, verify
from trident.stream import wire
from trident.stream.chain import (
    Alert,
    Consumer,
    EquivocationProof,
    Producer,
    StreamClosed,
    Verdict,
    chain_hashes,
    encode_payload,
    make_challenge,
    respond_to_challenge,
    signed_message,
)
from trident.stream.demo import Fault, run_demo
from trident.stream.handshake import (
    HandshakeError,
    HandshakeRejected,
    SellerServer,
    SessionRegistry,
    handshake_buyer,
    open_endpoint,
    seal_endpoint,
)

KEYS = KeyPair.from_seed("stream-tests")
ALERT = Alert("2024-01-01T00:00:00", "10.0.0.1", "10.0.0.9", "portscan", "0.7")

alerts = st.lists(
    st.builds(Alert, st.text(max_size=5), st.text(max_size=5), st.text(max_size=5), st.text(max_size=5), st.text(max_size=5)),
    max_size=4,
)


# -- chain -------------------------------------------------------------------


def test_chain_hash_is_sha256_of_previous_and_payload():
    b0, b1 = [ALERT], [ALERT, ALERT]
    h0 = hashlib.sha256(b"" + encode_payload(b0)).digest()
    h1 = hashlib.sha256(h0 + encode_payload(b1)).digest()
    assert chain_hashes([b0, b1]) == [h0, h1]


def test_signature_covers_index_and_hash():
    batch = Producer(KEYS).produce_batch([ALERT])
    assert signed_message(0, batch.chain_hash) == canon(("trident-batch", 0, batch.chain_hash))
    assert verify(KEYS.verify_key, signed_message(0, batch.chain_hash), batch.signature)
    assert not verify(KEYS.verify_key, signed_message(1, batch.chain_hash), batch.signature)


@given(st.lists(alerts, min_size=1, max_size=8))
@settings(max_examples=50, deadline=None)
def test_honest_stream_always_verifies(batches):
    prod, cons = Producer(KEYS), Consumer(KEYS.verify_key)
    for b in batches:
        assert cons.verify_batch(prod.produce_batch(b)) is Verdict.OK
    assert cons.index == len(batches) - 1
    assert cons.chain_hash == chain_hashes(batches)[-1]


def test_consumer_verdicts():
    prod = Producer(KEYS)
    b0, b1 = prod.produce_batch([ALERT]), prod.produce_batch([ALERT])
    cons = Consumer(KEYS.verify_key)
    assert cons.verify_batch(b1) is Verdict.CHAIN_MISMATCH  # skipped index
    assert cons.verify_batch(b0) is Verdict.OK
    forged_sig = type(b1)(b1.index, b1.payload, b1.chain_hash, bytes(64))
    assert cons.verify_batch(forged_sig) is Verdict.BAD_SIGNATURE
    swapped = type(b1)(b1.index, (), b1.chain_hash, b1.signature)
    assert cons.verify_batch(swapped) is Verdict.CHAIN_MISMATCH
    assert cons.index == 0  # nothing advanced on failure
    assert cons.verify_batch(b1) is Verdict.OK


def test_other_producer_key_is_bad_signature():
    batch = Producer(KeyPair.from_seed("other")).produce_batch([ALERT])
    assert Consumer(KEYS.verify_key).verify_batch(batch) is Verdict.BAD_SIGNATURE


def test_guard_stops_production():
    live = [True]
    prod = Producer(KEYS, guard=lambda: live[0])
    prod.produce_batch([])
    live[0] = False
    with pytest.raises(StreamClosed):
        prod.produce_batch([])


def test_fork_yields_valid_proof_and_shared_prefix_does_not():
    prod = Producer(KEYS)
    a, b = Consumer(KEYS.verify_key), Consumer(KEYS.verify_key)
    shared = prod.produce_batch([ALERT])
    a.verify_batch(shared)
    b.verify_batch(shared)
    fork = prod.fork()
    a.verify_batch(prod.produce_batch([ALERT]))
    b.verify_batch(fork.produce_batch([]))
    assert respond_to_challenge(make_challenge(a, 0, "x", 1), b) is None
    proof = respond_to_challenge(make_challenge(a, 1, "x", 1), b)
    assert proof is not None and proof.valid(KEYS.verify_key)
    assert not EquivocationProof(proof.first, proof.first).valid(KEYS.verify_key)
    assert not proof.valid(KeyPair.from_seed("other").verify_key)
    with pytest.raises(KeyError):
        make_challenge(a, 5, "x", 1)


@pytest.mark.parametrize("seed", range(20))
def test_random_scenarios(seed):
    rng = random.Random(seed)
    assert run_scenario(rng, KEYS, fork=True).proof
    assert not run_scenario(rng, KEYS, fork=False).proof


def test_scenario_through_market_settles():
    m = streaming_market(KEYS)
    res = run_scenario(random.Random(0), KEYS, fork=True, market=m)
    assert (res.settled["challenger_share"], res.settled["prover_share"]) == (6_000, 3_000)
    assert m.state.conserved()


@pytest.mark.parametrize("seed", range(50))
def test_early_reclaim_rejected(seed):
    assert early_reclaim_rejected(random.Random(seed), KEYS)


# -- wire ----------------------------------------------------------------------


def test_frame_layout():
    frame = wire.encode("HELLO", subscription=3)
    body = b'{"kind":"HELLO","subscription":3}'
    assert frame == len(body).to_bytes(4, "big") + body
    with pytest.raises(wire.WireError):
        wire.encode("GOODBYE")
    with pytest.raises(wire.WireError):
        wire.decode(b'{"kind":"NOPE"}')
    with pytest.raises(wire.WireError):
        wire.unb64("***")


def test_typed_round_trips_over_a_socket_pair():
    prod = Producer(KEYS)
    a, b = Consumer(KEYS.verify_key), Consumer(KEYS.verify_key)
    fork = prod.fork()
    batch = prod.produce_batch([ALERT, Alert("t", "s", "d", "c", "a", raw="{}")])
    a.verify_batch(batch)
    b.verify_batch(fork.produce_batch([]))
    ch = make_challenge(a, 0, "bob", 4)
    proof = respond_to_challenge(ch, b)
    left, right = socket.socketpair()
    with left, right:
        wire.send_batch(left, batch)
        assert wire.batch_from(wire.recv(right, "BATCH")) == batch
        wire.send(left, "CHALLENGE", **wire.challenge_fields(ch))
        assert wire.challenge_from(wire.recv(right)) == ch
        wire.send(left, "PROOF", **wire.proof_fields(proof))
        assert wire.proof_from(wire.recv(right)) == proof
        wire.send(left, "ACCEPT", subscription=1)
        with pytest.raises(wire.WireError, match="expected BATCH"):
            wire.recv(right, "BATCH")
        left.sendall((wire.MAX_FRAME + 1).to_bytes(4, "big"))
        with pytest.raises(wire.WireError, match="exceeds"):
            wire.recv(right)
    with pytest.raises(wire.WireError, match="malformed"):
        wire.batch_from({"kind": "BATCH", "index": 0, "chain_hash": "", "signature": ""})


# -- endpoint sealing and handshake ----------------------------------------------


def test_sealed_endpoint_opens_only_for_the_buyer():
    seller, buyer = KeyPair.from_seed("s"), KeyPair.from_seed("b")
    sealed = seal_endpoint(seller, buyer.public, "127.0.0.1", 4321)
    assert open_endpoint(buyer, sealed, seller.verify_key) == ("127.0.0.1", 4321)
    with pytest.raises(HandshakeError, match="undecryptable"):
        open_endpoint(KeyPair.from_seed("c"), sealed, seller.verify_key)
    with pytest.raises(HandshakeError, match="not signed"):
        open_endpoint(buyer, sealed, buyer.verify_key)
    impostor = seal_endpoint(KeyPair.from_seed("m"), buyer.public, "127.0.0.1", 1)
    with pytest.raises(HandshakeError, match="not signed"):
        open_endpoint(buyer, impostor, seller.verify_key)


def test_handshake_matrix():
    out = handshake_matrix(seed=1)
    assert set(out) == set(CASES)
    assert out == {"correct-key": True, "wrong-key": False, "tampered-nonce": False, "replayed-nonce": False}


def test_registry_allows_one_live_session():
    r = SessionRegistry()
    assert r.acquire(1) and not r.acquire(1) and r.acquire(2)
    r.release(1)
    assert r.acquire(1) and r.live() == {1, 2}


def test_second_concurrent_session_is_rejected():
    seller, buyer = KeyPair.from_seed("s"), KeyPair.from_seed("b")
    hold, entered = threading.Event(), threading.Event()

    def on_session(session):
        entered.set()
        hold.wait(5)

    with SellerServer(lambda sub: buyer.verify_key if sub == 1 else None, on_session) as server:
        sealed = seal_endpoint(seller, buyer.public, *server.address)
        first = handshake_buyer(sealed, buyer, seller.verify_key, 1)
        assert entered.wait(5)
        with pytest.raises(HandshakeRejected, match="session already live"):
            handshake_buyer(sealed, buyer, seller.verify_key, 1)
        with pytest.raises(HandshakeRejected, match="unknown subscription"):
            handshake_buyer(sealed, buyer, seller.verify_key, 2)
        hold.set()
        first.close()
        server.join()
        again = handshake_buyer(sealed, buyer, seller.verify_key, 1)
        again.close()


def test_unreachable_endpoint_is_a_handshake_error():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    seller, buyer = KeyPair.from_seed("s"), KeyPair.from_seed("b")
    sealed = seal_endpoint(seller, buyer.public, "127.0.0.1", port)
    with pytest.raises(HandshakeError, match="cannot connect"):
        handshake_buyer(sealed, buyer, seller.verify_key, 1, timeout=1)


# -- end-to-end demo ---------------------------------------------------------------


def test_demo_without_fault():
    res = run_demo(batches=20, batch_size=2)
    assert not res.failed
    assert all(r.verified == 20 and r.verdict == "ok" for r in res.reports)
    assert "no proof produced" in "\n".join(res.lines)
    assert res.lines[-1] == "conservation: ok"


def test_demo_fork_is_slashed():
    res = run_demo(batches=20, batch_size=2, fault=Fault.parse("fork-at-10", batches=20))
    text = "\n".join(res.lines)
    assert "6000" in text and "3000" in text
    assert res.lines[-1] == "conservation: ok"


def test_demo_bad_signature_in_stream():
    res = run_demo(batches=20, batch_size=2, fault=Fault.parse("bad-signature", batches=20))
    assert res.reports[-1].verdict == "bad-signature" and res.reports[-1].at == 10
    assert res.reports[0].verified == 20


def test_demo_bad_signature_at_handshake():
    res = run_demo(batches=5, batch_size=1, fault=Fault.parse("bad-signature", stage="handshake", batches=5))
    assert "rejected" in res.reports[-1].line()
    assert any("connection rejected" in l for l in res.lines)


@pytest.mark.parametrize("text", ["fork-at-0", "fork-at-20", "fork", "bogus"])
def test_fault_parse_rejects(text):
    with pytest.raises(ValueError):
        Fault.parse(text, batches=20)


def test_split_roles_need_a_port():
    with pytest.raises(ValueError):
        run_demo(role="buyer")
