"""
Catching a seller who forks its stream
======================================

A seller signs each batch together with a running hash of everything sent so
far.  Buyers who compare notes can tell whether they were shown the same
history.  If they were not, two signatures for one index are all it takes to
slash the seller's deposit.
"""

from trident.crypto import KeyPair
from trident.market import Market, Rejected
from trident.stream import adjudicate, post_challenge
from trident.stream.chain import Alert, Consumer, Producer, make_challenge, respond_to_challenge
from trident.stream.demo import Fault, run_demo

seller = KeyPair.from_seed("seller")

m = Market()
for name in ("seller", "bob", "carol"):
    m.mint(name, 100_000)
    key = seller if name == "seller" else KeyPair.from_seed(name)
    m.register(name, 1_000, key.public.encode())
advert = m.advertise("seller", {"throughput": 5, "price": 1_000, "detector": "anomaly",
                                "network": "enterprise", "attacks": []})["advert"]
deposit = m.post_deposit("seller", advert, 9_000)["deposit"]

# The producer refuses to sign once its deposit is gone.
producer = Producer(seller, guard=m.stream_guard(deposit))
bob, carol = Consumer(seller.verify_key), Consumer(seller.verify_key)

for i in range(3):
    batch = producer.produce_batch([Alert(str(i), "10.0.0.1", "10.0.0.2", "scan", "low")])
    bob.verify_batch(batch)
    carol.verify_batch(batch)

# From here on Carol gets a different story.
fork = producer.fork()
print(bob.verify_batch(producer.produce_batch([Alert("3", "10.0.0.1", "10.0.0.2", "scan", "low")])))
print(carol.verify_batch(fork.produce_batch([Alert("3", "10.0.0.1", "10.0.0.2", "benign", "none")])))

# %%
# Bob posts the head held for index 3.  Carol's head differs, so Carol can
# answer with a proof.
challenge = make_challenge(bob, 3, "bob", deposit)
cid = post_challenge(m, challenge)
proof = respond_to_challenge(challenge, carol)
print(adjudicate(m, cid, proof, prover="carol"))

try:
    producer.produce_batch([])
except Exception as exc:
    print(type(exc).__name__, exc)

try:
    m.reclaim("seller", deposit)
except Rejected as exc:
    print("reclaim:", exc)

# %%
# Over sockets
# ------------
# The same story with a real handshake: the seller seals its address to each
# buyer, who proves who they are by signing a fresh nonce.
res = run_demo(batches=20, batch_size=5, fault=Fault.parse("fork-at-10", batches=20))
print("\n".join(res.lines))
