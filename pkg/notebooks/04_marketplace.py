"""
A marketplace session
=====================

Accounts are kept in thousandths of a token.  Every command is validated in
full before anything changes, and every accepted command lands in an
append-only log from which the whole state can be rebuilt.
"""

import io

from trident.crypto import KeyPair
from trident.market import Market, Rejected, read_log, replay
from trident.trust import TrustConfig

alice, bob = KeyPair.from_seed("alice"), KeyPair.from_seed("bob")

m = Market()
m.mint("alice", 100_000)
m.mint("bob", 100_000)
m.register("alice", 1_000, alice.public.encode())  # burned for the trust prior
m.register("bob", 1_000, bob.public.encode())

tags = {"throughput": 10, "price": 2_000, "detector": "signature-IDS", "network": "industrial", "attacks": ["DDoS"]}
advert = m.advertise("alice", tags)["advert"]

# Bob bids the fee plus a rating deposit.  Both sit in escrow until Alice
# accepts.  The deposit comes back to Bob after rating the stream.
offer = m.mk_offer("bob", advert, fee=2_000, deposit=1_000)["offer"]
sub = m.acc_offer("alice", offer, sealed_endpoint=b"sealed for bob")["subscription"]
print(m.rate("bob", sub, 1.0))

# %%
# Not everything is allowed.  A rejected command changes nothing, not even
# the log.
before = m.snapshot()
try:
    m.rm_advert("bob", advert)
except Rejected as exc:
    print("rejected:", exc)
assert m.state == before

# %%
# Bookkeeping
# -----------
st = m.state
print("balances", st.balances, "escrow", st.escrow, "sink", st.sink)
print("minted - burned =", st.minted - st.burned, "; held =", sum(st.balances.values()) + st.escrow + st.sink)
print("deposit fates", st.deposit_fate)

for party in ("alice", "bob"):
    s = m.trust_of(party, TrustConfig())
    print(f"{party}: E={s.E:.3f} (t={s.t:.2f}, c_e={s.c_e:.3f})")

# The log is JSON lines; replaying it gives back the same state.
buf = io.StringIO()
for entry in m.log:
    buf.write(entry.to_line() + "\n")
print(buf.getvalue().splitlines()[0])
assert replay(read_log(buf.getvalue().splitlines())).state == m.state
