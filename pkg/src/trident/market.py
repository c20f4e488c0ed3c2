"""Alert marketplace as a deterministic, replayable state machine.

Every accepted command is appended to a log; rejected commands leave the
state untouched and are not logged.  Replaying the log from an empty market
reproduces the state exactly.

All amounts are integer milli-tokens.  Tokens enter through ``mint`` (test
setup, system caller only) and leave through burning at registration.
Fees and deposits sit in escrow; forfeited rating deposits go to a sink.
Protocol time is a step counter advanced by every accepted command (and by
``advance`` for bulk steps).
"""

from __future__ import annotations

import base64
import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

from .crypto import CryptoError, PublicKeys
from .stream.chain import EquivocationProof, SignedHead
from .trust import Evidence, TrustConfig, TrustScore, score

SYSTEM = "@system"

DEFAULT_CONFIG = {
    "rate_timeout": 10_000,  # steps from subscription creation
    "reclaim_delay": 1_000,  # T1, steps from takedown
    "split": [2, 1],  # challenger : prover
}

MAKER_REFUND = "maker-refund"
SUBSCRIBER_REFUND = "subscriber-refund"
FORFEIT = "forfeit"

ACTIVE, SLASHED, RECLAIMED = "active", "slashed", "reclaimed"


class Rejected(Exception):
    def __init__(self, op: str, reason: str):
        super().__init__(f"{op}: {reason}")
        self.op = op
        self.reason = reason


class ReplayError(Exception):
    def __init__(self, position: int, message: str):
        super().__init__(f"log entry {position}: {message}")
        self.position = position


@dataclass
class Party:
    id: str
    public_key: str
    burned: int


@dataclass
class Advert:
    id: int
    publisher: str
    tags: dict
    offers: set = field(default_factory=set)
    subscriptions: set = field(default_factory=set)


@dataclass
class Offer:
    id: int
    advert: int
    maker: str
    fee: int
    deposit: int


@dataclass
class Subscription:
    id: int
    advert: int
    subscriber: str
    rated: bool
    fee: int
    sealed_endpoint: str  # base64, opaque to the market
    deposit: int
    offer: int
    created_at: int
    ratings: int = 0
    last_positive: bool | None = None


@dataclass
class StreamDeposit:
    id: int
    producer: str
    advert: int
    amount: int
    reclaim_delay: int
    posted_at: int
    takedown: int | None = None
    status: str = ACTIVE

    def reclaim_allowed(self, now: int) -> bool:
        return self.status == ACTIVE and self.takedown is not None and now >= self.takedown + self.reclaim_delay


@dataclass
class ChallengeRecord:
    id: int
    deposit: int
    challenger: str
    head: SignedHead


@dataclass
class MarketState:
    config: dict = field(default_factory=lambda: {**DEFAULT_CONFIG, "split": list(DEFAULT_CONFIG["split"])})
    balances: dict = field(default_factory=dict)
    parties: dict = field(default_factory=dict)
    adverts: dict = field(default_factory=dict)
    offers: dict = field(default_factory=dict)
    subscriptions: dict = field(default_factory=dict)
    ratings: dict = field(default_factory=dict)
    deposits: dict = field(default_factory=dict)
    challenges: dict = field(default_factory=dict)
    deposit_fate: dict = field(default_factory=dict)  # offer id -> fate
    escrow: int = 0
    sink: int = 0
    minted: int = 0
    burned: int = 0
    clock: int = 0
    next_id: int = 1

    def conserved(self) -> bool:
        return sum(self.balances.values()) + self.escrow + self.sink == self.minted - self.burned


@dataclass(frozen=True)
class LogEntry:
    seq: int
    caller: str
    op: str
    args: dict
    event: dict

    def to_line(self) -> str:
        dump = lambda v: json.dumps(v, sort_keys=True, separators=(",", ":"))  # noqa: E731
        return (
            f'{{"seq":{self.seq},"caller":{dump(self.caller)},"op":{dump(self.op)},'
            f'"args":{dump(self.args)},"event":{dump(self.event)}}}'
        )

    @classmethod
    def from_line(cls, line: str) -> LogEntry:
        d = json.loads(line)
        return cls(int(d["seq"]), d["caller"], d["op"], d["args"], d["event"])


_BYTES_ARGS = {"sealed_endpoint", "chain_hash", "signature"}


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode()


def _unb64(op: str, name: str, text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (ValueError, TypeError) as exc:
        raise Rejected(op, f"{name} is not valid base64") from exc


def _is_amount(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


class Market:
    """Single-writer marketplace.

    >>> m = Market()
    >>> m.mint("alice", 10_000)["balance"]
    10000
    """

    def __init__(self, **config: Any):
        self.state = MarketState()
        self.log: list[LogEntry] = []
        if config:
            self.apply(SYSTEM, "configure", config)

    # -- plumbing --------------------------------------------------------

    def apply(self, caller: str, op: str, args: dict | None = None, **kwargs: Any) -> dict:
        """Run one command; returns its event or raises :class:`Rejected`."""
        args = dict(args or {}, **kwargs)
        for k in _BYTES_ARGS & args.keys():
            if isinstance(args[k], (bytes, bytearray)):
                args[k] = _b64(bytes(args[k]))
        handler = _OPS.get(op)
        if handler is None:
            raise Rejected(op, "unknown operation")
        if op in _SYSTEM_OPS:
            if caller != SYSTEM:
                raise Rejected(op, "system operation")
        elif op != "register" and caller not in self.state.parties:
            raise Rejected(op, "caller not registered")
        try:
            event = handler(self, caller, **args)
        except TypeError as exc:
            raise Rejected(op, f"bad arguments: {exc}") from exc
        self.log.append(LogEntry(len(self.log) + 1, caller, op, args, event))
        self.state.clock += 1
        return event

    def _id(self) -> int:
        i = self.state.next_id
        self.state.next_id += 1
        return i

    def _debit(self, op: str, who: str, amount: int) -> None:
        if self.state.balances.get(who, 0) < amount:
            raise Rejected(op, "insufficient balance")

    def _credit(self, who: str, amount: int) -> None:
        self.state.balances[who] = self.state.balances.get(who, 0) + amount

    def _from_escrow(self, who: str, amount: int) -> None:
        self.state.escrow -= amount
        self._credit(who, amount)

    def balance(self, who: str) -> int:
        return self.state.balances.get(who, 0)

    def snapshot(self) -> MarketState:
        return copy.deepcopy(self.state)

    # -- system ------------------------------------------------------------

    def _op_configure(self, caller: str, **config: Any) -> dict:
        if self.log:
            raise Rejected("configure", "only allowed as the first command")
        unknown = config.keys() - DEFAULT_CONFIG.keys()
        if unknown:
            raise Rejected("configure", f"unknown settings {sorted(unknown)}")
        split = config.get("split", DEFAULT_CONFIG["split"])
        if len(split) != 2 or not all(_is_amount(x) and x > 0 for x in split) or split[0] <= split[1]:
            raise Rejected("configure", "split must be two positive ints, challenger share larger")
        for k in ("rate_timeout", "reclaim_delay"):
            if k in config and not (_is_amount(config[k]) and config[k] >= 0):
                raise Rejected("configure", f"{k} must be a non-negative int")
        self.state.config.update(config)
        self.state.config["split"] = list(split)
        return {"config": dict(self.state.config)}

    def _op_mint(self, caller: str, to: str, amount: int) -> dict:
        if not (_is_amount(amount) and amount > 0):
            raise Rejected("mint", "amount must be a positive int")
        if to == SYSTEM:
            raise Rejected("mint", "cannot mint to the system")
        self._credit(to, amount)
        self.state.minted += amount
        return {"to": to, "amount": amount, "balance": self.state.balances[to]}

    def _op_advance(self, caller: str, steps: int) -> dict:
        if not (_is_amount(steps) and steps >= 0):
            raise Rejected("advance", "steps must be a non-negative int")
        # the command itself counts one step
        self.state.clock += steps
        return {"clock": self.state.clock + 1}

    # -- marketplace ---------------------------------------------------------

    def _op_register(self, caller: str, payment: int, public_key: str) -> dict:
        st = self.state
        if caller == SYSTEM:
            raise Rejected("register", "system cannot register")
        if caller in st.parties:
            raise Rejected("register", "already registered")
        if not (_is_amount(payment) and payment > 0):
            raise Rejected("register", "payment must be a positive int")
        if not isinstance(public_key, str) or not public_key:
            raise Rejected("register", "public key required")
        self._debit("register", caller, payment)
        st.balances[caller] -= payment
        st.burned += payment
        st.parties[caller] = Party(caller, public_key, payment)
        st.ratings[caller] = Evidence()
        return {"party": caller, "burned": payment}

    def _op_advertise(self, caller: str, tags: dict) -> dict:
        _check_tags(tags)
        adv = Advert(self._id(), caller, dict(tags))
        self.state.adverts[adv.id] = adv
        return {"advert": adv.id}

    def _advert(self, op: str, advert: Any) -> Advert:
        adv = self.state.adverts.get(advert)
        if adv is None:
            raise Rejected(op, f"unknown advert {advert!r}")
        return adv

    def _op_rm_advert(self, caller: str, advert: int) -> dict:
        st = self.state
        adv = self._advert("rm_advert", advert)
        if caller != adv.publisher:
            raise Rejected("rm_advert", "caller is not the publisher")
        refunds = []
        for oid in sorted(adv.offers):
            off = st.offers.pop(oid)
            self._from_escrow(off.maker, off.fee + off.deposit)
            st.deposit_fate[oid] = MAKER_REFUND
            refunds.append({"offer": oid, "to": off.maker, "amount": off.fee + off.deposit})
        for sid in sorted(adv.subscriptions):
            sub = st.subscriptions.pop(sid)
            if not sub.rated:
                # the publisher ended the stream; the subscriber keeps the bond
                self._from_escrow(sub.subscriber, sub.deposit)
                st.deposit_fate[sub.offer] = SUBSCRIBER_REFUND
                refunds.append({"subscription": sid, "to": sub.subscriber, "amount": sub.deposit})
        takedowns = []
        for dep in st.deposits.values():
            if dep.advert == adv.id and dep.takedown is None:
                dep.takedown = st.clock
                takedowns.append(dep.id)
        del st.adverts[adv.id]
        return {"advert": adv.id, "refunds": refunds, "takedown": takedowns}

    def _op_mk_offer(self, caller: str, advert: int, fee: int, deposit: int) -> dict:
        adv = self._advert("mk_offer", advert)
        if not (_is_amount(fee) and fee >= 0):
            raise Rejected("mk_offer", "fee must be a non-negative int")
        if not (_is_amount(deposit) and deposit > 0):
            raise Rejected("mk_offer", "a positive deposit is required")
        self._debit("mk_offer", caller, fee + deposit)
        self.state.balances[caller] -= fee + deposit
        self.state.escrow += fee + deposit
        off = Offer(self._id(), adv.id, caller, fee, deposit)
        self.state.offers[off.id] = off
        adv.offers.add(off.id)
        return {"offer": off.id, "escrowed": fee + deposit}

    def _offer(self, op: str, offer: Any) -> Offer:
        off = self.state.offers.get(offer)
        if off is None:
            raise Rejected(op, f"unknown offer {offer!r}")
        return off

    def _op_del_offer(self, caller: str, offer: int) -> dict:
        st = self.state
        off = self._offer("del_offer", offer)
        adv = st.adverts[off.advert]
        if caller not in (off.maker, adv.publisher):
            raise Rejected("del_offer", "caller is neither offer maker nor publisher")
        del st.offers[off.id]
        adv.offers.discard(off.id)
        self._from_escrow(off.maker, off.fee + off.deposit)
        st.deposit_fate[off.id] = MAKER_REFUND
        return {"offer": off.id, "to": off.maker, "amount": off.fee + off.deposit}

    def _op_acc_offer(self, caller: str, offer: int, sealed_endpoint: str) -> dict:
        st = self.state
        off = self._offer("acc_offer", offer)
        adv = st.adverts[off.advert]
        if caller != adv.publisher:
            raise Rejected("acc_offer", "caller is not the publisher")
        if not isinstance(sealed_endpoint, str):
            raise Rejected("acc_offer", "sealed endpoint must be base64 text")
        _unb64("acc_offer", "sealed_endpoint", sealed_endpoint)
        # fee to the publisher; the deposit stays in escrow until rated
        del st.offers[off.id]
        adv.offers.discard(off.id)
        self._from_escrow(caller, off.fee)
        sub = Subscription(
            self._id(), adv.id, off.maker, False, off.fee, sealed_endpoint,
            off.deposit, off.id, st.clock,
        )
        st.subscriptions[sub.id] = sub
        adv.subscriptions.add(sub.id)
        return {
            "subscription": sub.id,
            "subscriber": sub.subscriber,
            "fee_paid": off.fee,
            "self_dealing": off.maker == caller,
        }

    def _subscription(self, op: str, subscription: Any) -> Subscription:
        sub = self.state.subscriptions.get(subscription)
        if sub is None:
            raise Rejected(op, f"unknown subscription {subscription!r}")
        return sub

    def _op_unsubscribe(self, caller: str, subscription: int) -> dict:
        st = self.state
        sub = self._subscription("unsubscribe", subscription)
        adv = st.adverts[sub.advert]
        if caller not in (sub.subscriber, adv.publisher):
            raise Rejected("unsubscribe", "caller is neither subscriber nor publisher")
        del st.subscriptions[sub.id]
        adv.subscriptions.discard(sub.id)
        forfeited = 0
        if not sub.rated:
            st.escrow -= sub.deposit
            st.sink += sub.deposit
            st.deposit_fate[sub.offer] = FORFEIT
            forfeited = sub.deposit
        return {"subscription": sub.id, "forfeited": forfeited}

    def _op_rate(self, caller: str, subscription: int, rating: float) -> dict:
        st = self.state
        sub = self._subscription("rate", subscription)
        if caller != sub.subscriber:
            raise Rejected("rate", "caller is not the subscriber")
        if not isinstance(rating, (int, float)) or isinstance(rating, bool) or not 0 <= rating <= 1:
            raise Rejected("rate", "rating must be in [0, 1]")
        if sub.ratings >= 2:
            raise Rejected("rate", "rating already finalised")
        if st.clock - sub.created_at >= st.config["rate_timeout"]:
            raise Rejected("rate", "rating timer expired")
        positive = rating >= 0.5
        publisher = st.adverts[sub.advert].publisher
        ev = st.ratings[publisher]
        if sub.last_positive is not None:
            ev = ev.remove(sub.last_positive)
        st.ratings[publisher] = ev.add(positive)
        refund = 0
        if not sub.rated:
            self._from_escrow(caller, sub.deposit)
            st.deposit_fate[sub.offer] = SUBSCRIBER_REFUND
            refund = sub.deposit
        sub.rated = True
        sub.ratings += 1
        sub.last_positive = positive
        return {"subscription": sub.id, "publisher": publisher, "positive": positive, "refund": refund}

    # -- stream deposits -------------------------------------------------

    def _deposit(self, op: str, deposit: Any) -> StreamDeposit:
        dep = self.state.deposits.get(deposit)
        if dep is None:
            raise Rejected(op, f"unknown deposit {deposit!r}")
        return dep

    def _producer_key(self, op: str, dep: StreamDeposit) -> bytes:
        try:
            return PublicKeys.decode(self.state.parties[dep.producer].public_key).verify_key
        except CryptoError as exc:
            raise Rejected(op, "producer has no usable verification key") from exc

    def _op_post_deposit(self, caller: str, advert: int, amount: int) -> dict:
        st = self.state
        adv = self._advert("post_deposit", advert)
        if caller != adv.publisher:
            raise Rejected("post_deposit", "caller is not the publisher")
        if not (_is_amount(amount) and amount > 0):
            raise Rejected("post_deposit", "amount must be a positive int")
        if any(d.advert == adv.id and d.status == ACTIVE for d in st.deposits.values()):
            raise Rejected("post_deposit", "advert already has an active deposit")
        self._debit("post_deposit", caller, amount)
        st.balances[caller] -= amount
        st.escrow += amount
        dep = StreamDeposit(self._id(), caller, adv.id, amount, st.config["reclaim_delay"], st.clock)
        st.deposits[dep.id] = dep
        return {"deposit": dep.id, "amount": amount}

    def _op_challenge(self, caller: str, deposit: int, index: int, chain_hash: str, signature: str) -> dict:
        dep = self._deposit("challenge", deposit)
        if dep.status != ACTIVE:
            raise Rejected("challenge", f"deposit is {dep.status}")
        if not _is_amount(index) or index < 0:
            raise Rejected("challenge", "index must be a non-negative int")
        head = SignedHead(
            index, _unb64("challenge", "chain_hash", chain_hash), _unb64("challenge", "signature", signature)
        )
        if not head.valid(self._producer_key("challenge", dep)):
            raise Rejected("challenge", "signature does not verify under the producer key")
        rec = ChallengeRecord(self._id(), dep.id, caller, head)
        self.state.challenges[rec.id] = rec
        return {"challenge": rec.id, "deposit": dep.id, "index": index}

    def _op_prove(self, caller: str, challenge: int, index: int, chain_hash: str, signature: str) -> dict:
        st = self.state
        rec = st.challenges.get(challenge)
        if rec is None:
            raise Rejected("prove", f"unknown challenge {challenge!r}")
        dep = st.deposits[rec.deposit]
        if dep.status != ACTIVE:
            raise Rejected("prove", f"deposit is {dep.status}")
        if not _is_amount(index):
            raise Rejected("prove", "index must be an int")
        other = SignedHead(index, _unb64("prove", "chain_hash", chain_hash), _unb64("prove", "signature", signature))
        if not EquivocationProof(rec.head, other).valid(self._producer_key("prove", dep)):
            raise Rejected("prove", "not a valid equivocation proof")
        big, small = st.config["split"]
        to_challenger = dep.amount * big // (big + small)
        to_prover = dep.amount - to_challenger
        self._from_escrow(rec.challenger, to_challenger)
        self._from_escrow(caller, to_prover)
        dep.status = SLASHED
        return {
            "deposit": dep.id,
            "challenger": rec.challenger,
            "challenger_share": to_challenger,
            "prover": caller,
            "prover_share": to_prover,
        }

    def _op_reclaim(self, caller: str, deposit: int) -> dict:
        dep = self._deposit("reclaim", deposit)
        if caller != dep.producer:
            raise Rejected("reclaim", "caller is not the producer")
        if dep.status != ACTIVE:
            raise Rejected("reclaim", f"deposit is {dep.status}")
        if dep.takedown is None:
            raise Rejected("reclaim", "advert not taken down")
        if not dep.reclaim_allowed(self.state.clock):
            raise Rejected("reclaim", f"reclaim not before step {dep.takedown + dep.reclaim_delay}")
        self._from_escrow(caller, dep.amount)
        dep.status = RECLAIMED
        return {"deposit": dep.id, "to": caller, "amount": dep.amount}

    # -- public helpers ----------------------------------------------------

    def deposit_active(self, deposit: int) -> bool:
        """True while a stream may produce: posted, not slashed, reclaimed or taken down."""
        dep = self.state.deposits.get(deposit)
        return dep is not None and dep.status == ACTIVE and dep.takedown is None

    def stream_guard(self, deposit: int) -> Callable[[], bool]:
        return lambda: self.deposit_active(deposit)

    def trust_of(self, party: str, cfg: TrustConfig) -> TrustScore:
        p = self.state.parties.get(party)
        if p is None:
            raise KeyError(f"unknown party {party!r}")
        return score(self.state.ratings[party], p.burned / 1000, cfg)

    def write_log(self, path: str | Path) -> None:
        Path(path).write_text("".join(e.to_line() + "\n" for e in self.log))

    # convenience wrappers
    def mint(self, to: str, amount: int) -> dict:
        return self.apply(SYSTEM, "mint", to=to, amount=amount)

    def advance(self, steps: int) -> dict:
        return self.apply(SYSTEM, "advance", steps=steps)

    def register(self, caller: str, payment: int, public_key: str) -> dict:
        return self.apply(caller, "register", payment=payment, public_key=public_key)

    def advertise(self, caller: str, tags: dict) -> dict:
        return self.apply(caller, "advertise", tags=tags)

    def rm_advert(self, caller: str, advert: int) -> dict:
        return self.apply(caller, "rm_advert", advert=advert)

    def mk_offer(self, caller: str, advert: int, fee: int, deposit: int) -> dict:
        return self.apply(caller, "mk_offer", advert=advert, fee=fee, deposit=deposit)

    def del_offer(self, caller: str, offer: int) -> dict:
        return self.apply(caller, "del_offer", offer=offer)

    def acc_offer(self, caller: str, offer: int, sealed_endpoint: bytes | str) -> dict:
        return self.apply(caller, "acc_offer", offer=offer, sealed_endpoint=sealed_endpoint)

    def unsubscribe(self, caller: str, subscription: int) -> dict:
        return self.apply(caller, "unsubscribe", subscription=subscription)

    def rate(self, caller: str, subscription: int, rating: float) -> dict:
        return self.apply(caller, "rate", subscription=subscription, rating=rating)

    def post_deposit(self, caller: str, advert: int, amount: int) -> dict:
        return self.apply(caller, "post_deposit", advert=advert, amount=amount)

    def challenge(self, caller: str, deposit: int, head: SignedHead) -> dict:
        return self.apply(
            caller, "challenge", deposit=deposit, index=head.index,
            chain_hash=head.chain_hash, signature=head.signature,
        )

    def prove(self, caller: str, challenge: int, head: SignedHead) -> dict:
        return self.apply(
            caller, "prove", challenge=challenge, index=head.index,
            chain_hash=head.chain_hash, signature=head.signature,
        )

    def reclaim(self, caller: str, deposit: int) -> dict:
        return self.apply(caller, "reclaim", deposit=deposit)


def _check_tags(tags: Any) -> None:
    op = "advertise"
    if not isinstance(tags, dict):
        raise Rejected(op, "tags must be a mapping")
    tp = tags.get("throughput")
    if not isinstance(tp, (int, float)) or isinstance(tp, bool) or not tp > 0:
        raise Rejected(op, "throughput must be > 0")
    price = tags.get("price")
    if not _is_amount(price) or price < 0:
        raise Rejected(op, "price must be a non-negative int")
    for k in ("detector", "network"):
        v = tags.get(k)
        if not isinstance(v, str) or not v:
            raise Rejected(op, f"{k} type must be a non-empty string")
    attacks = tags.get("attacks", [])
    if not isinstance(attacks, list) or not all(isinstance(a, str) for a in attacks):
        raise Rejected(op, "attacks must be a list of strings")


_OPS: dict[str, Callable[..., dict]] = {
    name[len("_op_"):]: fn for name, fn in vars(Market).items() if name.startswith("_op_")
}
_SYSTEM_OPS = {"configure", "mint", "advance"}


def replay(entries: Iterable[LogEntry]) -> Market:
    """Fold a command log over an empty market.

    Each entry must be accepted and must reproduce its logged event;
    otherwise :class:`ReplayError` names the offending position.
    """
    m = Market()
    for pos, e in enumerate(entries, 1):
        if e.seq != pos:
            raise ReplayError(pos, f"sequence number {e.seq}, expected {pos}")
        try:
            event = m.apply(e.caller, e.op, e.args)
        except Rejected as exc:
            raise ReplayError(pos, f"rejected on replay: {exc}") from exc
        if event != e.event:
            raise ReplayError(pos, "event differs from the logged one")
    return m


def read_log(lines: Iterable[str]) -> Iterator[LogEntry]:
    for pos, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            yield LogEntry.from_line(line)
        except (ValueError, KeyError, TypeError) as exc:
            raise ReplayError(pos, f"malformed record: {exc}") from exc


def replay_file(path: str | Path) -> Market:
    with open(path) as fh:
        return replay(read_log(fh))
