"""Cost algebra and myopic decisions of the two-player sharing game.

A round runs trade -> defend -> attack.  At the start of round ``n`` each
player may buy the other's attack bit for round ``n-1``; an attacked seller
whose counterpart buys receives the price and pays the disclosure cost
``s``.  Defending costs ``delta`` whatever happens, an undefended attack
costs ``alpha``.

Players compare expected instant costs only (lexicographic, short term).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .attacker import AttackState, ChainParams, p_prime

#: Slack used when a decision hinges on an inequality between costs.
#: Keeps a user-entered price of ``1.0`` at a computed threshold of
#: ``1.0000000000000002`` on the buying side.
TOL = 1e-9


def _le(a: float, b: float) -> bool:
    return a <= b + TOL * max(1.0, abs(b))


@dataclass(frozen=True)
class GameParams:
    p: float
    q: float
    alpha: float
    delta: float
    s: float = 0.0
    price0: float = 0.0
    price1: float = 0.0

    def __post_init__(self) -> None:
        ChainParams(self.p, self.q)  # validates p, q
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.s < 0:
            raise ValueError(f"disclosure cost s must be >= 0, got {self.s}")
        if self.price0 < 0 or self.price1 < 0:
            raise ValueError("selling prices must be >= 0")

    @property
    def chain(self) -> ChainParams:
        return ChainParams(self.p, self.q)

    def price(self, player: int) -> float:
        return self.price1 if player else self.price0

    def with_prices(self, price0: float, price1: float | None = None) -> GameParams:
        return replace(self, price0=price0, price1=price0 if price1 is None else price1)


class Regime(enum.Enum):
    ALWAYS_DEFEND = "AlwaysDefend"
    NEVER_DEFEND = "NeverDefend"
    CONDITIONAL = "Conditional"

    def __str__(self) -> str:
        return self.value


def classify_regime(params: GameParams) -> Regime:
    """Weak inequalities at both boundaries: ``delta <= p alpha`` always
    defends, ``q alpha <= delta`` never defends."""
    if params.delta <= params.p * params.alpha:
        return Regime.ALWAYS_DEFEND
    if params.q * params.alpha <= params.delta:
        return Regime.NEVER_DEFEND
    return Regime.CONDITIONAL


def _require_conditional(params: GameParams) -> None:
    regime = classify_regime(params)
    if regime is not Regime.CONDITIONAL:
        raise ValueError(
            f"needs p*alpha < delta < q*alpha (regime is {regime}: "
            f"p*alpha={params.p * params.alpha}, delta={params.delta}, "
            f"q*alpha={params.q * params.alpha})"
        )


# --- per-round cost functions --------------------------------------------


@dataclass(frozen=True)
class Disclosure:
    sell: float
    buy: float


def disclosure_costs(
    prev_attacks: AttackState, buys: Sequence[bool], params: GameParams
) -> tuple[Disclosure, Disclosure]:
    """Selling and buying costs for both players.

    Player ``i`` sells iff it was attacked last round and the other player
    buys; it then earns its price and pays the disclosure cost.  Undefined
    for round 1, which has no previous round.
    """
    sold = (prev_attacks.player0 and buys[1], prev_attacks.player1 and buys[0])
    sell = [params.s - params.price(i) if sold[i] else 0 for i in (0, 1)]
    buy = [params.price(1 - i) if sold[1 - i] else 0 for i in (0, 1)]
    return Disclosure(sell[0], buy[0]), Disclosure(sell[1], buy[1])


def defense_cost(defend: bool, attacked: bool, params: GameParams) -> float:
    if defend:
        return params.delta
    return params.alpha if attacked else 0


@dataclass(frozen=True)
class InstantCost:
    sell: float
    buy: float
    defense: float

    @property
    def total(self) -> float:
        return self.sell + self.buy + self.defense


def instant_cost(
    prev_attacks: AttackState | None,
    buys: Sequence[bool],
    defends: Sequence[bool],
    attacks: AttackState,
    params: GameParams,
) -> tuple[InstantCost, InstantCost]:
    """Per-player cost of one round, kept split into its three parts.

    ``prev_attacks=None`` marks round 1, where no trade can happen.
    """
    if prev_attacks is None:
        if any(buys):
            raise ValueError("no trade in the first round")
        disc = (Disclosure(0, 0), Disclosure(0, 0))
    else:
        disc = disclosure_costs(prev_attacks, buys, params)
    return tuple(  # type: ignore[return-value]
        InstantCost(disc[i].sell, disc[i].buy, defense_cost(defends[i], attacks[i], params))
        for i in (0, 1)
    )


# --- expected costs after the special pattern -----------------------------


class Context(enum.Enum):
    NO_ONE_ATTACKED = "no-one-attacked"
    SELF_ATTACKED = "self-attacked"
    SPECIAL_PATTERN = "special-pattern"


def cost_not_defend(context: Context | str, params: GameParams) -> float:
    context = Context(context)
    if context is Context.NO_ONE_ATTACKED:
        return params.p * params.alpha
    if context is Context.SELF_ATTACKED:
        return params.q * params.alpha
    return p_prime(params.chain) * params.alpha


def cost_of_buying(
    params: GameParams, price: float | None = None, *, check_regime: bool = True
) -> float:
    """Player 0's expected cost of buying right after its own pattern.

    With probability ``1-q`` the bit says "clear", the buyer skips defending
    and risks ``p alpha``; otherwise it pays the price and defends.
    ``price`` defaults to player 1's selling price.
    """
    if check_regime:
        _require_conditional(params)
    price = params.price1 if price is None else price
    p, q = params.p, params.q
    return (1 - q) * p * params.alpha + q * (price + params.delta)


def cost_of_not_buying(params: GameParams) -> float:
    _require_conditional(params)
    return min(params.delta, p_prime(params.chain) * params.alpha)


def purchase_threshold(params: GameParams) -> float:
    """Highest price at which buying after the pattern is no worse than not."""
    p, q, alpha, delta = params.p, params.q, params.alpha, params.delta
    return min(q * alpha - delta, (1 - q) / q * (delta - p * alpha))


@dataclass(frozen=True)
class Equivalence:
    lhs: bool
    rhs: bool

    @property
    def holds(self) -> bool:
        return self.lhs == self.rhs


@dataclass(frozen=True)
class BuyingConditions:
    beats_ignorant_undefended: Equivalence
    beats_ignorant_defended: Equivalence
    buying_preferred: Equivalence

    @property
    def all_hold(self) -> bool:
        return all(
            e.holds
            for e in (
                self.beats_ignorant_undefended,
                self.beats_ignorant_defended,
                self.buying_preferred,
            )
        )


def buying_conditions(params: GameParams, price: float | None = None) -> BuyingConditions:
    """Evaluate both sides of the three buying inequalities.

    1. ``C(b) <= p' alpha``  iff  ``price <= q alpha - delta``
    2. ``C(b) <= delta``     iff  ``price <= (1-q)/q (delta - p alpha)``
    3. ``C(b) <= C(not b)``  iff  ``price <= min of both``
    """
    _require_conditional(params)
    price = params.price1 if price is None else price
    p, q, alpha, delta = params.p, params.q, params.alpha, params.delta
    buy = cost_of_buying(params, price)
    t1 = q * alpha - delta
    t2 = (1 - q) / q * (delta - p * alpha)
    return BuyingConditions(
        Equivalence(_le(buy, p_prime(params.chain) * alpha), _le(price, t1)),
        Equivalence(_le(buy, delta), _le(price, t2)),
        Equivalence(_le(buy, cost_of_not_buying(params)), _le(price, min(t1, t2))),
    )


def optimal_price(params: GameParams) -> float:
    """Revenue-maximising selling price: the buyer's purchase threshold.

    Raises ``ValueError`` outside the conditional regime, or when the
    disclosure cost exceeds the threshold (selling would lose money).
    """
    _require_conditional(params)
    threshold = purchase_threshold(params)
    if params.s > threshold:
        p, q, alpha, delta = params.p, params.q, params.alpha, params.delta
        t1, t2 = q * alpha - delta, (1 - q) / q * (delta - p * alpha)
        bad = "s <= q*alpha - delta" if t1 <= t2 else "s <= (1-q)/q*(delta - p*alpha)"
        raise ValueError(f"disclosure cost s={params.s} violates {bad} (threshold {threshold})")
    return threshold


# --- myopic policy -------------------------------------------------------


@dataclass(frozen=True)
class Decision:
    """What a player does at the start of a round.

    When ``buy`` is set the defence depends on the purchased bit; otherwise
    ``defend_uninformed`` applies.
    """

    buy: bool
    defend_uninformed: bool
    defend_if_other_attacked: bool = False
    defend_if_other_clear: bool = False

    def defend(self, other_attacked: bool | None = None) -> bool:
        if not self.buy or other_attacked is None:
            return self.defend_uninformed
        return self.defend_if_other_attacked if other_attacked else self.defend_if_other_clear


_ALWAYS = Decision(False, True, True, True)
_NEVER = Decision(False, False, False, False)


class MyopicPolicy:
    """Incremental myopic player.

    Tracks the player's own outcomes and a filtered belief that the other
    player was attacked in the last round.  The belief drives the defence
    decision whenever the player's own last outcome was a miss; right after
    the pattern ``a, ¬a`` it equals ``q`` and the attack estimate is ``p'``.
    Purchases happen only right after the pattern (the dummy round 0 counts
    as attacked) and only when the price is within the purchase threshold.
    """

    def __init__(self, params: GameParams, player: int = 0):
        self.params = params
        self.player = player
        self.regime = classify_regime(params)
        self.other_price = params.price(1 - player)
        self.threshold = purchase_threshold(params)
        self.round = 1
        self._prev = True  # dummy round 0: "someone attacked"
        self._prev2 = True
        # P(other attacked last round | what this player knows); the dummy
        # round is (a, a).
        self._belief = 1.0

    def attack_estimate(self) -> float:
        """Probability of being attacked this round given the current belief."""
        p, q = self.params.p, self.params.q
        if self._prev:
            return q
        b = self._belief
        return b * q + (1 - b) * p

    def in_pattern(self) -> bool:
        return self.round >= 2 and self._prev2 and not self._prev

    def decide(self) -> Decision:
        if self.regime is Regime.ALWAYS_DEFEND:
            return _ALWAYS
        if self.regime is Regime.NEVER_DEFEND:
            return _NEVER
        pr = self.params
        defend = _le(pr.delta, self.attack_estimate() * pr.alpha)
        if self.in_pattern() and _le(self.other_price, self.threshold):
            return Decision(
                True,
                defend,
                _le(pr.delta, pr.q * pr.alpha),
                _le(pr.delta, pr.p * pr.alpha),
            )
        return Decision(False, defend)

    def learn_other(self, attacked: bool) -> None:
        """Record a purchased bit about the other player's last round."""
        self._belief = 1.0 if attacked else 0.0

    def observe(self, attacked: bool) -> None:
        """Close the round with the player's own outcome."""
        p, q = self.params.p, self.params.q
        if self._prev:
            self._belief = q
        else:
            b = self._belief
            like_q = q if attacked else 1 - q
            like_p = p if attacked else 1 - p
            num = b * like_q * q + (1 - b) * like_p * p
            den = b * like_q + (1 - b) * like_p
            self._belief = num / den if den > 0 else q
        self._prev2, self._prev = self._prev, attacked
        self.round += 1


Observation = tuple  # (own_attacked: bool, bought_bit: bool | None)


def policy_decide(
    history: Iterable[Observation], params: GameParams, player: int = 0
) -> Decision:
    """Decision for the next round given a player's own past.

    ``history`` holds, per finished round, ``(own_attacked, bought_bit)``
    where ``bought_bit`` is the purchased bit about the other player's
    previous round, or ``None`` if nothing was bought.
    """
    policy = MyopicPolicy(params, player)
    for own, bit in history:
        if bit is not None:
            policy.learn_other(bit)
        policy.observe(own)
    return policy.decide()
