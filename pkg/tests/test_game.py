import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from trident.attacker import AttackState, p_prime
from trident.game import (
    TOL,
    Context,
    GameParams,
    MyopicPolicy,
    Regime,
    classify_regime,
    cost_not_defend,
    cost_of_buying,
    cost_of_not_buying,
    defense_cost,
    disclosure_costs,
    instant_cost,
    buying_conditions,
    optimal_price,
    policy_decide,
    purchase_threshold,
)

BASE = GameParams(0.05, 0.6, 10, 2, 0.2)


@st.composite
def conditional_params(draw):
    p = draw(st.floats(0.01, 0.6))
    q = draw(st.floats(p + 0.05, 0.98))
    alpha = draw(st.floats(0.5, 100))
    lo, hi = p * alpha, q * alpha
    delta = draw(st.floats(lo + 1e-3 * (hi - lo), hi - 1e-3 * (hi - lo)))
    return GameParams(p, q, alpha, delta)


def revenue_argmax(params, step=1e-3):
    """Seller's best price by brute force: revenue is the price if the buyer buys."""
    grid = np.arange(0, params.q * params.alpha + step, step)
    buys = np.array([cost_of_buying(params, x) <= cost_of_not_buying(params) + 1e-12 for x in grid])
    revenue = np.where(buys, grid, 0.0)
    return grid[int(np.argmax(revenue))]


def test_regimes():
    assert classify_regime(BASE) is Regime.CONDITIONAL
    assert classify_regime(GameParams(0.05, 0.6, 10, 0.4)) is Regime.ALWAYS_DEFEND
    assert classify_regime(GameParams(0.05, 0.6, 10, 7)) is Regime.NEVER_DEFEND
    # boundaries fall into the non-conditional regimes
    assert classify_regime(GameParams(0.05, 0.6, 10, 0.5)) is not Regime.CONDITIONAL
    assert classify_regime(GameParams(0.05, 0.6, 10, 6)) is not Regime.CONDITIONAL


def test_reference_optimal_price():
    assert optimal_price(BASE) == pytest.approx(1.0)
    assert purchase_threshold(BASE) == pytest.approx(1.0)


def test_optimal_price_rejects_loss_making_disclosure():
    with pytest.raises(ValueError, match="delta - p\\*alpha"):
        optimal_price(GameParams(0.05, 0.6, 10, 2, s=1.5))
    with pytest.raises(ValueError):
        optimal_price(GameParams(0.05, 0.6, 10, 0.4))


def test_cost_not_defend_contexts():
    assert cost_not_defend("no-one-attacked", BASE) == pytest.approx(0.5)
    assert cost_not_defend(Context.SELF_ATTACKED, BASE) == pytest.approx(6)
    assert cost_not_defend("special-pattern", BASE) == pytest.approx(p_prime(BASE.chain) * 10)


@given(conditional_params(), st.floats(0, 1))
@settings(max_examples=500)
def test_buying_conditions_equivalences_hold_both_ways(params, frac):
    price = frac * params.q * params.alpha
    lem = buying_conditions(params, price)
    assert lem.all_hold, lem


@given(conditional_params())
@settings(max_examples=300)
def test_buying_conditions_at_the_threshold(params):
    t = purchase_threshold(params)
    assume(t > 1e-6)
    assert buying_conditions(params, t).buying_preferred.lhs
    assert not buying_conditions(params, t * (1 + 1e-6) + 1e-6).buying_preferred.rhs


@given(conditional_params())
@settings(max_examples=100, deadline=None)
def test_optimal_price_matches_grid_search(params):
    assume(purchase_threshold(params) > 0)
    assert abs(optimal_price(params) - revenue_argmax(params)) <= 1e-3


def test_disclosure_transfers_conserve_money():
    params = BASE.with_prices(1.0, 0.7)
    for prev in (AttackState(True, True), AttackState(True, False), AttackState(False, True)):
        for buys in ((True, True), (True, False), (False, True)):
            d0, d1 = disclosure_costs(prev, buys, params)
            paid = d0.buy + d1.buy
            earned = -(d0.sell + d1.sell)
            sales = int(prev.player0 and buys[1]) + int(prev.player1 and buys[0])
            assert earned + sales * params.s == pytest.approx(paid)


def test_instant_cost_round_one_has_no_trade():
    with pytest.raises(ValueError):
        instant_cost(None, (True, False), (False, False), AttackState(False, False), BASE)
    c0, c1 = instant_cost(None, (False, False), (True, False), AttackState(True, True), BASE)
    assert c0.total == 2 and c1.total == 10


def test_defense_cost():
    assert defense_cost(True, True, BASE) == 2
    assert defense_cost(False, True, BASE) == 10
    assert defense_cost(False, False, BASE) == 0


def test_policy_regimes_fix_decisions():
    always = MyopicPolicy(GameParams(0.05, 0.6, 10, 0.4))
    never = MyopicPolicy(GameParams(0.05, 0.6, 10, 7))
    for _ in range(5):
        a, n = always.decide(), never.decide()
        assert not a.buy and a.defend_uninformed
        assert not n.buy and not n.defend_uninformed
        always.observe(False)
        never.observe(True)


def test_policy_buys_only_after_pattern():
    params = BASE.with_prices(1.0)
    pol = MyopicPolicy(params, 0)
    assert not pol.decide().buy  # round 1
    seq = [True, False, False, True, True, False]
    bought = []
    for own in seq:
        pol.observe(own)
        bought.append(pol.decide().buy)
    # decisions for rounds 2..7; a, ¬a completes at rounds 2 and 6
    assert bought == [False, True, False, False, False, True]


def test_policy_buys_right_after_dummy_pattern():
    pol = MyopicPolicy(BASE.with_prices(1.0), 0)
    pol.observe(False)  # round 1 clear after the dummy "attacked" round
    assert pol.in_pattern() and pol.decide().buy


def test_policy_price_above_threshold_never_buys():
    pol = MyopicPolicy(BASE.with_prices(1.0 + 1e-6), 0)
    pol.observe(True)
    pol.observe(False)
    assert pol.in_pattern() and not pol.decide().buy


def test_policy_tie_at_threshold_buys():
    pol = MyopicPolicy(BASE.with_prices(1.0 + TOL / 10), 0)
    pol.observe(True)
    pol.observe(False)
    assert pol.decide().buy


def test_belief_after_pattern_gives_p_prime():
    pol = MyopicPolicy(BASE, 0)
    pol.observe(True)
    pol.observe(False)
    assert pol.attack_estimate() == pytest.approx(p_prime(BASE.chain))


def test_informed_decision_defends_on_bad_news_only():
    pol = MyopicPolicy(BASE.with_prices(1.0), 0)
    pol.observe(True)
    pol.observe(False)
    d = pol.decide()
    assert d.defend(True) and not d.defend(False)
    # uninformed: p' alpha = 3.8 > delta
    assert d.defend(None)


def test_policy_decide_replays_history():
    params = BASE.with_prices(1.0)
    hist = [(True, None), (False, None), (False, True), (True, None)]
    pol = MyopicPolicy(params, 1)
    for own, bit in hist:
        if bit is not None:
            pol.learn_other(bit)
        pol.observe(own)
    assert policy_decide(hist, params, 1) == pol.decide()
