"""Security-alert sharing: a two-player sharing game, an alert marketplace
with proof-of-burn trust, and signed alert streams."""

from .attacker import ChainParams, make_rng
from .game import GameParams, MyopicPolicy, Regime, classify_regime, optimal_price
from .market import Market, Rejected, replay
from .sim import simulate, sweep, trace_stats
from .trust import Evidence, TrustConfig, score

__version__ = "0.1.0"

__all__ = [
    "ChainParams", "Evidence", "GameParams", "Market", "MyopicPolicy", "Regime",
    "Rejected", "TrustConfig", "classify_regime", "make_rng", "optimal_price",
    "replay", "score", "simulate", "sweep", "trace_stats",
]
