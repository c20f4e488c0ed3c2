"""
Attacks on two organisations as a Markov chain
==============================================

An attacker targets two organisations each round.  Someone attacked last
round is attacked again with probability ``q``; someone left alone is hit
with probability ``p``.  Nothing below needs more than numpy.
"""

import numpy as np

from trident.attacker import (
    STATES,
    ChainParams,
    corollary_gap_bound,
    exact_run_expectations,
    expected_pattern_gap,
    lemma_truce_bound,
    make_rng,
    pattern_rounds,
    run_lengths,
    sample_path,
    stationary_distribution,
    transition_matrix,
)

chain = ChainParams(p=0.05, q=0.6)

# The joint state holds one attack flag per organisation, four states in all.
T = transition_matrix(chain)
print("states:", [str(s) for s in STATES])
print(np.round(T, 4))

# Where the chain spends its time in the long run.
pi = stationary_distribution(chain)
print("stationary:", np.round(pi, 4))

# %%
# Sampling a path
# ---------------
# Every seeded component gets its own PCG64 stream, so adding a new
# consumer of randomness never shifts the draws of an existing one.

rng = make_rng(7, "notebook")
path = sample_path(chain, 200_000, rng)
attacked = path[:, 0]

# Attack streaks and quiet stretches for organisation 0.
attack_runs, quiet_runs = run_lengths(attacked)
e_attack, e_quiet = exact_run_expectations(chain)
print(f"attack streak  mean {attack_runs.mean():.3f}   1 + q/(1-q) = {1 + e_attack:.3f}")

# Observed quiet stretches begin right after an attack on organisation 0, when
# the other side may still be under fire, so they run shorter than a truce
# that starts from a fully quiet round.
print(f"quiet stretch  mean {quiet_runs.mean():.3f}")
print(f"truce from a quiet round {e_quiet:.3f}, bound {lemma_truce_bound(chain):.1f}")

# %%
# The buying pattern
# ------------------
# An attack followed by a quiet round is the moment a buyer would pay for
# the other side's information.  The mean distance between such moments has
# an exact value from first-step analysis, well below the loose bound.

gaps = np.diff(pattern_rounds(np.concatenate([[True], attacked])))
print(f"pattern gap: sampled {gaps.mean():.3f}, exact {expected_pattern_gap(chain):.3f}, "
      f"bound {corollary_gap_bound(chain):.1f}")
