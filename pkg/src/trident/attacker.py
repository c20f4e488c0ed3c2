"""Two-defender attacker model.

The attacker is a four-state Markov chain over the joint outcome of a round.
Each defender is attacked independently, with probability ``q`` when anyone
was attacked in the previous round and ``p`` otherwise.  The fictitious
round 0 counts as "someone attacked", so round 1 always uses ``q``.

State order everywhere in this module is ``(¬a,¬a), (a,¬a), (¬a,a), (a,a)``,
i.e. ``index = player0 + 2 * player1``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

#: Bit generator behind every ``np.random.Generator`` handed out here.
RNG_ALGORITHM = "PCG64"

TAIL_MASS = 1e-12


def subseed(name: str) -> int:
    """Stable 32-bit integer derived from a component name."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")


def make_rng(seed: int, component: str = "", *extra: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` and a named component.

    Components (and optional integer indices such as a trial number) are
    folded into the spawn key, so independent streams never overlap and the
    same ``(seed, component, *extra)`` always replays the same draws.
    """
    key = (subseed(component), *extra) if component else tuple(extra)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


class AttackState(NamedTuple):
    player0: bool
    player1: bool

    @property
    def index(self) -> int:
        return int(self.player0) + 2 * int(self.player1)

    @property
    def anyone(self) -> bool:
        return self.player0 or self.player1

    def __str__(self) -> str:
        return "(" + ",".join("a" if x else "¬a" for x in self) + ")"


STATES: tuple[AttackState, ...] = (
    AttackState(False, False),
    AttackState(True, False),
    AttackState(False, True),
    AttackState(True, True),
)


@dataclass(frozen=True)
class ChainParams:
    """Per-round attack probabilities.

    ``p`` applies after a quiet round, ``q`` after a round in which someone was
    attacked.  The model needs ``p < q``; ``p == q`` is accepted as the
    degenerate i.i.d. chain.  Operations that need strictness check it.
    """

    p: float
    q: float

    def __post_init__(self) -> None:
        for name in ("p", "q"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be a probability, got {v!r}")
        if self.p > self.q:
            raise ValueError(f"need p <= q, got p={self.p}, q={self.q}")

    def attack_prob(self, prev: AttackState | None) -> float:
        """Attack probability for either player given the previous round.

        ``None`` stands for the dummy start state and yields ``q``.
        """
        if prev is None or prev.anyone:
            return self.q
        return self.p


def transition_matrix(params: ChainParams) -> np.ndarray:
    """4x4 row-stochastic matrix in :data:`STATES` order."""
    T = np.empty((4, 4))
    for s in STATES:
        r = params.attack_prob(s)
        for t in STATES:
            T[s.index, t.index] = (r if t.player0 else 1 - r) * (r if t.player1 else 1 - r)
    return T


def stationary_distribution(params: ChainParams) -> np.ndarray:
    T = transition_matrix(params)
    A = np.vstack([T.T - np.eye(4), np.ones(4)])
    b = np.zeros(5)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


def sample_next(
    state: AttackState | None, params: ChainParams, rng: np.random.Generator
) -> AttackState:
    """Draw the next joint outcome; ``state=None`` is the dummy start."""
    r = params.attack_prob(state)
    u0, u1 = rng.random(2)
    return AttackState(bool(u0 < r), bool(u1 < r))


def sample_path(params: ChainParams, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Sample ``horizon`` rounds from the dummy start.

    Returns a ``(horizon, 2)`` bool array.  Consumes the generator exactly as
    ``horizon`` successive :func:`sample_next` calls would.
    """
    u = rng.random((horizon, 2)).tolist()
    p, q = params.p, params.q
    out = np.empty((horizon, 2), dtype=bool)
    r = q
    a0 = [False] * horizon
    a1 = [False] * horizon
    for n, (u0, u1) in enumerate(u):
        x0 = u0 < r
        x1 = u1 < r
        a0[n] = x0
        a1[n] = x1
        r = q if (x0 or x1) else p
    out[:, 0] = a0
    out[:, 1] = a1
    return out


def p_prime(params: ChainParams) -> float:
    """Attack probability two rounds after being attacked then spared.

    The other defender was attacked in the quiet round with probability ``q``,
    hence the convex combination ``(1-q) p + q q``.
    """
    p, q = params.p, params.q
    return (1 - q) * p + q * q


def _require_strict(params: ChainParams) -> None:
    if params.q >= 1.0:
        raise ValueError("q = 1: attack runs never end, expectations diverge")
    if params.p <= 0.0:
        raise ValueError("p = 0: truce runs never end, expectations diverge")
    if not params.p < params.q:
        raise ValueError(f"need p < q, got p={params.p}, q={params.q}")


def attack_run_pmf(q: float, n: int) -> float:
    """P(L_a = n) = q^n (1-q): a run from the start that survives n rounds."""
    return q**n * (1 - q)


def expected_attack_run(q: float) -> float:
    """Expected uninterrupted attack length from the start, by summation.

    The sum of ``n q^n (1-q)`` is carried until the remaining probability mass
    ``q^(n+1)`` falls under :data:`TAIL_MASS`.
    """
    if not 0.0 <= q < 1.0:
        raise ValueError(f"need 0 <= q < 1, got {q}")
    total = 0.0
    n = 0
    while q ** (n + 1) >= TAIL_MASS:
        n += 1
        total += n * attack_run_pmf(q, n)
    return total


def truce_survival(params: ChainParams, max_rounds: int | None = None) -> np.ndarray:
    """``P(L_¬a >= l)`` for ``l = 0, 1, ...`` starting from ``(¬a,¬a)``.

    Player 0 being attacked is absorbing; player 1's outcome is tracked since
    it moves player 0 between the ``p`` and ``q`` regimes.  The series stops
    once the surviving mass drops below :data:`TAIL_MASS` (or at
    ``max_rounds``).
    """
    p, q = params.p, params.q
    # surviving mass in (¬a,¬a) and (¬a,a)
    quiet, other_hit = 1.0, 0.0
    out = [1.0]
    limit = max_rounds if max_rounds is not None else 10**8
    while quiet + other_hit >= TAIL_MASS and len(out) <= limit:
        if p <= 0.0 and other_hit == 0.0:
            raise ValueError("p = 0: truce from (¬a,¬a) never ends")
        quiet, other_hit = (
            quiet * (1 - p) * (1 - p) + other_hit * (1 - q) * (1 - q),
            quiet * (1 - p) * p + other_hit * (1 - q) * q,
        )
        out.append(quiet + other_hit)
    return np.array(out)


def truce_pmf(params: ChainParams, max_rounds: int | None = None) -> np.ndarray:
    """``P(L_¬a = n)`` from the survival series."""
    surv = truce_survival(params, max_rounds)
    return surv[:-1] - surv[1:]


def exact_run_expectations(params: ChainParams) -> tuple[float, float]:
    """``(E(L_a), E(L_¬a))`` for player 0.

    ``E(L_a)`` sums the geometric law ``q^n (1-q)``, giving ``q / (1-q)``.
    ``E(L_¬a)`` sums the truce survival series on the joint chain; only an
    upper bound of it is available in closed form.
    """
    _require_strict(params)
    surv = truce_survival(params)
    return expected_attack_run(params.q), float(surv[1:].sum())


def lemma_truce_bound(params: ChainParams) -> float:
    """Upper bound ``q(1-p)/p^2 + 1`` on ``E(L_¬a)``."""
    p, q = params.p, params.q
    return q * (1 - p) / p**2 + 1


def corollary_gap_bound(params: ChainParams) -> float:
    """Upper bound ``2 + 1/(1-q) + q(1-p)/p^2`` on the mean pattern gap."""
    p, q = params.p, params.q
    return 2 + 1 / (1 - q) + q * (1 - p) / p**2


def expected_pattern_gap(params: ChainParams) -> float:
    """Mean rounds between consecutive ``a, ¬a`` patterns of player 0.

    First-step analysis: ``h(s)`` is the expected number of steps from joint
    state ``s`` until player 0 goes from attacked to spared.  The gap is
    ``h`` averaged over the states in which a pattern completes, weighted by
    how often the chain lands there in stationarity.
    """
    if params.q >= 1.0 or params.p >= 1.0:
        raise ValueError("attacks never stop; no pattern occurs")
    T = transition_matrix(params)
    completes = np.array([[s.player0 and not t.player0 for t in STATES] for s in STATES])
    cont = np.where(completes, 0.0, T)
    h = np.linalg.solve(np.eye(4) - cont, np.ones(4))
    pi = stationary_distribution(params)
    entry = (pi[:, None] * np.where(completes, T, 0.0)).sum(axis=0)
    return float(entry @ h / entry.sum())


def batch_means_se(values: Sequence[float], n_batches: int = 32) -> float:
    """Standard error of the mean of a serially correlated sequence."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        return math.nan
    k = min(n_batches, x.size)
    m = x.size // k
    means = x[: k * m].reshape(k, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(k))


def run_lengths(flags: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lengths of maximal runs of True and of False, final run dropped.

    The last run is cut off by the horizon, so it is censored and excluded.
    """
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return np.empty(0, int), np.empty(0, int)
    edges = np.flatnonzero(flags[1:] != flags[:-1]) + 1
    starts = np.concatenate([[0], edges])
    ends = np.concatenate([edges, [flags.size]])
    lengths = (ends - starts)[:-1]
    values = flags[starts][:-1]
    return lengths[values], lengths[~values]


def pattern_rounds(attacked: np.ndarray) -> np.ndarray:
    """Indices ``n+1`` where ``attacked[n]`` and not ``attacked[n+1]``."""
    a = np.asarray(attacked, dtype=bool)
    return np.flatnonzero(a[:-1] & ~a[1:]) + 1


@dataclass(frozen=True)
class RunStats:
    mean_attack_run: float
    mean_truce_run: float
    mean_pattern_gap: float | None
    pattern_gap_se: float | None
    pattern_count: int
    gap_count: int
    trial_count: int
    horizon: int
    seed: int

    @property
    def pattern_observed(self) -> bool:
        return self.mean_pattern_gap is not None


def pattern_statistics(params: ChainParams, horizon: int, trials: int, seed: int) -> RunStats:
    """Monte Carlo run and pattern statistics for player 0.

    Each trial is an independent trajectory of ``horizon`` rounds from the
    dummy start, drawn from its own stream ``make_rng(seed, "attacker", i)``.
    Attack and truce runs exclude the censored final run.  When fewer than two
    patterns are seen in every trial the gap is reported as ``None``.
    """
    if horizon < 1000:
        raise ValueError("horizon must be at least 1000 rounds")
    if trials < 1:
        raise ValueError("need at least one trial")
    attack_runs, truce_runs, gaps = [], [], []
    n_patterns = 0
    for i in range(trials):
        path = sample_path(params, horizon, make_rng(seed, "attacker", i))
        a_runs, t_runs = run_lengths(path[:, 0])
        attack_runs.append(a_runs)
        truce_runs.append(t_runs)
        pat = pattern_rounds(path[:, 0])
        n_patterns += pat.size
        gaps.append(np.diff(pat))
    a = np.concatenate(attack_runs)
    t = np.concatenate(truce_runs)
    g = np.concatenate(gaps)
    return RunStats(
        mean_attack_run=float(a.mean()) if a.size else math.nan,
        mean_truce_run=float(t.mean()) if t.size else math.nan,
        mean_pattern_gap=float(g.mean()) if g.size else None,
        pattern_gap_se=batch_means_se(g) if g.size > 1 else None,
        pattern_count=n_patterns,
        gap_count=int(g.size),
        trial_count=trials,
        horizon=horizon,
        seed=seed,
    )


def sample_attack_runs(q: float, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``L_a`` by stepping the chain from the dummy start.

    While player 0 keeps being attacked the next round always uses ``q``, so
    each trial consumes one uniform per round until the first miss.
    """
    params = ChainParams(0.0, q)
    out = np.empty(trials, dtype=np.int64)
    for i in range(trials):
        n = 0
        state = None
        while True:
            state = sample_next(state, params, rng)
            if not state.player0:
                break
            n += 1
        out[i] = n
    return out


def sample_truce_runs(params: ChainParams, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``L_¬a`` by stepping the chain from ``(¬a,¬a)``."""
    if params.p <= 0.0:
        raise ValueError("p = 0: truce never ends")
    out = np.empty(trials, dtype=np.int64)
    start = AttackState(False, False)
    for i in range(trials):
        n = 0
        state = start
        while True:
            state = sample_next(state, params, rng)
            if state.player0:
                break
            n += 1
        out[i] = n
    return out
