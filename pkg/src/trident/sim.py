"""Monte Carlo driver for the sharing game.

Token amounts are carried as integer milli-tokens inside a trace so that
cumulative costs reconcile exactly with the per-round flows.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import attacker
from .attacker import RNG_ALGORITHM, AttackState, make_rng, sample_path
from .game import GameParams, InstantCost, MyopicPolicy, Regime, classify_regime, instant_cost

MILLI = 1000

TRACE_COLUMNS = ("round", "buy0", "buy1", "def0", "def1", "atk0", "atk1", "cost0", "cost1")

ROUND_DTYPE = np.dtype(
    [
        ("round", "<i8"),
        ("buy0", "?"),
        ("buy1", "?"),
        ("def0", "?"),
        ("def1", "?"),
        ("atk0", "?"),
        ("atk1", "?"),
        ("cost0", "<i8"),
        ("cost1", "<i8"),
    ]
)


def to_milli(amount: float) -> int:
    return int(round(amount * MILLI))


def fmt(x: float) -> str:
    return f"{x:.6g}"


@dataclass(frozen=True)
class RoundRecord:
    round: int
    buys: tuple[bool, bool]
    defends: tuple[bool, bool]
    attacks: AttackState
    instant_costs: tuple[int, int]  # milli-tokens


@dataclass
class Trace:
    params: GameParams
    seed: int
    records: np.ndarray  # ROUND_DTYPE
    cumulative: tuple[int, int]  # milli-tokens
    rng_algorithm: str = RNG_ALGORITHM

    def __len__(self) -> int:
        return len(self.records)

    def round(self, n: int) -> RoundRecord:
        """Record of round ``n`` (1-based)."""
        r = self.records[n - 1]
        return RoundRecord(
            int(r["round"]),
            (bool(r["buy0"]), bool(r["buy1"])),
            (bool(r["def0"]), bool(r["def1"])),
            AttackState(bool(r["atk0"]), bool(r["atk1"])),
            (int(r["cost0"]), int(r["cost1"])),
        )

    def column(self, name: str, player: int | None = None) -> np.ndarray:
        return self.records[name if player is None else f"{name}{player}"]

    def header_lines(self) -> list[str]:
        lines = [f"# seed={self.seed} rng={self.rng_algorithm}"]
        lines += [f"# {k}={fmt(v)}" for k, v in asdict(self.params).items()]
        return lines

    def write_csv(self, out: TextIO) -> None:
        for line in self.header_lines():
            out.write(line + "\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        rec = self.records
        cost0 = (rec["cost0"] / MILLI).tolist()
        cost1 = (rec["cost1"] / MILLI).tolist()
        flags = [rec[c].astype(int).tolist() for c in TRACE_COLUMNS[1:7]]
        for i, n in enumerate(rec["round"].tolist()):
            w.writerow([n, *(f[i] for f in flags), fmt(cost0[i]), fmt(cost1[i])])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def simulate(params: GameParams, horizon: int, seed: int) -> Trace:
    """Play ``horizon`` rounds with both players on :class:`MyopicPolicy`.

    Attacks do not depend on the players' actions, so the whole attack path
    is drawn up front from ``make_rng(seed, "attacks")``.  Each round then
    runs trade, defence, and cost accounting in that order.  Round 1 has no
    trade.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    path = sample_path(params.chain, horizon, make_rng(seed, "attacks"))
    atk0 = path[:, 0].tolist()
    atk1 = path[:, 1].tolist()

    s = to_milli(params.s)
    price = (to_milli(params.price0), to_milli(params.price1))
    alpha, delta = to_milli(params.alpha), to_milli(params.delta)

    pol = (MyopicPolicy(params, 0), MyopicPolicy(params, 1))
    buy0 = [False] * horizon
    buy1 = [False] * horizon
    def0 = [False] * horizon
    def1 = [False] * horizon
    cost0 = [0] * horizon
    cost1 = [0] * horizon

    prev = None
    for n in range(horizon):
        d0 = pol[0].decide()
        d1 = pol[1].decide()
        b0 = d0.buy and prev is not None
        b1 = d1.buy and prev is not None
        c0 = c1 = 0
        if b0:
            pol[0].learn_other(prev[1])
            f0 = d0.defend(prev[1])
            if prev[1]:
                c0 += price[1]
                c1 += s - price[1]
        else:
            f0 = d0.defend_uninformed
        if b1:
            pol[1].learn_other(prev[0])
            f1 = d1.defend(prev[0])
            if prev[0]:
                c1 += price[0]
                c0 += s - price[0]
        else:
            f1 = d1.defend_uninformed
        a0, a1 = atk0[n], atk1[n]
        c0 += delta if f0 else (alpha if a0 else 0)
        c1 += delta if f1 else (alpha if a1 else 0)
        pol[0].observe(a0)
        pol[1].observe(a1)
        buy0[n], buy1[n], def0[n], def1[n] = b0, b1, f0, f1
        cost0[n], cost1[n] = c0, c1
        prev = (a0, a1)

    rec = np.empty(horizon, dtype=ROUND_DTYPE)
    rec["round"] = np.arange(1, horizon + 1)
    rec["buy0"], rec["buy1"] = buy0, buy1
    rec["def0"], rec["def1"] = def0, def1
    rec["atk0"], rec["atk1"] = atk0, atk1
    rec["cost0"], rec["cost1"] = cost0, cost1
    return Trace(params, seed, rec, (int(sum(cost0)), int(sum(cost1))))


def instant_cost_milli(trace: Trace, n: int) -> tuple[InstantCost, InstantCost]:
    """Recompute round ``n`` through :func:`game.instant_cost` in milli-tokens."""
    pr = trace.params
    scaled = GameParams(
        pr.p, pr.q, to_milli(pr.alpha), to_milli(pr.delta),
        to_milli(pr.s), to_milli(pr.price0), to_milli(pr.price1),
    )
    rec = trace.round(n)
    prev = trace.round(n - 1).attacks if n > 1 else None
    return instant_cost(prev, rec.buys, rec.defends, rec.attacks, scaled)


@dataclass(frozen=True)
class TraceStats:
    rounds: int
    purchases: tuple[int, int]
    mean_purchase_gap: tuple[float | None, float | None]
    purchase_gap_se: tuple[float | None, float | None]
    mean_cost: tuple[float, float]  # tokens per round
    defense_rate: tuple[float, float]
    attack_rate: tuple[float, float]
    mean_attack_run: float  # player 0, censored final run dropped
    attack_run_se: float


def _gaps(flags: np.ndarray) -> np.ndarray:
    # only gaps between two purchases; time before the first and after the
    # last purchase is censored
    return np.diff(np.flatnonzero(flags))


def trace_stats(trace: Trace) -> TraceStats:
    if len(trace) == 0:
        raise ValueError("empty trace")
    rec = trace.records
    n = len(rec)
    gaps = [_gaps(rec[f"buy{i}"]) for i in (0, 1)]
    runs, _ = attacker.run_lengths(rec["atk0"])
    return TraceStats(
        rounds=n,
        purchases=(int(rec["buy0"].sum()), int(rec["buy1"].sum())),
        mean_purchase_gap=tuple(float(g.mean()) if g.size else None for g in gaps),
        purchase_gap_se=tuple(attacker.batch_means_se(g) if g.size > 1 else None for g in gaps),
        mean_cost=tuple(float(rec[f"cost{i}"].sum()) / MILLI / n for i in (0, 1)),
        defense_rate=tuple(float(rec[f"def{i}"].mean()) for i in (0, 1)),
        attack_rate=tuple(float(rec[f"atk{i}"].mean()) for i in (0, 1)),
        mean_attack_run=float(runs.mean()) if runs.size else math.nan,
        attack_run_se=float(runs.std(ddof=1) / math.sqrt(runs.size)) if runs.size > 1 else math.nan,
    )


@dataclass(frozen=True)
class SweepRow:
    params: GameParams
    regime: Regime
    purchases_per_1000: float
    mean_purchase_gap: float | None
    mean_cost0: float
    mean_cost1: float


SWEEP_COLUMNS = (
    "p", "q", "alpha", "delta", "s", "price0", "price1",
    "regime", "purchases_per_1000", "mean_purchase_gap", "mean_cost0", "mean_cost1",
)


def sweep(grid: Sequence[GameParams], horizon: int, seed: int) -> list[SweepRow]:
    """One :func:`simulate` run per grid point, in grid order.

    Every point is simulated with the same ``seed`` (common random numbers):
    grid points see the same attack path, and duplicated points give
    identical rows.
    """
    if not grid:
        raise ValueError("empty grid")
    rows = []
    for params in grid:
        trace = simulate(params, horizon, seed)
        st = trace_stats(trace)
        gaps = np.concatenate([_gaps(trace.records["buy0"]), _gaps(trace.records["buy1"])])
        rows.append(
            SweepRow(
                params=params,
                regime=classify_regime(params),
                purchases_per_1000=sum(st.purchases) * 1000 / horizon,
                mean_purchase_gap=float(gaps.mean()) if gaps.size else None,
                mean_cost0=st.mean_cost[0],
                mean_cost1=st.mean_cost[1],
            )
        )
    return rows


def write_sweep_csv(rows: Iterable[SweepRow], out: TextIO, *, seed: int, horizon: int) -> None:
    out.write(f"# seed={seed} rng={RNG_ALGORITHM} horizon={horizon}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        pr = r.params
        w.writerow(
            [fmt(pr.p), fmt(pr.q), fmt(pr.alpha), fmt(pr.delta), fmt(pr.s),
             fmt(pr.price0), fmt(pr.price1), str(r.regime), fmt(r.purchases_per_1000),
             "" if r.mean_purchase_gap is None else fmt(r.mean_purchase_gap),
             fmt(r.mean_cost0), fmt(r.mean_cost1)]
        )
