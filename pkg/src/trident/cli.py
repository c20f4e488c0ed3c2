"""``trident`` command line.

Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error
(bad flags, unparsable grid or script).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence, TextIO

from . import attacker
from .game import GameParams, Regime, classify_regime
from .market import Market, replay
from .scenario import ScriptError, parse_grid, parse_script, resolve_price, run_script
from .sim import fmt, simulate, sweep, trace_stats, write_sweep_csv
from .stream.demo import Fault, run_demo
from .trust import Evidence, TrustConfig, evidence_threshold, score


class UsageError(Exception):
    """Bad input that argparse could not catch; exits with status 2."""


def _price(text: str) -> str | float:
    if text == "opt":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'opt' or a number, got {text!r}") from None


def _open_out(path: str | None) -> TextIO:
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


# -- simulate ------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        base = GameParams(args.p, args.q, args.alpha, args.delta, args.s)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    regime = classify_regime(base)
    price = resolve_price(base, args.price)
    params = base.with_prices(price, price)
    trace = simulate(params, args.horizon, args.seed)
    if args.out:
        with _open_out(args.out) as fh:
            trace.write_csv(fh)
    st = trace_stats(trace)
    # with the trace on stdout the summary goes to stderr
    log = sys.stderr if args.out == "-" else sys.stdout
    opt = fmt(price) if regime is Regime.CONDITIONAL and args.price == "opt" else "n/a"
    print(f"regime: {regime}", file=log)
    print(f"optimal price: {opt}", file=log)
    print(f"price used: {fmt(price)}", file=log)
    print(f"rounds: {st.rounds}  seed: {args.seed}  rng: {attacker.RNG_ALGORITHM}", file=log)
    for i in (0, 1):
        gap, se = st.mean_purchase_gap[i], st.purchase_gap_se[i]
        gap_s = "n/a" if gap is None else fmt(gap) + ("" if se is None else f" +/- {fmt(se)}")
        print(f"player {i}: purchases {st.purchases[i]}  mean gap {gap_s}  mean cost {fmt(st.mean_cost[i])}", file=log)
    if regime is Regime.CONDITIONAL and 0 < base.p < base.q < 1:
        print(f"gap bound: {fmt(attacker.corollary_gap_bound(base.chain))}", file=log)
        print(f"exact expected gap: {fmt(attacker.expected_pattern_gap(base.chain))}", file=log)
    return 0


# -- sweep ---------------------------------------------------------------------


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        grid = parse_grid(Path(args.grid).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read grid: {exc}") from exc
    except ScriptError as exc:
        raise UsageError(f"{args.grid}: {exc}") from exc
    if not grid:
        raise UsageError(f"{args.grid}: empty grid")
    rows = sweep(grid, args.horizon, args.seed)
    with _open_out(args.out) as fh:
        write_sweep_csv(rows, fh, seed=args.seed, horizon=args.horizon)
    return 0


# -- market --------------------------------------------------------------------


def _fmt_tokens(milli: int) -> str:
    return f"{milli / 1000:.3f}"


def cmd_market(args: argparse.Namespace) -> int:
    try:
        script = parse_script(Path(args.script).read_text(), seed=args.seed)
    except OSError as exc:
        raise UsageError(f"cannot read script: {exc}") from exc
    except ScriptError as exc:
        raise UsageError(f"{args.script}: {exc}") from exc
    run = run_script(script)
    m = run.market
    print(f"# seed={script.seed} steps={len(script.steps)}")
    for r in run.results:
        head = f"line {r.step.line}: {r.step.caller} {r.step.op}"
        if r.ok:
            print(f"{head} -> {json.dumps(r.event, sort_keys=True)}")
        else:
            print(f"{head} REJECTED {r.rejection}")
    st = m.state
    print("balances:", ", ".join(f"{k}={_fmt_tokens(v)}" for k, v in sorted(st.balances.items())) or "-")
    print(
        f"escrow={_fmt_tokens(st.escrow)} sink={_fmt_tokens(st.sink)} "
        f"minted={_fmt_tokens(st.minted)} burned={_fmt_tokens(st.burned)}"
    )
    fates = ", ".join(f"offer {k}: {v}" for k, v in sorted(st.deposit_fate.items()))
    print(f"deposit fates: {fates or '-'}")
    conserved = st.conserved()
    print(f"conservation: {'ok' if conserved else 'VIOLATED'}")
    replay_ok = replay(m.log).state == st
    print(f"replay: {'ok' if replay_ok else 'MISMATCH'}")
    cfg = TrustConfig(N=args.N, burn_baseline=args.baseline)
    print(f"trust (N={'auto' if args.N is None else args.N}, baseline={fmt(args.baseline)}):")
    print(f"  {'party':<12} {'pos':>4} {'neg':>4} {'burned':>9} {'t':>7} {'c_e':>7} {'f':>7} {'E':>7}")
    for pid, party in sorted(st.parties.items()):
        ev, ts = st.ratings[pid], m.trust_of(pid, cfg)
        print(
            f"  {pid:<12} {ev.positive:>4} {ev.negative:>4} {_fmt_tokens(party.burned):>9} "
            f"{ts.t:>7.4f} {ts.c_e:>7.4f} {ts.f:>7.4f} {ts.E:>7.4f}"
        )
    if args.log:
        m.write_log(args.log)
    failed = run.failures()
    for r in failed:
        got = "accepted" if r.ok else f"rejected ({r.rejection})"
        print(f"step at line {r.step.line} expected {r.step.expect}, got {got}", file=sys.stderr)
    return 1 if failed or not conserved or not replay_ok else 0


# -- trust ---------------------------------------------------------------------


def cmd_trust(args: argparse.Namespace) -> int:
    try:
        cfg = TrustConfig(N=args.N, w=args.w, z=args.z, c=args.c, burn_baseline=args.baseline)
        ev = Evidence(args.positive, args.negative)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ts = score(ev, args.burned, cfg)
    n_used = cfg.threshold(ts.t)
    print(f"evidence: positive={ev.positive} negative={ev.negative}")
    print(f"N: {n_used}{'' if args.N else ' (from confidence interval)'}")
    print(f"t: {ts.t:.6f}")
    print(f"c_e: {ts.c_e:.6f}")
    print(f"f: {ts.f:.6f}")
    print(f"E: {ts.E:.6f}")
    if args.N is None:
        print("N at t=0, 0.5, 1: " + ", ".join(str(evidence_threshold(args.z, args.c, t)) for t in (0, 0.5, 1)))
    return 0


# -- stream demo ---------------------------------------------------------------


def _endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad port in {text!r}") from None


def cmd_stream_demo(args: argparse.Namespace) -> int:
    try:
        fault = Fault.parse(args.fault, args.stage, args.batches)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    host, port = args.endpoint
    try:
        res = run_demo(
            role=args.role, host=host, port=port, fault=fault, batches=args.batches,
            batch_size=args.batch_size, buyers=args.buyers, seed=args.seed, timeout=args.timeout,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    except OSError as exc:
        print(f"{args.role}: {exc}", file=sys.stderr)
        return 1
    print("\n".join(res.lines))
    return 1 if res.failed else 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trident", description="Security-alert sharing: game, marketplace, streams.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="run the two-player sharing game")
    for name in ("p", "q", "alpha", "delta"):
        sp.add_argument(f"--{name}", type=float, required=True)
    sp.add_argument("--s", type=float, default=0.0, help="disclosure cost per sale (default 0)")
    sp.add_argument("--price", type=_price, default="opt", help="'opt' or a number (default opt)")
    sp.add_argument("--horizon", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="trace CSV path, '-' for stdout")
    sp.set_defaults(func=cmd_simulate)

    sw = sub.add_parser("sweep", help="simulate every point of a grid file")
    sw.add_argument("--grid", required=True)
    sw.add_argument("--horizon", type=int, default=100_000)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--out", help="CSV path (default stdout)")
    sw.set_defaults(func=cmd_sweep)

    mk = sub.add_parser("market", help="run a marketplace scenario script")
    mk.add_argument("script")
    mk.add_argument("--seed", type=int, default=0, help="key seed unless the script sets one")
    mk.add_argument("--N", type=int, default=None, help="fixed evidence threshold (default: from the CI)")
    mk.add_argument("--baseline", type=float, default=1.0, help="burn baseline in tokens")
    mk.add_argument("--log", help="write the accepted-command log (JSON lines)")
    mk.set_defaults(func=cmd_market)

    tr = sub.add_parser("trust", help="score a party from its evidence and burn")
    tr.add_argument("--positive", type=int, default=0)
    tr.add_argument("--negative", type=int, default=0)
    tr.add_argument("--burned", type=float, default=1.0, help="tokens burned at registration")
    tr.add_argument("--N", type=int, default=None)
    tr.add_argument("--w", type=float, default=1.0)
    tr.add_argument("--z", type=float, default=0.2)
    tr.add_argument("--c", type=float, default=0.8)
    tr.add_argument("--baseline", type=float, default=1.0)
    tr.set_defaults(func=cmd_trust)

    sd = sub.add_parser("stream-demo", help="seller/buyer alert streaming over loopback")
    sd.add_argument("--role", choices=("all", "seller", "buyer"), default="all")
    sd.add_argument("--endpoint", type=_endpoint, default=("127.0.0.1", 0), help="host:port (port 0 only with --role all)")
    sd.add_argument("--fault", default="none", help="none | fork-at-K | bad-signature")
    sd.add_argument("--stage", choices=("handshake", "batch"), default="batch", help="where bad-signature strikes")
    sd.add_argument("--batches", type=int, default=100)
    sd.add_argument("--batch-size", type=int, default=10)
    sd.add_argument("--buyers", type=int, default=2)
    sd.add_argument("--seed", type=int, default=0)
    sd.add_argument("--timeout", type=float, default=30.0)
    sd.set_defaults(func=cmd_stream_demo)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"trident {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: report, exit 1
        print(f"trident {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
