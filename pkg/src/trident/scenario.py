"""Line-oriented input files: sweep grids and marketplace scripts.

Both formats ignore blank lines and ``#`` comments.

Grid line::

    p=0.05 q=0.6 alpha=10 delta=2 s=0.2 price=opt

Script line (``=> ok`` / ``=> rejected`` states the expected outcome)::

    seed=7
    @system mint to=alice amount=100
    alice register payment=1 public_key=auto => ok
    alice advertise tags={"throughput":10,"price":1,"detector":"IDS","network":"industrial","attacks":["DDoS"]}

Values are JSON where they parse as JSON and plain strings otherwise.
Token amounts (``amount``, ``payment``, ``fee``, ``deposit``, ``tags.price``)
are written in tokens and converted to milli-tokens.  ``public_key=auto``
and ``sealed_endpoint=auto`` derive keys from the script seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

from .crypto import CryptoError, KeyPair, PublicKeys, digest
from .game import GameParams, Regime, classify_regime, optimal_price
from .market import SYSTEM, Market, Rejected
from .sim import to_milli
from .stream.handshake import seal_endpoint


class ScriptError(Exception):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def _pairs(tokens: Iterable[str], line: int) -> dict:
    out = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or not key:
            raise ScriptError(line, f"expected key=value, got {tok!r}")
        out[key] = _value(val)
    return out


def split_tokens(line: str, lineno: int) -> list[str]:
    """Whitespace split that keeps JSON brackets and strings whole."""
    tokens, cur, depth, quote = [], [], 0, False
    prev = ""
    for ch in line:
        if quote:
            quote = not (ch == '"' and prev != "\\")
        elif ch == '"':
            quote = True
        elif ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
            if depth < 0:
                raise ScriptError(lineno, "unbalanced brackets")
        if ch.isspace() and depth == 0 and not quote:
            if cur:
                tokens.append("".join(cur))
                cur = []
        else:
            cur.append(ch)
        prev = ch
    if quote or depth:
        raise ScriptError(lineno, "unterminated string or bracket")
    if cur:
        tokens.append("".join(cur))
    return tokens


def _lines(text: str) -> Iterable[tuple[int, str]]:
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip() if not raw.lstrip().startswith("#") else ""
        if line:
            yield n, line


# -- sweep grids ------------------------------------------------------------

GRID_KEYS = {"p", "q", "alpha", "delta", "s", "price", "price0", "price1"}


def resolve_price(params: GameParams, price) -> float:
    """``"opt"`` means :func:`optimal_price`, or 0 where no one ever buys."""
    if price != "opt":
        return float(price)
    if classify_regime(params) is not Regime.CONDITIONAL:
        return 0.0
    return optimal_price(params)


def parse_grid(text: str) -> list[GameParams]:
    grid = []
    for n, line in _lines(text):
        d = _pairs(line.split(), n)
        unknown = d.keys() - GRID_KEYS
        if unknown:
            raise ScriptError(n, f"unknown keys {sorted(unknown)}")
        missing = {"p", "q", "alpha", "delta"} - d.keys()
        if missing:
            raise ScriptError(n, f"missing keys {sorted(missing)}")
        try:
            base = GameParams(
                float(d["p"]), float(d["q"]), float(d["alpha"]), float(d["delta"]), float(d.get("s", 0))
            )
            price = resolve_price(base, d.get("price", 0))
            p0 = float(d.get("price0", price))
            p1 = float(d.get("price1", price))
            grid.append(base.with_prices(p0, p1))
        except (TypeError, ValueError) as exc:
            raise ScriptError(n, str(exc)) from exc
    return grid


# -- marketplace scripts ------------------------------------------------------

AMOUNT_ARGS = {"amount", "payment", "fee", "deposit"}


@dataclass
class Step:
    line: int
    caller: str
    op: str
    args: dict
    expect: str | None = None  # "ok" | "rejected" | None


@dataclass
class ScenarioScript:
    steps: list[Step]
    seed: int = 0


@dataclass
class StepResult:
    step: Step
    event: dict | None
    rejection: str | None = None

    @property
    def ok(self) -> bool:
        return self.rejection is None


def parse_script(text: str, seed: int = 0) -> ScenarioScript:
    """Parse a script; a bare ``seed=N`` line sets the key-derivation seed."""
    steps = []
    for n, line in _lines(text):
        if line.startswith("seed="):
            try:
                seed = int(line[5:])
            except ValueError as exc:
                raise ScriptError(n, f"bad seed {line[5:]!r}") from exc
            continue
        expect = None
        if "=>" in line:
            line, _, exp = line.rpartition("=>")
            expect = exp.strip()
            if expect not in ("ok", "rejected"):
                raise ScriptError(n, f"expectation must be ok or rejected, got {expect!r}")
        tokens = split_tokens(line, n)
        if len(tokens) < 2:
            raise ScriptError(n, "expected: caller op [key=value ...]")
        steps.append(Step(n, tokens[0], tokens[1], _pairs(tokens[2:], n), expect))
    return ScenarioScript(steps, seed)


def party_keys(seed: int, party: str) -> KeyPair:
    return KeyPair.from_seed(f"{seed}:{party}")


def _ephemeral(seed: int, line: int) -> X25519PrivateKey:
    return X25519PrivateKey.from_private_bytes(digest(f"{seed}:seal:{line}".encode()))


@dataclass
class ScenarioRun:
    market: Market
    results: list[StepResult] = field(default_factory=list)

    def failures(self) -> list[StepResult]:
        out = []
        for r in self.results:
            exp = r.step.expect
            if exp == "ok" and not r.ok or exp == "rejected" and r.ok:
                out.append(r)
        return out


def run_script(script: ScenarioScript, market: Market | None = None) -> ScenarioRun:
    """Apply every step; rejections are recorded, not raised."""
    run = ScenarioRun(market or Market())
    m = run.market
    for step in script.steps:
        args = dict(step.args)
        for k in AMOUNT_ARGS & args.keys():
            if isinstance(args[k], (int, float)) and not isinstance(args[k], bool):
                args[k] = to_milli(args[k])
        if isinstance(args.get("tags"), dict) and isinstance(args["tags"].get("price"), (int, float)):
            args["tags"] = dict(args["tags"], price=to_milli(args["tags"]["price"]))
        if args.get("public_key") == "auto":
            args["public_key"] = party_keys(script.seed, step.caller).public.encode()
        if args.get("sealed_endpoint") == "auto":
            host, port = args.pop("host", "127.0.0.1"), args.pop("port", 0)
            args["sealed_endpoint"] = _auto_endpoint(m, script.seed, step, host, port)
        try:
            event = m.apply(SYSTEM if step.caller == SYSTEM else step.caller, step.op, args)
            run.results.append(StepResult(step, event))
        except Rejected as exc:
            run.results.append(StepResult(step, None, str(exc)))
    return run


def _auto_endpoint(m: Market, seed: int, step: Step, host: str, port: int) -> bytes:
    off = m.state.offers.get(step.args.get("offer"))
    if off is None or off.maker not in m.state.parties:
        return b"\x00" * 48  # lets the market reject the unknown offer
    try:
        buyer = PublicKeys.decode(m.state.parties[off.maker].public_key)
    except CryptoError:
        return b"\x00" * 48
    return seal_endpoint(party_keys(seed, step.caller), buyer, str(host), int(port), ephemeral=_ephemeral(seed, step.line))
