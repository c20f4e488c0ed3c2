import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest

from trident.cli import main

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = ROOT / "scenarios" / "golden.txt"
GRID = ROOT / "scenarios" / "grid.txt"


def cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "trident.cli", *map(str, args)],
        capture_output=True, text=True, timeout=120, cwd=cwd,
    )


SIM = ("simulate", "--p", 0.05, "--q", 0.6, "--alpha", 10, "--delta", 2, "--s", 0.2)


@pytest.mark.parametrize(
    "args,code",
    [
        ((*SIM, "--horizon", 2000), 0),
        (("simulate", "--p", 0.05, "--q", 0.6, "--alpha", 10), 2),  # missing --delta
        ((*SIM, "--price", "cheap"), 2),
        (("simulate", "--p", 0.05, "--q", 0.6, "--alpha", 10, "--delta", 2, "--s", 5), 1),
        (("sweep", "--grid", GRID, "--horizon", 500), 0),
        (("sweep", "--grid", "/nonexistent/grid.txt"), 2),
        (("market", GOLDEN), 0),
        (("market", "/nonexistent/script.txt"), 2),
        (("trust", "--positive", 3, "--negative", 1), 0),
        (("trust", "--N", 0), 2),
        (("stream-demo", "--batches", 4, "--batch-size", 1), 0),
        (("stream-demo", "--role", "buyer"), 2),
        (("stream-demo", "--fault", "fork-at-9", "--batches", 5), 2),
        (("bogus",), 2),
        ((), 2),
    ],
)
def test_exit_code_matrix(args, code):
    res = cli(*args)
    assert res.returncode == code, res.stderr
    if code == 2:
        assert "usage:" in res.stderr


def test_runtime_failure_names_the_problem():
    res = cli("simulate", "--p", 0.05, "--q", 0.6, "--alpha", 10, "--delta", 2, "--s", 5)
    assert "disclosure cost" in res.stderr


# -- simulate ----------------------------------------------------------------


def test_simulate_summary(capsys):
    assert main([*map(str, SIM), "--horizon", "50000", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "regime: Conditional" in out
    assert "price used: 1" in out
    assert "gap bound: 232.5" in out
    gaps = [float(l.split("mean gap ")[1].split()[0]) for l in out.splitlines() if l.startswith("player")]
    assert len(gaps) == 2 and all(g <= 232.5 for g in gaps)


def test_simulate_always_defend_buys_nothing(capsys):
    assert main(["simulate", "--p", "0.05", "--q", "0.6", "--alpha", "10", "--delta", "0.4", "--horizon", "5000"]) == 0
    out = capsys.readouterr().out
    assert "regime: AlwaysDefend" in out and "optimal price: n/a" in out
    assert out.count("purchases 0 ") == 2


def test_simulate_csv_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main([*map(str, SIM), "--horizon", "3000", "--seed", "4", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("# seed=4 rng=PCG64")


def test_simulate_trace_on_stdout_moves_summary_to_stderr():
    res = cli(*SIM, "--horizon", 100, "--out", "-")
    assert res.stdout.startswith("# seed=0")
    assert "regime:" in res.stderr and "regime:" not in res.stdout


# -- sweep -------------------------------------------------------------------


def test_sweep_rows_follow_the_grid(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--grid", str(GRID), "--horizon", "20000", "--seed", "1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    header = lines[1].split(",")
    rows = [dict(zip(header, l.split(","))) for l in lines[2:]]
    assert [r["regime"] for r in rows] == ["AlwaysDefend", "Conditional", "NeverDefend"]
    purchases = [float(r["purchases_per_1000"]) for r in rows]
    assert purchases[0] == 0 and purchases[1] > 0 and purchases[2] == 0


def test_sweep_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        path = tmp_path / name
        main(["sweep", "--grid", str(GRID), "--horizon", "2000", "--seed", "3", "--out", str(path)])
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_sweep_errors_name_the_line(tmp_path, capsys):
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing here\n")
    assert main(["sweep", "--grid", str(empty)]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("p=0.05 q=0.6 alpha=10 delta=2\np=0.05 q=0.6 alpha=10\n")
    assert main(["sweep", "--grid", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err


# -- market ------------------------------------------------------------------


def test_golden_market_scenario(capsys, tmp_path):
    log = tmp_path / "log.jsonl"
    assert main(["market", str(GOLDEN), "--log", str(log)]) == 0
    out = capsys.readouterr().out
    assert '"refund": 1000' in out
    assert "offer 2: subscriber-refund" in out
    assert "conservation: ok" in out and "replay: ok" in out
    assert "bob rm_advert REJECTED" in out
    # bob has a burn and no ratings: the fresh-registrant score
    bob = next(l for l in out.splitlines() if l.strip().startswith("bob "))
    assert bob.split()[-1] == "0.5000"
    assert log.read_text().count("\n") == 8  # the rejected step is not logged


def test_unauthorized_step_leaves_state_unchanged(tmp_path, capsys):
    base = "\n".join(GOLDEN.read_text().splitlines()[:-2])
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    a.write_text(base + "\n")
    b.write_text(base + "\nbob rm_advert advert=1 => rejected\n")
    logs = []
    for script in (a, b):
        log = tmp_path / (script.stem + ".jsonl")
        assert main(["market", str(script), "--log", str(log)]) == 0
        logs.append(log.read_bytes())
    out = capsys.readouterr().out
    assert logs[0] == logs[1]
    tail = lambda text: text[text.index("balances:"):]  # noqa: E731
    first, second = out.split("# seed=")[1:]
    assert tail(first) == tail(second)


def test_unexpected_outcome_exits_1(tmp_path, capsys):
    script = tmp_path / "s.txt"
    script.write_text("@system mint to=alice amount=5\nalice register payment=1 public_key=auto => rejected\n")
    assert main(["market", str(script)]) == 1
    assert "expected rejected, got accepted" in capsys.readouterr().err


def test_script_error_names_the_line(tmp_path, capsys):
    script = tmp_path / "s.txt"
    script.write_text("@system mint to=alice amount=5\nalice\n")
    assert main(["market", str(script)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_market_output_is_deterministic():
    assert cli("market", GOLDEN).stdout == cli("market", GOLDEN).stdout


# -- trust -------------------------------------------------------------------


def test_trust_fresh_party_is_half(capsys):
    assert main(["trust"]) == 0
    out = capsys.readouterr().out
    assert "E: 0.500000" in out and "N at t=0, 0.5, 1: 7, 40, 7" in out


def test_trust_reference_certainty(capsys):
    assert main(["trust", "--positive", "10", "--negative", "4", "--N", "40"]) == 0
    assert f"c_e: {560 / 612:.6f}" in capsys.readouterr().out


# -- stream demo -------------------------------------------------------------


def test_stream_demo_modes(capsys):
    assert main(["stream-demo", "--batches", "100"]) == 0
    out = capsys.readouterr().out
    assert out.count("verified 100 batches\n") == 2 and "no proof produced" in out
    assert main(["stream-demo", "--batches", "100", "--fault", "fork-at-50"]) == 0
    out = capsys.readouterr().out
    assert "6000" in out and "3000" in out
    assert main(["stream-demo", "--batches", "100", "--fault", "bad-signature"]) == 0
    assert "bad-signature at batch 50" in capsys.readouterr().out
    assert main(["stream-demo", "--batches", "10", "--fault", "bad-signature", "--stage", "handshake"]) == 0
    assert "connection rejected" in capsys.readouterr().out


def test_stream_demo_connect_failure_has_role_context():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    res = cli("stream-demo", "--role", "buyer", "--endpoint", f"127.0.0.1:{port}", "--timeout", 2)
    assert res.returncode == 1
    assert "cannot connect" in res.stdout + res.stderr


def test_stream_demo_split_processes():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    seller = subprocess.Popen(
        [sys.executable, "-m", "trident.cli", "stream-demo", "--role", "seller",
         "--endpoint", f"127.0.0.1:{port}", "--batches", "10", "--timeout", "20"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
    )
    try:
        for _ in range(50):
            buyer = cli("stream-demo", "--role", "buyer", "--endpoint", f"127.0.0.1:{port}", "--batches", 10)
            if "cannot connect" not in buyer.stdout + buyer.stderr:
                break
            time.sleep(0.1)
        assert buyer.returncode == 0, buyer.stdout + buyer.stderr
        assert buyer.stdout.count("verified 10 batches") == 2
        out, err = seller.communicate(timeout=30)
        assert seller.returncode == 0, err
        assert out.count("accepted") == 2
    finally:
        seller.kill()
