"""Message framing: 4-byte big-endian length, then a JSON body.

Binary fields travel base64-encoded.  ``kind`` is one of :data:`KINDS`.
"""

from __future__ import annotations

import base64
import json
import socket
import struct

from .chain import Alert, Challenge, EquivocationProof, SignedBatch, SignedHead

KINDS = ("HELLO", "NONCE", "NONCE_SIG", "ACCEPT", "REJECT", "BATCH", "CHALLENGE", "PROOF")

MAX_FRAME = 16 * 1024 * 1024


class WireError(Exception):
    pass


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode()


def unb64(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (ValueError, TypeError) as exc:
        raise WireError("bad base64 field") from exc


def encode(kind: str, **fields) -> bytes:
    if kind not in KINDS:
        raise WireError(f"unknown message kind {kind!r}")
    body = json.dumps({"kind": kind, **fields}, sort_keys=True, separators=(",", ":")).encode()
    return struct.pack(">I", len(body)) + body


def decode(body: bytes) -> dict:
    try:
        msg = json.loads(body)
    except ValueError as exc:
        raise WireError("malformed message body") from exc
    if not isinstance(msg, dict) or msg.get("kind") not in KINDS:
        raise WireError("message without a known kind")
    return msg


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise WireError("connection closed")
        buf += chunk
    return bytes(buf)


def send(sock: socket.socket, kind: str, **fields) -> None:
    sock.sendall(encode(kind, **fields))


def recv(sock: socket.socket, expect: str | tuple[str, ...] | None = None) -> dict:
    (size,) = struct.unpack(">I", _recv_exact(sock, 4))
    if size > MAX_FRAME:
        raise WireError(f"frame of {size} bytes exceeds limit")
    msg = decode(_recv_exact(sock, size))
    if expect is not None:
        allowed = (expect,) if isinstance(expect, str) else expect
        if msg["kind"] not in allowed:
            raise WireError(f"expected {'/'.join(allowed)}, got {msg['kind']}")
    return msg


# -- typed payloads ----------------------------------------------------------

def head_fields(head: SignedHead) -> dict:
    return {"index": head.index, "chain_hash": b64(head.chain_hash), "signature": b64(head.signature)}


def head_from(msg: dict) -> SignedHead:
    try:
        return SignedHead(int(msg["index"]), unb64(msg["chain_hash"]), unb64(msg["signature"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise WireError("malformed signed head") from exc


def send_batch(sock: socket.socket, batch: SignedBatch) -> None:
    payload = [list(a.fields()) for a in batch.payload]
    send(sock, "BATCH", payload=payload, **head_fields(SignedHead(batch.index, batch.chain_hash, batch.signature)))


def batch_from(msg: dict) -> SignedBatch:
    head = head_from(msg)
    try:
        alerts = tuple(Alert.from_fields(f) for f in msg["payload"])
    except (KeyError, TypeError) as exc:
        raise WireError("malformed batch payload") from exc
    return SignedBatch(head.index, alerts, head.chain_hash, head.signature)


def challenge_fields(ch: Challenge) -> dict:
    return {"challenger": ch.challenger, "stream": ch.stream, **head_fields(ch.head)}


def challenge_from(msg: dict) -> Challenge:
    try:
        return Challenge(str(msg["challenger"]), int(msg["stream"]), head_from(msg))
    except (KeyError, TypeError, ValueError) as exc:
        raise WireError("malformed challenge") from exc


def proof_fields(proof: EquivocationProof) -> dict:
    return {"first": head_fields(proof.first), "second": head_fields(proof.second)}


def proof_from(msg: dict) -> EquivocationProof:
    try:
        return EquivocationProof(head_from(msg["first"]), head_from(msg["second"]))
    except (KeyError, TypeError) as exc:
        raise WireError("malformed proof") from exc
