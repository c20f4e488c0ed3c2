"""Keys, signatures, sealing, and canonical encoding.

Signatures are Ed25519 (deterministic, so traces replay bit-exactly).
Endpoints are sealed to a recipient's X25519 key: ephemeral ECDH, HKDF-SHA256,
then ChaCha20-Poly1305.  Digests are SHA-256 over :func:`canon`.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

SIGNATURE_SCHEME = "ed25519"
DIGEST = "sha256"

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw
_RAW_PRIV = serialization.PrivateFormat.Raw
_NOENC = serialization.NoEncryption()


class CryptoError(Exception):
    pass


def canon(value) -> bytes:
    """Length-prefixed, type-tagged encoding with a fixed field order.

    Integers are 8-byte big-endian, strings are UTF-8, byte strings are raw;
    every variable-length item carries a 4-byte big-endian length.  Tuples
    and lists encode their items in order; dicts in sorted key order.
    """
    if value is None:
        return b"n"
    if isinstance(value, bool):
        return b"t" if value else b"f"
    if isinstance(value, int):
        return b"i" + value.to_bytes(8, "big", signed=True)
    if isinstance(value, float):
        return b"d" + struct.pack(">d", value)
    if isinstance(value, str):
        raw = value.encode()
        return b"s" + len(raw).to_bytes(4, "big") + raw
    if isinstance(value, (bytes, bytearray)):
        return b"b" + len(value).to_bytes(4, "big") + bytes(value)
    if isinstance(value, (tuple, list)):
        return b"l" + len(value).to_bytes(4, "big") + b"".join(canon(v) for v in value)
    if isinstance(value, dict):
        items = sorted(value.items())
        return b"m" + len(items).to_bytes(4, "big") + b"".join(canon(k) + canon(v) for k, v in items)
    raise TypeError(f"cannot canonically encode {type(value).__name__}")


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class PublicKeys:
    verify_key: bytes  # Ed25519, 32 bytes
    enc_key: bytes  # X25519, 32 bytes

    def encode(self) -> str:
        return f"ed25519:{self.verify_key.hex()};x25519:{self.enc_key.hex()}"

    @classmethod
    def decode(cls, text: str) -> PublicKeys:
        try:
            parts = dict(p.split(":", 1) for p in text.split(";"))
            vk, ek = bytes.fromhex(parts["ed25519"]), bytes.fromhex(parts["x25519"])
        except (ValueError, KeyError) as exc:
            raise CryptoError(f"malformed public key bundle: {text!r}") from exc
        if len(vk) != 32 or len(ek) != 32:
            raise CryptoError("public keys must be 32 bytes")
        return cls(vk, ek)


class KeyPair:
    """Signing and encryption key pairs of one party."""

    def __init__(self, signing: Ed25519PrivateKey, encryption: X25519PrivateKey):
        self._signing = signing
        self._encryption = encryption
        self.public = PublicKeys(
            signing.public_key().public_bytes(_RAW, _RAW_PUB),
            encryption.public_key().public_bytes(_RAW, _RAW_PUB),
        )

    @classmethod
    def generate(cls) -> KeyPair:
        return cls(Ed25519PrivateKey.generate(), X25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes | str) -> KeyPair:
        """Deterministic keys for reproducible runs and tests."""
        if isinstance(seed, str):
            seed = seed.encode()
        sk = digest(b"trident-sign" + seed)
        ek = digest(b"trident-enc" + seed)
        return cls(Ed25519PrivateKey.from_private_bytes(sk), X25519PrivateKey.from_private_bytes(ek))

    @property
    def verify_key(self) -> bytes:
        return self.public.verify_key

    def sign(self, message: bytes) -> bytes:
        return self._signing.sign(message)

    def open(self, sealed: bytes) -> bytes:
        return open_sealed(self._encryption, sealed)

    def signing_seed(self) -> bytes:
        return self._signing.private_bytes(_RAW, _RAW_PRIV, _NOENC)


def verify(verify_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(verify_key).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


_SEAL_INFO = b"trident-seal-v1"


def _seal_key(shared: bytes, eph_pub: bytes, recipient: bytes) -> bytes:
    return HKDF(hashes.SHA256(), 32, salt=eph_pub + recipient, info=_SEAL_INFO).derive(shared)


def seal(recipient_enc_key: bytes, plaintext: bytes, *, ephemeral: X25519PrivateKey | None = None) -> bytes:
    """Encrypt to an X25519 public key.  Output: ``eph_pub(32) || ciphertext``."""
    eph = ephemeral or X25519PrivateKey.generate()
    eph_pub = eph.public_key().public_bytes(_RAW, _RAW_PUB)
    shared = eph.exchange(X25519PublicKey.from_public_bytes(recipient_enc_key))
    key = _seal_key(shared, eph_pub, recipient_enc_key)
    return eph_pub + ChaCha20Poly1305(key).encrypt(bytes(12), plaintext, None)


def open_sealed(recipient: X25519PrivateKey, sealed: bytes) -> bytes:
    if len(sealed) < 32 + 16:
        raise CryptoError("sealed box too short")
    eph_pub, body = sealed[:32], sealed[32:]
    own = recipient.public_key().public_bytes(_RAW, _RAW_PUB)
    shared = recipient.exchange(X25519PublicKey.from_public_bytes(eph_pub))
    key = _seal_key(shared, eph_pub, own)
    try:
        return ChaCha20Poly1305(key).decrypt(bytes(12), body, None)
    except InvalidTag as exc:
        raise CryptoError("cannot open sealed box") from exc


def random_nonce(size: int = 32) -> bytes:
    return os.urandom(size)
