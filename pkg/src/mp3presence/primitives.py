"""Hashes, PRF, AEAD and the long-term signature scheme.

All lengths are 256 bits: PRF keys, AEAD keys, long-term public keys and
identifiers are 32-byte strings. The hash-like functions are SHA-256 with a
distinct domain tag each; the PRF is HMAC-SHA-256. AEAD is AES-256-GCM whose
12-byte nonce is the big-endian epoch index, which is safe because every key
is used in exactly one epoch.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import group
from .errors import AuthFailure

KEY_LEN = 32
ID_LEN = 32
SIG_LEN = 64
TAG_LEN = 16
NONCE_LEN = 12

PRF_TAG = b"MP3-PRF"
H1_TAG = b"MP3-H1"
H2_TAG = b"MP3-H2"
H3_TAG = b"MP3-H3"
EPOCH_KEY_TAG = b"MP3-EK"


def encode_epoch(index: int) -> bytes:
    """8-byte big-endian epoch stamp used as PRF and H0 input."""
    if not 0 <= index < 1 << 64:
        raise ValueError("epoch index out of range")
    return index.to_bytes(8, "big")


def _tagged(tag: bytes, data: bytes) -> bytes:
    return hashlib.sha256(tag + data).digest()


def prf(key: bytes, epoch: int) -> bytes:
    if len(key) != KEY_LEN:
        raise ValueError("PRF key must be 32 bytes")
    return hmac.new(key, PRF_TAG + encode_epoch(epoch), hashlib.sha256).digest()


def h1(elem: group.G1Element) -> bytes:
    return _tagged(H1_TAG, group.encode_g1(elem))


def h2(pk: bytes) -> bytes:
    if len(pk) != KEY_LEN:
        raise ValueError("long-term public key must be 32 bytes")
    return _tagged(H2_TAG, pk)


def h3(elem: group.GTElement) -> bytes:
    return _tagged(H3_TAG, group.encode_gt(elem))


def epoch_key(elem: group.GTElement) -> bytes:
    """Turn the broadcast session element into a 32-byte AEAD key."""
    return _tagged(EPOCH_KEY_TAG, group.encode_gt(elem))


# -- AEAD ------------------------------------------------------------------

class NonceReuse(AssertionError):
    pass


@dataclass
class NonceAudit:
    """Records every (key, nonce) pair sealed while active; flags reuse."""

    seen: set[tuple[bytes, int]] = field(default_factory=set)
    count: int = 0

    def observe(self, key: bytes, nonce: int) -> None:
        pair = (bytes(key), nonce)
        if pair in self.seen:
            raise NonceReuse(f"nonce {nonce} reused under the same key")
        self.seen.add(pair)
        self.count += 1


_audits: list[NonceAudit] = []
_audit_lock = threading.Lock()


@contextmanager
def nonce_audit():
    audit = NonceAudit()
    with _audit_lock:
        _audits.append(audit)
    try:
        yield audit
    finally:
        with _audit_lock:
            _audits.remove(audit)


def _nonce(index: int) -> bytes:
    if not 0 <= index < 1 << 64:
        raise ValueError("nonce index out of range")
    return index.to_bytes(NONCE_LEN, "big")


def aead_seal(key: bytes, nonce: int, header: bytes, plaintext: bytes) -> bytes:
    for audit in _audits:
        audit.observe(key, nonce)
    return AESGCM(key).encrypt(_nonce(nonce), plaintext, header)


def aead_open(key: bytes, nonce: int, header: bytes, ciphertext: bytes) -> bytes:
    try:
        return AESGCM(key).decrypt(_nonce(nonce), ciphertext, header)
    except InvalidTag as exc:
        raise AuthFailure("AEAD authentication failed") from exc


# -- long-term signatures --------------------------------------------------

@dataclass(frozen=True)
class LtSigKeypair:
    private: bytes
    public: bytes

    @classmethod
    def from_private(cls, private: bytes) -> "LtSigKeypair":
        sk = Ed25519PrivateKey.from_private_bytes(private)
        pub = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return cls(private=bytes(private), public=pub)

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "LtSigKeypair":
        rng = rng or group.default_rng()
        return cls.from_private(rng.randbytes(32))


def lt_sign(private: bytes, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(private).sign(message)


def lt_verify(public: bytes, message: bytes, sig: bytes) -> bool:
    if len(sig) != SIG_LEN or len(public) != KEY_LEN:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(sig, message)
    except (InvalidSignature, ValueError):
        return False
    return True
