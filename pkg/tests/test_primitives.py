import pytest

from mp3presence import group, primitives
from mp3presence.errors import AuthFailure
from mp3presence.primitives import LtSigKeypair


def test_prf_determinism_and_separation(rng):
    k, k2 = rng.randbytes(32), rng.randbytes(32)
    assert primitives.prf(k, 7) == primitives.prf(k, 7)
    assert primitives.prf(k, 7) != primitives.prf(k, 8)
    assert primitives.prf(k, 7) != primitives.prf(k2, 7)
    assert len(primitives.prf(k, 7)) == 32


def test_hash_outputs(rng):
    pk = rng.randbytes(32)
    assert primitives.h2(pk) == primitives.h2(pk)
    assert len(primitives.h2(pk)) == 32
    key = primitives.h1(group.random_g1(rng))
    assert len(key) == 32
    primitives.prf(key, 1)
    x = group.pair(group.g1, group.g2)
    assert primitives.h3(x) == primitives.h3(group.decode_gt(group.encode_gt(x)))
    assert primitives.h3(x) != primitives.h3(x**2)


def test_domain_separation(rng):
    data = rng.randbytes(32)
    # same bytes through different oracles never collide
    assert primitives.h2(data) != primitives.prf(data, 0)


def test_encode_epoch():
    assert primitives.encode_epoch(1) == b"\x00" * 7 + b"\x01"
    with pytest.raises(ValueError):
        primitives.encode_epoch(-1)


def test_aead_round_trip_and_tamper(rng):
    key = rng.randbytes(32)
    ct = primitives.aead_seal(key, 3, b"", b"hello")
    assert primitives.aead_open(key, 3, b"", ct) == b"hello"
    ct = primitives.aead_seal(key, 4, b"header", b"hello")
    with pytest.raises(AuthFailure):
        primitives.aead_open(key, 4, b"hEader", ct)
    with pytest.raises(AuthFailure):
        primitives.aead_open(rng.randbytes(32), 4, b"header", ct)
    with pytest.raises(AuthFailure):
        primitives.aead_open(key, 5, b"header", ct)


def test_nonce_audit_flags_reuse(rng):
    key = rng.randbytes(32)
    with primitives.nonce_audit() as audit:
        primitives.aead_seal(key, 1, b"", b"a")
        primitives.aead_seal(key, 2, b"", b"a")
        with pytest.raises(primitives.NonceReuse):
            primitives.aead_seal(key, 1, b"", b"b")
    assert audit.count == 2


def test_signatures(rng):
    kp, other = LtSigKeypair.generate(rng), LtSigKeypair.generate(rng)
    msg = rng.randbytes(100)
    sig = primitives.lt_sign(kp.private, msg)
    assert len(sig) == 64 and len(kp.public) == 32
    assert primitives.lt_verify(kp.public, msg, sig)
    assert not primitives.lt_verify(other.public, msg, sig)
    bad = bytearray(msg)
    bad[17] ^= 1
    assert not primitives.lt_verify(kp.public, bytes(bad), sig)
    assert not primitives.lt_verify(kp.public, msg, sig[:-1])
    assert LtSigKeypair.from_private(kp.private) == kp
