"""Presence records for the long-term and short-term databases.

Byte layouts (fixed length for a given ``n_rev`` / message size)::

    long-term  = prev_pk(32) | rl(n_rev * (32 + len_g2)) | C1(len_g1) | C2(len_g2)
                 | sealed(32 + len_g1 + 16) | sig(64)
    short-term = ct(2 + M + 16) | tag(len_g2)

The registration server stores long-term records without ``prev_pk`` (the
lookup key is derived from it and every reader already knows it), and
short-term records without the tag.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import broadcast, group, primitives
from .broadcast import BroadcastCiphertext, DecryptionKey, ManagerKey, RevocationList
from .errors import BadSignature, InvalidEncoding, MalformedRecord, MessageTooLong
from .group import G1Element, G2Element
from .primitives import KEY_LEN, SIG_LEN, TAG_LEN, LtSigKeypair

MESSAGE_LEN = 256
SEALED_LEN = KEY_LEN + group.LEN_G1 + TAG_LEN


@dataclass(frozen=True)
class ClientEpochKeys:
    lt_keypair: LtSigKeypair
    presence_priv: int
    presence_pub: G1Element

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "ClientEpochKeys":
        rng = rng or group.default_rng()
        y = group.random_scalar(rng)
        return cls(LtSigKeypair.generate(rng), y, group.g1**y)

    def to_bytes(self) -> bytes:
        return self.lt_keypair.private + group.encode_scalar(self.presence_priv)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ClientEpochKeys":
        if len(data) != 64:
            raise InvalidEncoding("epoch keys must be 64 bytes")
        y = group.decode_scalar(data[32:])
        return cls(LtSigKeypair.from_private(data[:32]), y, group.g1**y)


# -- long-term -------------------------------------------------------------

def lt_value_len(n_rev: int) -> int:
    return n_rev * broadcast.RL_ENTRY_LEN + broadcast.CT_LEN + SEALED_LEN + SIG_LEN


def lt_record_len(n_rev: int) -> int:
    return KEY_LEN + lt_value_len(n_rev)


@dataclass(frozen=True)
class LongTermRecord:
    prev_pk: bytes
    rl: RevocationList
    ct: BroadcastCiphertext
    sealed: bytes
    sig: bytes

    def header(self) -> bytes:
        return self.prev_pk + self.rl.to_bytes() + self.ct.to_bytes()

    def signed_bytes(self) -> bytes:
        return self.header() + self.sealed

    def value_bytes(self) -> bytes:
        """What the registration server stores under the record identifier."""
        return self.rl.to_bytes() + self.ct.to_bytes() + self.sealed + self.sig

    def to_bytes(self) -> bytes:
        return self.prev_pk + self.value_bytes()

    @classmethod
    def from_value(cls, prev_pk: bytes, value: bytes, n_rev: int) -> "LongTermRecord":
        if len(value) != lt_value_len(n_rev):
            raise MalformedRecord(
                f"long-term value must be {lt_value_len(n_rev)} bytes, got {len(value)}"
            )
        off = n_rev * broadcast.RL_ENTRY_LEN
        try:
            rl = RevocationList.from_bytes(value[:off], n_rev)
            ct = BroadcastCiphertext.from_bytes(value[off : off + broadcast.CT_LEN])
        except InvalidEncoding as exc:
            raise MalformedRecord(str(exc)) from exc
        off += broadcast.CT_LEN
        sealed = value[off : off + SEALED_LEN]
        sig = value[off + SEALED_LEN :]
        return cls(bytes(prev_pk), rl, ct, bytes(sealed), bytes(sig))

    @classmethod
    def from_bytes(cls, data: bytes, n_rev: int) -> "LongTermRecord":
        if len(data) != lt_record_len(n_rev):
            raise MalformedRecord(
                f"long-term record must be {lt_record_len(n_rev)} bytes, got {len(data)}"
            )
        return cls.from_value(data[:KEY_LEN], data[KEY_LEN:], n_rev)

    def verify(self) -> bool:
        return primitives.lt_verify(self.prev_pk, self.signed_bytes(), self.sig)


def lt_record_id(prev_pk: bytes) -> bytes:
    return primitives.h2(prev_pk)


def make_lt_record(
    prev_keys: ClientEpochKeys,
    new_keys: ClientEpochKeys,
    mk: ManagerKey,
    revocations: list[int],
    n_rev: int,
    j: int,
    rng: random.Random | None = None,
) -> LongTermRecord:
    """Build the record registering ``new_keys`` for long-term epoch ``j``.

    ``mk`` is updated in place by the revocation step; callers that may need
    to roll back should pass a copy.
    """
    rl = broadcast.revoke(mk, revocations, n_rev, rng)
    ct, K = broadcast.encrypt_epoch_keys(mk, rng)
    prev_pk = prev_keys.lt_keypair.public
    header = prev_pk + rl.to_bytes() + ct.to_bytes()
    plaintext = new_keys.lt_keypair.public + group.encode_g1(new_keys.presence_pub)
    sealed = primitives.aead_seal(primitives.epoch_key(K), j, header, plaintext)
    sig = primitives.lt_sign(prev_keys.lt_keypair.private, header + sealed)
    return LongTermRecord(prev_pk, rl, ct, sealed, sig)


def read_lt_record(
    record: LongTermRecord, dk: DecryptionKey, j: int
) -> tuple[DecryptionKey, bytes, G1Element]:
    """Friend-side processing: verify, update key, decrypt, open.

    Returns the updated decryption key and the sealed ``(P_j, p_j)``.
    Raises ``BadSignature``, ``SelfRevoked`` or ``AuthFailure``.
    """
    if not record.verify():
        raise BadSignature("long-term record signature invalid under known key")
    dk = broadcast.update_key(dk, record.rl)
    K = broadcast.decrypt(dk, record.ct)
    plaintext = primitives.aead_open(primitives.epoch_key(K), j, record.header(), record.sealed)
    next_pk = plaintext[:KEY_LEN]
    presence_pub = group.decode_g1(plaintext[KEY_LEN:])
    return dk, next_pk, presence_pub


# -- short-term ------------------------------------------------------------

def st_ct_len(msg_len: int = MESSAGE_LEN) -> int:
    return 2 + msg_len + TAG_LEN


def st_record_len(msg_len: int = MESSAGE_LEN) -> int:
    return st_ct_len(msg_len) + group.LEN_G2


@dataclass(frozen=True)
class ShortTermRecord:
    ct: bytes
    tag: G2Element

    def to_bytes(self) -> bytes:
        return self.ct + group.encode_g2(self.tag)

    @classmethod
    def from_bytes(cls, data: bytes, msg_len: int = MESSAGE_LEN) -> "ShortTermRecord":
        if len(data) != st_record_len(msg_len):
            raise MalformedRecord(
                f"short-term record must be {st_record_len(msg_len)} bytes, got {len(data)}"
            )
        n = st_ct_len(msg_len)
        try:
            tag = group.decode_g2(data[n:])
        except InvalidEncoding as exc:
            raise MalformedRecord(str(exc)) from exc
        return cls(bytes(data[:n]), tag)


def _st_key(presence_pub: G1Element, i: int) -> bytes:
    return primitives.prf(primitives.h1(presence_pub), i)


def pad_message(message: bytes, msg_len: int = MESSAGE_LEN) -> bytes:
    if len(message) > msg_len:
        raise MessageTooLong(f"presence message exceeds {msg_len} bytes")
    return len(message).to_bytes(2, "big") + message + bytes(msg_len - len(message))


def unpad_message(padded: bytes) -> bytes:
    n = int.from_bytes(padded[:2], "big")
    if n > len(padded) - 2:
        raise MalformedRecord("bad presence message length prefix")
    return padded[2 : 2 + n]


def make_st_record(
    keys: ClientEpochKeys, i: int, message: bytes, msg_len: int = MESSAGE_LEN
) -> ShortTermRecord:
    padded = pad_message(message, msg_len)
    ct = primitives.aead_seal(_st_key(keys.presence_pub, i), i, b"", padded)
    tag = group.hash_to_g2(primitives.encode_epoch(i)) ** keys.presence_priv
    return ShortTermRecord(ct, tag)


def read_st_record(ct: bytes, presence_pub: G1Element, i: int) -> bytes:
    return unpad_message(primitives.aead_open(_st_key(presence_pub, i), i, b"", ct))


def st_record_id_from_tag(tag: G2Element) -> bytes:
    return primitives.h3(group.pair(group.g1, tag))


def st_record_id_from_pub(presence_pub: G1Element, i: int) -> bytes:
    return primitives.h3(group.pair(presence_pub, group.hash_to_g2(primitives.encode_epoch(i))))
