"""Per-user dynamic broadcast encryption with permanent revocation.

Each user acts as the manager of a broadcast group whose members are the
people allowed to follow them. Ciphertexts and member keys have constant size
regardless of how many members exist or how many were revoked.

Manager state is ``(G, H, gamma)``. A member key for ``x`` is::

    A = G ** (x / (gamma + x))        (fixed forever)
    B = H ** (1 / (gamma + x))        (tracks the manager's current H)

Revoking ``x`` publishes ``(x, H ** (1 / (gamma + x)))`` and moves the manager
to ``H' = H ** (1 / (gamma + x))``. Every other member moves its ``B`` along
with ``(B_pub / B) ** (1 / (x_own - x))``; the revoked member would need
``1 / 0`` and is locked out for good.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from . import group
from .errors import InvalidEncoding, SelfRevoked
from .group import G1Element, G2Element, GTElement

SCALAR_LEN = group.SUITE.len_scalar
DK_LEN = SCALAR_LEN + group.LEN_G1 + group.LEN_G2
RL_ENTRY_LEN = SCALAR_LEN + group.LEN_G2
CT_LEN = group.LEN_G1 + group.LEN_G2


@dataclass
class ManagerKey:
    G: G1Element
    H: G2Element
    gamma: int
    granted: set[int] = field(default_factory=set)

    def copy(self) -> "ManagerKey":
        return ManagerKey(self.G, self.H, self.gamma, set(self.granted))

    def to_bytes(self) -> bytes:
        xs = sorted(self.granted)
        return b"".join(
            [
                group.encode_g1(self.G),
                group.encode_g2(self.H),
                group.encode_scalar(self.gamma),
                len(xs).to_bytes(4, "big"),
                *(group.encode_scalar(x) for x in xs),
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "ManagerKey":
        off = 0
        G = group.decode_g1(data[off : off + group.LEN_G1])
        off += group.LEN_G1
        H = group.decode_g2(data[off : off + group.LEN_G2])
        off += group.LEN_G2
        gamma = group.decode_scalar(data[off : off + SCALAR_LEN])
        off += SCALAR_LEN
        count = int.from_bytes(data[off : off + 4], "big")
        off += 4
        if len(data) != off + count * SCALAR_LEN:
            raise InvalidEncoding("manager key length mismatch")
        granted = {
            group.decode_scalar(data[off + k * SCALAR_LEN : off + (k + 1) * SCALAR_LEN])
            for k in range(count)
        }
        return cls(G, H, gamma, granted)


@dataclass(frozen=True)
class DecryptionKey:
    x: int
    A: G1Element
    B: G2Element

    def to_bytes(self) -> bytes:
        return group.encode_scalar(self.x) + group.encode_g1(self.A) + group.encode_g2(self.B)

    @classmethod
    def from_bytes(cls, data: bytes) -> "DecryptionKey":
        if len(data) != DK_LEN:
            raise InvalidEncoding(f"decryption key must be {DK_LEN} bytes")
        x = group.decode_scalar(data[:SCALAR_LEN])
        A = group.decode_g1(data[SCALAR_LEN : SCALAR_LEN + group.LEN_G1])
        B = group.decode_g2(data[SCALAR_LEN + group.LEN_G1 :])
        return cls(x, A, B)


@dataclass(frozen=True)
class RevocationList:
    """Ordered ``(x, B)`` pairs; order is part of the wire format."""

    entries: tuple[tuple[int, G2Element], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def to_bytes(self) -> bytes:
        return b"".join(group.encode_scalar(x) + group.encode_g2(B) for x, B in self.entries)

    @classmethod
    def from_bytes(cls, data: bytes, n_rev: int) -> "RevocationList":
        if len(data) != n_rev * RL_ENTRY_LEN:
            raise InvalidEncoding(f"revocation list must hold exactly {n_rev} entries")
        entries = []
        for k in range(n_rev):
            chunk = data[k * RL_ENTRY_LEN : (k + 1) * RL_ENTRY_LEN]
            entries.append(
                (group.decode_scalar(chunk[:SCALAR_LEN]), group.decode_g2(chunk[SCALAR_LEN:]))
            )
        return cls(tuple(entries))


@dataclass(frozen=True)
class BroadcastCiphertext:
    C1: G1Element
    C2: G2Element

    def to_bytes(self) -> bytes:
        return group.encode_g1(self.C1) + group.encode_g2(self.C2)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BroadcastCiphertext":
        if len(data) != CT_LEN:
            raise InvalidEncoding(f"broadcast ciphertext must be {CT_LEN} bytes")
        return cls(group.decode_g1(data[: group.LEN_G1]), group.decode_g2(data[group.LEN_G1 :]))


def setup(rng: random.Random | None = None) -> ManagerKey:
    rng = rng or group.default_rng()
    return ManagerKey(
        G=group.random_g1(rng),
        H=group.random_g2(rng),
        gamma=group.random_scalar(rng),
    )


def grant(mk: ManagerKey, rng: random.Random | None = None) -> DecryptionKey:
    """Issue a member key for a fresh ``x`` and record ``x`` as granted."""
    rng = rng or group.default_rng()
    while True:
        x = group.random_scalar(rng)
        if x not in mk.granted and group.add(mk.gamma, x) != 0:
            break
    d = group.inv(group.add(mk.gamma, x))
    mk.granted.add(x)
    return DecryptionKey(x=x, A=mk.G ** group.mul(x, d), B=mk.H**d)


def revoke(
    mk: ManagerKey,
    to_revoke: list[int],
    n_rev: int,
    rng: random.Random | None = None,
) -> RevocationList:
    """Revoke ``to_revoke`` in order, pad to ``n_rev`` entries, update ``mk`` in place.

    Padding entries use fresh random ``x`` values and update ``H`` exactly
    like real revocations, so they are indistinguishable on the wire.
    Raises ``DivisionByZero`` if some ``x`` equals ``-gamma``.
    """
    if len(to_revoke) > n_rev:
        raise ValueError(f"at most {n_rev} revocations per epoch")
    for x in to_revoke:
        if x not in mk.granted:
            raise ValueError("cannot revoke an x that was never granted")
    rng = rng or group.default_rng()
    xs = list(to_revoke)
    while len(xs) < n_rev:
        xs.append(group.random_scalar(rng))
    entries = []
    for x in xs:
        B = mk.H ** group.inv(group.add(mk.gamma, x))
        entries.append((x, B))
        mk.H = B
        mk.granted.discard(x)
    return RevocationList(tuple(entries))


def encrypt_epoch_keys(
    mk: ManagerKey, rng: random.Random | None = None
) -> tuple[BroadcastCiphertext, GTElement]:
    """Fresh broadcast of a session element ``K = e(G, H) ** kappa``."""
    kappa = group.random_scalar(rng)
    ct = BroadcastCiphertext(
        C1=mk.G ** group.mul(kappa, mk.gamma),
        C2=mk.H**kappa,
    )
    return ct, group.pair(mk.G, mk.H) ** kappa


def update_key(dk: DecryptionKey, rl: RevocationList) -> DecryptionKey:
    B = dk.B
    for x, B_pub in rl:
        diff = group.sub(dk.x, x)
        if diff == 0:
            raise SelfRevoked("own x appears in the revocation list")
        B = (B_pub * B.inverse()) ** group.inv(diff)
    return replace(dk, B=B)


def decrypt(dk: DecryptionKey, ct: BroadcastCiphertext) -> GTElement:
    return group.pair(ct.C1, dk.B) * group.pair(dk.A, ct.C2)
