"""Type-3 bilinear group over BLS12-381 (RELIC, through petrelic).

Scalars are plain ``int`` values in ``[0, p)``. Group elements are petrelic
elements; they are treated as immutable (only the non in-place operators are
used anywhere in the package). Every element kind has a fixed-length canonical
encoding, and decoding rejects anything that does not re-encode to the same
bytes or fails the subgroup check.

There is deliberately no operation that maps between G1 and G2.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache

from petrelic.multiplicative.pairing import (
    G1,
    G2,
    GT,
    G1Element,
    G2Element,
    GTElement,
)

from .errors import DivisionByZero, InvalidEncoding

__all__ = [
    "P",
    "SUITE",
    "SuiteDescriptor",
    "G1Element",
    "G2Element",
    "GTElement",
    "g1",
    "g2",
    "pair",
    "hash_to_g2",
    "random_scalar",
    "inv",
    "add",
    "sub",
    "mul",
    "neg",
    "encode_scalar",
    "decode_scalar",
    "encode_g1",
    "decode_g1",
    "encode_g2",
    "decode_g2",
    "encode_gt",
    "decode_gt",
    "random_g1",
    "random_g2",
    "default_rng",
]

P: int = int(G1.order())

H0_TAG = b"MP3-H0"


@dataclass(frozen=True)
class SuiteDescriptor:
    curve_id: str
    p: int
    len_scalar: int
    len_g1: int
    len_g2: int
    len_gt: int
    scalar_byteorder: str
    g1: bytes
    g2: bytes


def default_rng() -> random.Random:
    """Randomness source used when callers do not supply one."""
    return random.SystemRandom()


# -- scalars ---------------------------------------------------------------

def random_scalar(rng: random.Random | None = None, nonzero: bool = True) -> int:
    rng = rng or default_rng()
    return rng.randrange(1 if nonzero else 0, P)


def add(a: int, b: int) -> int:
    return (a + b) % P


def sub(a: int, b: int) -> int:
    return (a - b) % P


def mul(a: int, b: int) -> int:
    return (a * b) % P


def neg(a: int) -> int:
    return (-a) % P


def inv(a: int) -> int:
    a %= P
    if a == 0:
        raise DivisionByZero("inverse of 0 mod p")
    return pow(a, -1, P)


def encode_scalar(a: int) -> bytes:
    if not 0 <= a < P:
        raise ValueError("scalar out of range")
    return a.to_bytes(32, "big")


def decode_scalar(data: bytes) -> int:
    if len(data) != 32:
        raise InvalidEncoding(f"scalar must be 32 bytes, got {len(data)}")
    value = int.from_bytes(data, "big")
    if value >= P:
        raise InvalidEncoding("scalar not reduced mod p")
    return value


# -- group elements --------------------------------------------------------

g1: G1Element = G1.generator()
g2: G2Element = G2.generator()

LEN_G1 = len(g1.to_binary())
LEN_G2 = len(g2.to_binary())
LEN_GT = len(GT.generator().to_binary())


def _encode(elem, length: int) -> bytes:
    if elem.is_neutral_element():
        return bytes(length)
    raw = elem.to_binary()
    assert len(raw) == length
    return raw


def _decode(data: bytes, length: int, elem_cls, neutral, name: str):
    if len(data) != length:
        raise InvalidEncoding(f"{name} encoding must be {length} bytes, got {len(data)}")
    if data == bytes(length):
        return neutral()
    try:
        elem = elem_cls.from_binary(bytes(data))
    except Exception as exc:  # petrelic raises bare exceptions on bad input
        raise InvalidEncoding(f"undecodable {name} element") from exc
    # RELIC ignores some prefix bits, so canonicity needs the round trip
    if not elem.is_valid() or elem.to_binary() != data:
        raise InvalidEncoding(f"invalid or non-canonical {name} element")
    return elem


def encode_g1(elem: G1Element) -> bytes:
    return _encode(elem, LEN_G1)


def decode_g1(data: bytes) -> G1Element:
    return _decode(data, LEN_G1, G1Element, G1.neutral_element, "G1")


def encode_g2(elem: G2Element) -> bytes:
    return _encode(elem, LEN_G2)


def decode_g2(data: bytes) -> G2Element:
    return _decode(data, LEN_G2, G2Element, G2.neutral_element, "G2")


def encode_gt(elem: GTElement) -> bytes:
    raw = elem.to_binary()
    assert len(raw) == LEN_GT
    return raw


def decode_gt(data: bytes) -> GTElement:
    if len(data) != LEN_GT:
        raise InvalidEncoding(f"GT encoding must be {LEN_GT} bytes, got {len(data)}")
    try:
        elem = GTElement.from_binary(bytes(data))
    except Exception as exc:
        raise InvalidEncoding("undecodable GT element") from exc
    if not elem.is_valid() or elem.to_binary() != data:
        raise InvalidEncoding("invalid or non-canonical GT element")
    return elem


def random_g1(rng: random.Random | None = None) -> G1Element:
    return g1 ** random_scalar(rng)


def random_g2(rng: random.Random | None = None) -> G2Element:
    return g2 ** random_scalar(rng)


def g1_identity() -> G1Element:
    return G1.neutral_element()


def g2_identity() -> G2Element:
    return G2.neutral_element()


def gt_identity() -> GTElement:
    return GT.unity()


def pair(a: G1Element, b: G2Element) -> GTElement:
    return a.pair(b)


@lru_cache(maxsize=4096)
def hash_to_g2(data: bytes) -> G2Element:
    """Deterministic hash onto G2, domain-separated with the H0 tag.

    RELIC implements the SSWU-based hash-to-curve map for G2; the tag is
    prepended to the input. Results are cached since every client hashes the
    same short-term epoch stamps.
    """
    return G2.hash_to_point(H0_TAG + bytes(data))


SUITE = SuiteDescriptor(
    curve_id="BLS12-381/RELIC-compressed",
    p=P,
    len_scalar=32,
    len_g1=LEN_G1,
    len_g2=LEN_G2,
    len_gt=LEN_GT,
    scalar_byteorder="big",
    g1=encode_g1(g1),
    g2=encode_g2(g2),
)
