"""GF(2^8) with the AES reduction polynomial x^8 + x^4 + x^3 + x + 1.

Multiplication is table driven: ``MUL[a, b]`` is a full 256x256 product table
built from log/antilog tables with generator 3. Addition is XOR.
"""

from __future__ import annotations

import numpy as np

POLY = 0x11B
GENERATOR = 0x03


def _build_tables() -> tuple[np.ndarray, np.ndarray]:
    exp = np.zeros(512, dtype=np.uint8)
    log = np.zeros(256, dtype=np.int32)
    x = 1
    for k in range(255):
        exp[k] = x
        log[x] = k
        # multiply by 3 = x * 2 ^ x
        x2 = x << 1
        if x2 & 0x100:
            x2 ^= POLY
        x = x2 ^ x
    exp[255:510] = exp[:255]
    return exp, log


EXP, LOG = _build_tables()


def _build_mul() -> np.ndarray:
    a = np.arange(256)
    table = EXP[(LOG[a][:, None] + LOG[a][None, :]) % 255].astype(np.uint8)
    table[0, :] = 0
    table[:, 0] = 0
    return table


MUL = _build_mul()
INV = np.zeros(256, dtype=np.uint8)
INV[1:] = EXP[(255 - LOG[np.arange(1, 256)]) % 255]


def mul(a: int, b: int) -> int:
    return int(MUL[a, b])


def inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(2^8)")
    return int(INV[a])


def div(a: int, b: int) -> int:
    return mul(a, inv(b))


def scale(c: int, data: np.ndarray) -> np.ndarray:
    """Multiply every byte of ``data`` by the field element ``c``."""
    return MUL[c][data]


def lagrange_weights(xs: list[int], at: int) -> list[int]:
    """Weights ``w_k`` with ``f(at) = sum_k w_k f(xs[k])`` for deg f < len(xs)."""
    weights = []
    for k, xk in enumerate(xs):
        num, den = 1, 1
        for m, xm in enumerate(xs):
            if m != k:
                num = mul(num, at ^ xm)
                den = mul(den, xk ^ xm)
        weights.append(div(num, den))
    return weights


def combine(weights: list[int], rows: list[np.ndarray]) -> np.ndarray:
    out = np.zeros_like(rows[0])
    for w, row in zip(weights, rows):
        if w:
            out ^= MUL[w][row]
    return out
