"""Hash-bucketed keyword PIR over GF(2^8) with Shamir-shared queries.

The database is a table of ``r`` buckets, each a sorted run of fixed-size
``identifier | value`` entries padded with random dummies to the same length.
A client wanting bucket ``b`` Shamir-shares the standard basis vector ``e_b``
coordinate-wise with degree-``t`` polynomials; server ``k`` (evaluation point
``k + 1``) returns the GF(2^8) linear combination of the buckets weighted by
its shares. Any ``t + 1`` responses interpolate the bucket at zero, and every
extra response is checked against the same polynomial, so a single tampering
server is detected as long as ``t + 2`` responses arrive.
"""

from __future__ import annotations

import bisect
import functools
import hashlib
import hmac
import math
import random
import struct
from dataclasses import dataclass, field

import numpy as np

from . import gf256
from .errors import (
    BadPrivacyLevel,
    BadQuery,
    DuplicateKey,
    InconsistentResponses,
    InvalidEncoding,
    NotEnoughServers,
)
from .group import default_rng

ID_LEN = 32
NUM_BUCKET_KEYS = 10

_META = struct.Struct(">8sIIIQ32s")
META_LEN = _META.size


@dataclass(frozen=True)
class PirMeta:
    epoch_id: bytes
    num_buckets: int
    entries_per_bucket: int
    entry_len: int
    bucket_prf_key: bytes

    @property
    def bucket_bytes(self) -> int:
        return self.entries_per_bucket * self.entry_len

    @property
    def epoch(self) -> int:
        return int.from_bytes(self.epoch_id, "big")

    def to_bytes(self) -> bytes:
        return _META.pack(
            self.epoch_id,
            self.num_buckets,
            self.entries_per_bucket,
            self.entry_len,
            self.bucket_bytes,
            self.bucket_prf_key,
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "PirMeta":
        if len(data) != META_LEN:
            raise InvalidEncoding(f"metadata must be {META_LEN} bytes")
        epoch_id, r, per, entry_len, bucket_bytes, key = _META.unpack(data)
        if r < 1 or entry_len <= ID_LEN or bucket_bytes != per * entry_len:
            raise InvalidEncoding("inconsistent PIR metadata")
        return cls(epoch_id, r, per, entry_len, key)


@dataclass(frozen=True)
class PirDatabase:
    meta: PirMeta
    buckets: np.ndarray  # (num_buckets, bucket_bytes) uint8, read-only
    n_real: int | None = field(default=None, compare=False)

    @property
    def size_bytes(self) -> int:
        return self.buckets.size

    def bucket(self, index: int) -> bytes:
        return self.buckets[index].tobytes()

    @functools.cached_property
    def words(self) -> np.ndarray:
        """Buckets zero-padded to a multiple of 8 bytes and viewed as uint64."""
        r, width = self.buckets.shape
        padded = np.zeros((r, -(-width // 8) * 8), dtype=np.uint8)
        padded[:, :width] = self.buckets
        return padded.view(np.uint64)

    def to_bytes(self) -> bytes:
        return self.meta.to_bytes() + self.buckets.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PirDatabase":
        meta = PirMeta.from_bytes(data[:META_LEN])
        body = data[META_LEN:]
        if len(body) != meta.num_buckets * meta.bucket_bytes:
            raise InvalidEncoding("database body length does not match metadata")
        buckets = np.frombuffer(body, dtype=np.uint8).reshape(
            meta.num_buckets, meta.bucket_bytes
        )
        return cls(meta, buckets)


def encode_epoch_id(epoch: int) -> bytes:
    return epoch.to_bytes(8, "big")


def num_buckets_for(n: int, record_len: int) -> int:
    """``ceil(sqrt(n * s))``, at least 1."""
    r = math.isqrt(n * record_len)
    if r * r < n * record_len:
        r += 1
    return max(r, 1)


def _bucket_index(key: bytes, ident: bytes, r: int) -> int:
    digest = hmac.new(key, ident, hashlib.sha256).digest()
    return int.from_bytes(digest[:8], "big") % r


def bucket_of(meta: PirMeta, ident: bytes) -> int:
    return _bucket_index(meta.bucket_prf_key, ident, meta.num_buckets)


def choose_bucket_key(
    ids: list[bytes], r: int, rng: random.Random, n_keys: int = NUM_BUCKET_KEYS
) -> tuple[bytes, int, list[tuple[bytes, int]]]:
    """Draw ``n_keys`` keys and keep the one whose fullest bucket is smallest.

    Returns ``(key, max_load, candidates)`` where ``candidates`` lists every
    drawn key with its max load, in draw order. Ties go to the first drawn.
    """
    candidates = []
    best_key, best_load = None, None
    for _ in range(n_keys):
        key = rng.randbytes(32)
        loads = np.bincount([_bucket_index(key, i, r) for i in ids], minlength=r)
        load = int(loads.max()) if ids else 0
        candidates.append((key, load))
        if best_load is None or load < best_load:
            best_key, best_load = key, load
    return best_key, best_load, candidates


def build_database(
    entries: list[tuple[bytes, bytes]],
    epoch: int,
    value_len: int | None = None,
    rng: random.Random | None = None,
) -> PirDatabase:
    """Compile ``(identifier, value)`` pairs into a padded bucket table."""
    rng = rng or default_rng()
    if entries:
        lengths = {len(v) for _, v in entries}
        if len(lengths) != 1:
            raise ValueError("all values must have the same length")
        (s_val,) = lengths
        if value_len is not None and value_len != s_val:
            raise ValueError("value length does not match declared value_len")
    elif value_len is None:
        raise ValueError("value_len is required for an empty database")
    else:
        s_val = value_len
    if s_val < 1:
        raise ValueError("values must be non-empty")
    ids = [bytes(i) for i, _ in entries]
    if any(len(i) != ID_LEN for i in ids):
        raise ValueError("identifiers must be 32 bytes")
    if len(set(ids)) != len(ids):
        raise DuplicateKey("duplicate identifier in database build")

    entry_len = ID_LEN + s_val
    n = len(entries)
    # s is the record (value) size; the identifier rides along in each entry
    r = num_buckets_for(n, s_val)
    key, max_load, _ = choose_bucket_key(ids, r, rng)
    per = max(max_load, 1)

    table: list[list[bytes]] = [[] for _ in range(r)]
    for ident, value in entries:
        table[_bucket_index(key, ident, r)].append(ident + value)
    buckets = np.empty((r, per * entry_len), dtype=np.uint8)
    for b, rows in enumerate(table):
        while len(rows) < per:
            rows.append(rng.randbytes(entry_len))
        rows.sort(key=lambda e: e[:ID_LEN])
        buckets[b] = np.frombuffer(b"".join(rows), dtype=np.uint8)
    buckets.setflags(write=False)
    meta = PirMeta(encode_epoch_id(epoch), r, per, entry_len, key)
    return PirDatabase(meta, buckets, n_real=n)


def check_privacy_level(t: int, n_servers: int) -> None:
    if t < 0 or t > n_servers - 2:
        raise BadPrivacyLevel(f"privacy level {t} invalid for {n_servers} servers")


def make_query(
    meta: PirMeta,
    bucket_index: int,
    t: int,
    n_servers: int,
    rng: random.Random | None = None,
) -> list[bytes]:
    """Per-server query vectors (``r`` bytes each) selecting ``bucket_index``."""
    check_privacy_level(t, n_servers)
    r = meta.num_buckets
    if not 0 <= bucket_index < r:
        raise ValueError("bucket index out of range")
    rng = rng or default_rng()
    secret = np.zeros(r, dtype=np.uint8)
    secret[bucket_index] = 1
    coeffs = [np.frombuffer(rng.randbytes(r), dtype=np.uint8) for _ in range(t)]
    queries = []
    for k in range(n_servers):
        x = k + 1
        share = secret.copy()
        xp = 1
        for c in coeffs:
            xp = gf256.mul(xp, x)
            share ^= gf256.MUL[xp][c]
        queries.append(share.tobytes())
    return queries


def answer_query(db: PirDatabase, query: bytes) -> bytes:
    """Return sum_c q[c] * bucket[c] over GF(2^8).

    Splits ``q`` into its eight bit planes: plane ``k`` XORs together the
    buckets whose coefficient has bit ``k`` set, then one table lookup scales
    that sum by ``2^k``. Same result as the byte-wise product, far less memory
    traffic.
    """
    q = np.frombuffer(query, dtype=np.uint8)
    if q.size != db.meta.num_buckets:
        raise BadQuery(f"query has {q.size} coordinates, database has {db.meta.num_buckets}")
    words = db.words
    out = np.zeros(words.shape[1] * 8, dtype=np.uint8)
    for k in range(8):
        mask = (q >> k) & 1 == 1
        if not mask.any():
            continue
        plane = np.bitwise_xor.reduce(words[mask], axis=0).view(np.uint8)
        out ^= gf256.MUL[1 << k][plane]
    return out[: db.meta.bucket_bytes].tobytes()


def reconstruct(responses: list[tuple[int, bytes]], t: int) -> bytes:
    """Interpolate the requested bucket from ``(server_index, response)`` pairs.

    The first ``t + 1`` responses determine the result. Any further response
    must agree with the same degree-``t`` polynomial, otherwise
    ``InconsistentResponses`` is raised. With exactly ``t + 1`` responses
    nothing can be checked.
    """
    if len(responses) < t + 1:
        raise NotEnoughServers(f"need {t + 1} responses, got {len(responses)}")
    lengths = {len(r) for _, r in responses}
    if len(lengths) != 1:
        raise InconsistentResponses("responses differ in length")
    xs = [k + 1 for k, _ in responses]
    if len(set(xs)) != len(xs):
        raise ValueError("duplicate server index")
    rows = [np.frombuffer(r, dtype=np.uint8) for _, r in responses]
    base_x, base_rows = xs[: t + 1], rows[: t + 1]
    bucket = gf256.combine(gf256.lagrange_weights(base_x, 0), base_rows)
    bad = []
    for (k, _), x, row in zip(responses[t + 1 :], xs[t + 1 :], rows[t + 1 :]):
        predicted = gf256.combine(gf256.lagrange_weights(base_x, x), base_rows)
        if not np.array_equal(predicted, row):
            bad.append(k)
    if bad:
        raise InconsistentResponses(
            f"responses from servers {bad} disagree with the interpolated polynomial",
            servers=tuple(bad),
        )
    return bucket.tobytes()


def scan_bucket(bucket: bytes, ident: bytes, entry_len: int) -> bytes | None:
    """Binary-search a reconstructed bucket; ``None`` when ``ident`` is absent."""
    if len(bucket) % entry_len:
        raise ValueError("bucket length is not a multiple of the entry length")
    count = len(bucket) // entry_len
    keys = [bucket[k * entry_len : k * entry_len + ID_LEN] for k in range(count)]
    pos = bisect.bisect_left(keys, ident)
    if pos < count and keys[pos] == ident:
        start = pos * entry_len + ID_LEN
        return bucket[start : (pos + 1) * entry_len]
    return None
