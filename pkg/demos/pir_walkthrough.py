"""Keyword PIR over three servers, one of them lying.

Builds a bucketed database, fetches a record without any single server
learning which bucket was asked for, then shows a corrupted answer caught.
"""

import random

from mp3presence import pir
from mp3presence.errors import InconsistentResponses

rng = random.Random(3)
entries = {rng.randbytes(32): rng.randbytes(48) for _ in range(300)}
db = pir.build_database(list(entries.items()), 1, 48, rng)
meta = db.meta
print(f"{db.n_real} records -> {meta.num_buckets} buckets of {meta.entries_per_bucket} entries "
      f"({len(db.to_bytes())} bytes padded)")

target = next(iter(entries))
bucket = pir.bucket_of(meta, target)
queries = pir.make_query(meta, bucket, 1, 3, rng)
print(f"target lives in bucket {bucket}; server 0 sees query bytes {queries[0][:8].hex()}...")

answers = [(k, pir.answer_query(db, q)) for k, q in enumerate(queries)]
value = pir.scan_bucket(pir.reconstruct(answers, 1), target, meta.entry_len)
print(f"recovered value matches: {value == entries[target]}")

bad = bytearray(answers[1][1])
bad[5] ^= 0x40
try:
    pir.reconstruct([answers[0], (1, bytes(bad)), answers[2]], 1)
except InconsistentResponses as exc:
    print(f"tampered answer rejected: {exc}")
