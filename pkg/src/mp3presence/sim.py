"""Deterministic in-process simulation with exact byte accounting.

Every registration, database build and metadata exchange runs for real. In
``full`` mode every client also performs its lookups cryptographically and
every report is checked against ground truth. In ``metered`` mode only a
sample of observer clients does so; the remaining clients' PIR exchanges are
metered at their exact wire sizes (which depend only on the public metadata)
without materialising the shares, so that sweeps over thousands of clients
with ``N_fmax = 100`` stay within desk-scale compute.
"""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import broadcast, group, pir, records
from .client import Client, LtOutcome, ProtocolParams, Status, TierEndpoints
from .errors import AuthFailure, SelfRevoked
from .server_lookup import LookupServer
from .server_reg import LONG, SHORT, RegistrationServer
from .transport import InProcessTransport, Meter
from .wire import MsgType


@dataclass
class SimConfig:
    N: int
    n_fmax: int = 10
    n_rev: int = 1
    n_lookup: int = 3
    t: int = 1
    lt_epochs: int = 3
    st_epochs_per_lt: int = 5
    seed: int = 0
    online_probability: float = 1.0
    revocation_rate: float = 0.0
    friends_per_client: int | None = None
    pir_mode: str = "full"
    observers: int = 4
    # (client index, first absent long-term epoch, number of epochs absent)
    skips: list[tuple[int, int, int]] = field(default_factory=list)
    # (long-term epoch j, client) pairs: the client revokes one random follower in record j
    scheduled_revocations: list[tuple[int, int]] = field(default_factory=list)
    h_keep: int = 30
    msg_len: int = records.MESSAGE_LEN
    dp5_record_len: int | None = None

    @property
    def friends(self) -> int:
        if self.friends_per_client is not None:
            return self.friends_per_client
        return self.n_fmax // 2

    def validate(self) -> None:
        problems = []
        if self.N < 1:
            problems.append("N must be positive")
        if not 0 <= self.t <= self.n_lookup - 2:
            problems.append("t must satisfy 0 <= t <= n_lookup - 2")
        if self.n_rev < 1:
            problems.append("n_rev must be at least 1")
        if self.friends > self.n_fmax:
            problems.append("friends_per_client exceeds n_fmax")
        if self.N > 1 and self.friends > self.N - 1:
            problems.append("friends_per_client exceeds N - 1")
        if self.pir_mode not in ("full", "metered"):
            problems.append("pir_mode must be 'full' or 'metered'")
        if not 0.0 <= self.online_probability <= 1.0:
            problems.append("online_probability must be in [0, 1]")
        if not 0.0 <= self.revocation_rate <= 1.0:
            problems.append("revocation_rate must be in [0, 1]")
        if self.lt_epochs < 1 or self.st_epochs_per_lt < 1:
            problems.append("need at least one epoch of each kind")
        for c, start, count in self.skips:
            if not 0 <= c < self.N or start < 1 or count < 1:
                problems.append(f"bad skip entry {(c, start, count)}")
        for j, c in self.scheduled_revocations:
            if not 0 <= c < self.N or not 1 <= j <= self.lt_epochs:
                problems.append(f"bad scheduled revocation {(j, c)}")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("skips", "scheduled_revocations"):
            if key in data:
                data[key] = [tuple(s) for s in data[key]]
        return cls(**data)


@dataclass
class MetricsRow:
    N: int
    kind: str
    index: int
    db_bytes: int
    db_records: int
    reg_server_in_bytes: int
    lookup_server_in_bytes: int
    lookup_server_out_bytes: int
    client_in_bytes: float
    client_out_bytes: float
    dp5_baseline_records: int
    dp5_baseline_bytes: int


@dataclass
class SimResult:
    config: SimConfig
    rows: list[MetricsRow]
    mismatches: list[str]
    # per row: (sum of client out-bytes, sum of server in-bytes)
    conservation: list[tuple[int, int]]
    checks: dict[str, int]


# -- DP5 baseline ------------------------------------------------------------

def padded_bucket_bytes(n: int, record_len: int) -> int:
    """Bucket-table size with every bucket padded to ``n/r + sqrt(n/r)`` records."""
    r = pir.num_buckets_for(n, record_len)
    per = max(1, math.ceil(n / r + math.sqrt(n / r)))
    return r * per * record_len


def dp5_record_len(cfg: SimConfig) -> int:
    """Per-record length of the baseline; defaults to our short-term entry length."""
    return cfg.dp5_record_len or (pir.ID_LEN + records.st_ct_len(cfg.msg_len))


def dp5_baseline(cfg: SimConfig, record_len: int | None = None) -> tuple[int, int]:
    """Analytic DP5 long-term database: one record per (user, friend slot)."""
    if record_len is None:
        record_len = dp5_record_len(cfg)
    n = cfg.N * cfg.n_fmax
    return n, padded_bucket_bytes(n, record_len)


# -- scaling fits ----------------------------------------------------------

QUANTITIES = {
    "lt_db_bytes": ("lt", lambda r: r.db_bytes),
    "lt_reg_server_in_bytes": ("lt", lambda r: r.reg_server_in_bytes),
    "lt_lookup_server_bytes": ("lt", lambda r: r.lookup_server_in_bytes + r.lookup_server_out_bytes),
    "lt_client_bytes": ("lt", lambda r: r.client_in_bytes + r.client_out_bytes),
    "st_db_bytes": ("st", lambda r: r.db_bytes),
    "st_reg_server_in_bytes": ("st", lambda r: r.reg_server_in_bytes),
    "st_lookup_server_bytes": ("st", lambda r: r.lookup_server_in_bytes + r.lookup_server_out_bytes),
    "st_client_bytes": ("st", lambda r: r.client_in_bytes + r.client_out_bytes),
    "dp5_lt_db_bytes": ("lt", lambda r: r.dp5_baseline_bytes),
}


@dataclass(frozen=True)
class Fit:
    quantity: str
    slope: float
    r2: float


def loglog_fit(xs, ys) -> tuple[float, float]:
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def fit_scaling(rows: list[MetricsRow]) -> list[Fit]:
    """Log-log slope of each quantity (mean per epoch) against N."""
    ns = sorted({r.N for r in rows})
    if len(ns) < 4:
        raise ValueError("need at least 4 distinct N values to fit")
    fits = []
    for name, (kind, get) in QUANTITIES.items():
        ys = []
        for n in ns:
            vals = [get(r) for r in rows if r.N == n and r.kind == kind]
            ys.append(float(np.mean(vals)))
        if min(ys) <= 0:
            continue
        slope, r2 = loglog_fit(ns, ys)
        fits.append(Fit(name, slope, r2))
    return fits


# -- CSV -------------------------------------------------------------------

def rows_to_csv(rows: list[MetricsRow]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=[f.name for f in fields(MetricsRow)], lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(asdict(row))
    return out.getvalue()


def fits_to_csv(fits: list[Fit]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["quantity", "slope", "r2"])
    for f in fits:
        writer.writerow([f.quantity, f"{f.slope:.6f}", f"{f.r2:.6f}"])
    return out.getvalue()


# -- simulation ------------------------------------------------------------

class _World:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.meter = Meter()
        push_meter = Meter()
        self.lookups = {
            LONG: [LookupServer(k, cfg.h_keep) for k in range(cfg.n_lookup)],
            SHORT: [LookupServer(k, 1) for k in range(cfg.n_lookup)],
        }
        self.regs = {}
        for tier, first in ((LONG, 1), (SHORT, cfg.st_epochs_per_lt)):
            pushes = [
                InProcessTransport(lk, push_meter, f"reg:{tier}", f"push:{tier}:{k}")
                for k, lk in enumerate(self.lookups[tier])
            ]
            self.regs[tier] = RegistrationServer(
                tier, cfg.n_rev, pushes, h_keep=cfg.h_keep if tier == LONG else 1,
                msg_len=cfg.msg_len, first_epoch=first, rng=self.rng,
            )
        self.params = ProtocolParams(
            n_fmax=cfg.n_fmax, n_rev=cfg.n_rev, t=cfg.t, h_keep=cfg.h_keep,
            st_per_lt=cfg.st_epochs_per_lt, msg_len=cfg.msg_len,
        )
        self.clients = [self._make_client(c) for c in range(cfg.N)]

    def _endpoints(self, c: int, tier: str) -> TierEndpoints:
        label = f"client:{c}"
        return TierEndpoints(
            registration=InProcessTransport(self.regs[tier], self.meter, label, f"reg:{tier}"),
            lookups=[
                InProcessTransport(lk, self.meter, label, f"lookup:{tier}:{k}")
                for k, lk in enumerate(self.lookups[tier])
            ],
        )

    def _make_client(self, c: int) -> Client:
        return Client(
            self.params, self._endpoints(c, LONG), self._endpoints(c, SHORT),
            rng=random.Random(self.rng.getrandbits(64)), epoch=0,
        )


def _name(c: int) -> str:
    return f"c{c}"


def _meter_lookup(client: Client, tier: str, epoch: int, params: ProtocolParams) -> None:
    """Exchange real metadata frames, then meter the padded PIR traffic."""
    from .client import majority_meta

    endpoints = client.long if tier == LONG else client.short
    meta = majority_meta(endpoints.lookups, epoch)
    for lookup in endpoints.lookups:
        lookup.account(MsgType.PIR_QUERY, meta.num_buckets, MsgType.PIR_RESPONSE,
                       meta.bucket_bytes, count=params.n_fmax)


def expected_b(follower_dk: broadcast.DecryptionKey, mk: broadcast.ManagerKey):
    """What a correctly updated member key must hold, from manager secrets."""
    return mk.H ** group.inv(group.add(mk.gamma, follower_dk.x))


def run_sim(cfg: SimConfig) -> SimResult:
    cfg.validate()
    w = _World(cfg)
    rng = w.rng
    N, S = cfg.N, cfg.st_epochs_per_lt
    st_record_len = dp5_record_len(cfg)
    mismatches: list[str] = []
    checks = {"lt_reports": 0, "st_reports": 0, "online_seen": 0, "revocations_seen": 0}

    # follows[b] = list of followees of b
    follows: list[list[int]] = [[] for _ in range(N)]
    followers = [0] * N
    for b in range(N):
        others = [a for a in range(N) if a != b]
        rng.shuffle(others)
        for a in others:
            if len(follows[b]) >= cfg.friends:
                break
            if followers[a] >= cfg.n_fmax:
                continue
            bundle = w.clients[a].befriend_out(_name(b))
            w.clients[b].befriend_in(_name(a), bundle)
            follows[b].append(a)
            followers[a] += 1

    if cfg.pir_mode == "full":
        observers = set(range(N))
    else:
        observers = set(rng.sample(range(N), min(cfg.observers, N)))

    absent = set()
    for c, start, count in cfg.skips:
        absent.update((c, j) for j in range(start, start + count))

    def present(c: int, j: int) -> bool:
        return (c, j) not in absent

    # ground truth
    registered_lt: dict[int, set[int]] = {}       # j -> clients with a record for j
    revoked_at: dict[tuple[int, int], int] = {}  # (follower, followee) -> j of publication
    pending_truth: list[list[int]] = [[] for _ in range(N)]  # followee -> follower queue
    terminated: set[tuple[int, int]] = set()
    rows: list[MetricsRow] = []
    conservation: list[tuple[int, int]] = []

    def snapshot_row(kind: str, index: int, db: pir.PirDatabase, n_records: int,
                     dp5: tuple[int, int]) -> None:
        m = w.meter
        client_out = m.total_out("client:")
        client_in = m.total_in("client:")
        reg_in = m.total_in("reg:")
        lookup_in = m.total_in("lookup:")
        lookup_out = m.total_out("lookup:")
        rows.append(MetricsRow(
            N=N, kind=kind, index=index, db_bytes=db.size_bytes, db_records=n_records,
            reg_server_in_bytes=reg_in, lookup_server_in_bytes=lookup_in,
            lookup_server_out_bytes=lookup_out, client_in_bytes=client_in / N,
            client_out_bytes=client_out / N, dp5_baseline_records=dp5[0],
            dp5_baseline_bytes=dp5[1],
        ))
        conservation.append((client_out, reg_in + lookup_in))
        m.reset()

    def revoke_random(a: int) -> None:
        live = sorted(w.clients[a].granted)
        if live:
            victim = rng.choice(live)
            w.clients[a].revoke(victim)
            pending_truth[a].append(int(victim[1:]))

    last_record: dict[int, tuple[int, records.LongTermRecord]] = {}

    for j in range(1, cfg.lt_epochs + 1):
        # revocations decided during j - 1, published with the record for j
        for when, a in cfg.scheduled_revocations:
            if when == j:
                revoke_random(a)
        if cfg.revocation_rate > 0:
            for a in range(N):
                if present(a, j - 1) and rng.random() < cfg.revocation_rate:
                    revoke_random(a)

        # long-term registration for j, during j - 1
        reg = w.regs[LONG]
        registered_lt[j] = set()
        for a in range(N):
            if not present(a, j - 1):
                continue
            last_record[a] = (j, w.clients[a].register_long_term(j))
            registered_lt[j].add(a)
            for b in pending_truth[a][: cfg.n_rev]:
                revoked_at[(b, a)] = j
            del pending_truth[a][: cfg.n_rev]
        db = reg.close_epoch()

        # long-term lookups during j
        for b in range(N):
            if not present(b, j):
                continue
            client = w.clients[b]
            if b not in observers:
                _meter_lookup(client, LONG, j, w.params)
                continue
            before = client.lt_lookup_epoch
            reports = client.sync_long_term(j)
            first = j - len(reports) + 1
            for jj, outcome in zip(range(first, j + 1), reports):
                for a in follows[b]:
                    got = outcome[_name(a)]
                    if (b, a) in terminated:
                        want = LtOutcome.TERMINATED
                    elif revoked_at.get((b, a)) == jj:
                        want = LtOutcome.REVOKED
                    elif a in registered_lt.get(jj, ()):
                        want = LtOutcome.UPDATED
                    else:
                        want = LtOutcome.OFFLINE
                    checks["lt_reports"] += 1
                    if got != want:
                        mismatches.append(f"lt j={jj} {b}->{a}: got {got.value}, want {want.value}")
                    if got == LtOutcome.REVOKED:
                        checks["revocations_seen"] += 1
                        terminated.add((b, a))
            if before is not None and before < j - 1:
                checks["catch_ups"] = checks.get("catch_ups", 0) + 1
            for a in follows[b]:
                friend = client.friends[_name(a)]
                if (b, a) in terminated:
                    # the stale key must stay useless on every later record
                    if a in last_record and last_record[a][0] > revoked_at[(b, a)]:
                        jj, rec = last_record[a]
                        checks["post_revocation_attempts"] = checks.get("post_revocation_attempts", 0) + 1
                        try:
                            records.read_lt_record(rec, friend.dk, jj)
                        except (SelfRevoked, AuthFailure):
                            pass
                        else:
                            mismatches.append(f"revoked {b} decrypted {a}'s record {jj}")
                    continue
                owner = w.clients[a]
                latest = owner.latest_epoch
                if (
                    friend.known_lt_pk != owner.keys_by_epoch[latest].lt_keypair.public
                    or friend.dk.B != expected_b(friend.dk, owner.mk)
                    or friend.known_presence_pub != (
                        owner.keys_by_epoch[latest].presence_pub if latest > 0 else None
                    )
                ):
                    mismatches.append(f"state j={j} {b}->{a}: key chain out of sync")
        snapshot_row("lt", j, db, db.n_real, dp5_baseline(cfg))

        # short-term epochs inside j
        for i in range(j * S, (j + 1) * S):
            online: dict[int, bytes] = {}
            for a in range(N):
                if not present(a, j) or j not in w.clients[a].keys_by_epoch:
                    continue
                if rng.random() >= cfg.online_probability:
                    continue
                message = f"client {a} online at {i}".encode()
                w.clients[a].register_short_term(i, message)
                online[a] = message
            sdb = w.regs[SHORT].close_epoch()
            for b in range(N):
                if not present(b, j):
                    continue
                client = w.clients[b]
                if b not in observers:
                    _meter_lookup(client, SHORT, i, w.params)
                    continue
                report = client.lookup_short_term(i)
                for a in follows[b]:
                    got = report[_name(a)]
                    if (b, a) in terminated or a not in registered_lt.get(j, ()):
                        want_status, want_msg = Status.UNKNOWN, None
                    elif a in online:
                        want_status, want_msg = Status.ONLINE, online[a]
                    else:
                        want_status, want_msg = Status.OFFLINE, None
                    checks["st_reports"] += 1
                    if got.status == Status.ONLINE:
                        checks["online_seen"] += 1
                    if got.status != want_status or got.message != want_msg:
                        mismatches.append(
                            f"st i={i} {b}->{a}: got {got.status.value}, want {want_status.value}"
                        )
            # the short-term tier is structurally the same in both designs
            snapshot_row("st", i, sdb, sdb.n_real,
                         (sdb.n_real, padded_bucket_bytes(sdb.n_real, st_record_len)))

    return SimResult(cfg, rows, mismatches, conservation, checks)


def sweep(base: SimConfig, ns: list[int]) -> list[MetricsRow]:
    rows = []
    for n in ns:
        cfg = SimConfig(**{**asdict(base), "N": n})
        rows.extend(run_sim(cfg).rows)
    return rows
