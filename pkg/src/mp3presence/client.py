"""Client state machine for both tiers.

A client is a broadcast manager for its own followers and a follower of the
friends whose bundles it imported. Per long-term epoch it registers one record
carrying its next keys, and it looks up exactly ``n_fmax`` identifiers per
lookup server in both tiers no matter how many friends it really has.
"""

from __future__ import annotations

import enum
import json
import logging
import random
import struct
from collections import Counter
from dataclasses import dataclass, field

from . import broadcast, group, pir, primitives, records, wire
from .broadcast import DecryptionKey, ManagerKey
from .errors import (
    AuthFailure,
    BadSignature,
    FriendLimitReached,
    InconsistentResponses,
    InvalidEncoding,
    MalformedRecord,
    MetaDisagreement,
    MP3Error,
    NeedRekey,
    SelfRevoked,
    UnknownEpoch,
)
from .group import G1Element
from .pir import PirMeta
from .records import ClientEpochKeys
from .transport import Transport
from .wire import Frame, MsgType

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProtocolParams:
    n_fmax: int = 100
    n_rev: int = 1
    t: int = 1
    h_keep: int = 30
    st_per_lt: int = 288
    msg_len: int = records.MESSAGE_LEN


@dataclass
class TierEndpoints:
    registration: Transport
    lookups: list[Transport]


class LtOutcome(enum.Enum):
    UPDATED = "updated"
    OFFLINE = "offline"
    BAD_SIGNATURE = "bad-signature"
    REVOKED = "revoked"
    AUTH_FAILED = "auth-failed"
    TERMINATED = "terminated"


class Status(enum.Enum):
    ONLINE = "online"
    OFFLINE = "offline"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Presence:
    status: Status
    message: bytes | None = None


@dataclass
class FriendState:
    dk: DecryptionKey
    known_lt_pk: bytes
    last_processed_lt_epoch: int
    known_presence_pub: G1Element | None = None
    terminated: bool = False


@dataclass(frozen=True)
class OutOfBandBundle:
    """Decryption key plus the issuer's current long-term key and its epoch."""

    dk: DecryptionKey
    lt_pk: bytes
    epoch: int

    def to_bytes(self) -> bytes:
        return self.dk.to_bytes() + self.lt_pk + self.epoch.to_bytes(8, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "OutOfBandBundle":
        if len(data) != broadcast.DK_LEN + 32 + 8:
            raise InvalidEncoding("bundle has the wrong length")
        dk = DecryptionKey.from_bytes(data[: broadcast.DK_LEN])
        pk = data[broadcast.DK_LEN : broadcast.DK_LEN + 32]
        return cls(dk, bytes(pk), int.from_bytes(data[-8:], "big"))


@dataclass
class _Unacked:
    record: bytes
    mk: ManagerKey
    keys: ClientEpochKeys
    consumed: int


def majority_meta(lookups: list[Transport], epoch: int) -> PirMeta:
    """Ask every server for metadata; accept only a strict majority."""
    votes: Counter[bytes] = Counter()
    unknown = 0
    for lookup in lookups:
        try:
            reply = wire.raise_for_error(lookup.request(Frame(MsgType.GET_META, epoch)))
        except UnknownEpoch:
            unknown += 1
            continue
        except MP3Error as exc:
            log.warning("metadata request failed: %s", exc)
            continue
        votes[reply.payload] += 1
    if unknown * 2 > len(lookups):
        raise UnknownEpoch(f"epoch {epoch} is not retained by the lookup servers")
    if votes:
        payload, count = votes.most_common(1)[0]
        if count * 2 > len(lookups):
            return PirMeta.from_bytes(payload)
    raise MetaDisagreement(f"no strict majority of metadata for epoch {epoch}")


def private_fetch(
    lookups: list[Transport],
    meta: PirMeta,
    idents: list[bytes],
    t: int,
    rng: random.Random,
) -> list[bytes | None]:
    """PIR-fetch the value stored under each identifier (``None`` if absent).

    Every identifier costs one query frame per lookup server. All buckets are
    reconstructed before anything is scanned, and the first inconsistency
    aborts the whole batch.
    """
    epoch = meta.epoch
    n = len(lookups)
    buckets = []
    for ident in idents:
        queries = pir.make_query(meta, pir.bucket_of(meta, ident), t, n, rng)
        responses = []
        for k, (lookup, q) in enumerate(zip(lookups, queries)):
            try:
                reply = wire.raise_for_error(lookup.request(Frame(MsgType.PIR_QUERY, epoch, q)))
            except MP3Error as exc:
                log.warning("lookup server %d failed: %s", k, exc)
                continue
            responses.append((k, reply.payload))
        buckets.append(pir.reconstruct(responses, t))
    return [pir.scan_bucket(b, ident, meta.entry_len) for b, ident in zip(buckets, idents)]


class Client:
    def __init__(
        self,
        params: ProtocolParams,
        long: TierEndpoints | None = None,
        short: TierEndpoints | None = None,
        rng: random.Random | None = None,
        epoch: int = 0,
    ):
        self.params = params
        self.long = long
        self.short = short
        self.rng = rng or group.default_rng()
        self.mk = broadcast.setup(self.rng)
        self.keys_by_epoch: dict[int, ClientEpochKeys] = {epoch: ClientEpochKeys.generate(self.rng)}
        self.pending_revocations: list[int] = []
        self.granted: dict[str, int] = {}
        self.friends: dict[str, FriendState] = {}
        self.lt_lookup_epoch: int | None = None
        self.flagged_servers: set[int] = set()
        self._unacked: dict[int, _Unacked] = {}
        # short-term epoch -> (message, record bytes) already sealed for it
        self._st_sealed: dict[int, tuple[bytes, bytes]] = {}

    # -- friends -------------------------------------------------------

    @property
    def latest_epoch(self) -> int:
        return max(self.keys_by_epoch)

    def befriend_out(self, name: str) -> OutOfBandBundle:
        """Let ``name`` follow us: issue a key bundle to hand over out of band."""
        if name in self.granted:
            raise ValueError(f"{name!r} already holds a key")
        if len(self.granted) >= self.params.n_fmax:
            raise FriendLimitReached(f"already {self.params.n_fmax} followers")
        dk = broadcast.grant(self.mk, self.rng)
        self.granted[name] = dk.x
        latest = self.latest_epoch
        return OutOfBandBundle(dk, self.keys_by_epoch[latest].lt_keypair.public, latest)

    def befriend_in(self, name: str, bundle: OutOfBandBundle) -> None:
        active = [f for f in self.friends.values() if not f.terminated]
        if name not in self.friends and len(active) >= self.params.n_fmax:
            raise FriendLimitReached(f"already following {self.params.n_fmax} friends")
        self.friends[name] = FriendState(bundle.dk, bundle.lt_pk, bundle.epoch)

    def revoke(self, name: str) -> None:
        """Queue ``name`` for revocation in the next long-term registration."""
        self.pending_revocations.append(self.granted.pop(name))

    # -- long-term -----------------------------------------------------

    def register_long_term(self, j: int) -> records.LongTermRecord:
        """Register keys for long-term epoch ``j`` (call during ``j - 1``).

        Key material and manager state are committed only once the server
        acknowledges; a retry for the same ``j`` resends identical bytes.
        """
        n_rev = self.params.n_rev
        pending = self._unacked.get(j)
        if pending is None:
            prior = [e for e in self.keys_by_epoch if e < j]
            if not prior:
                raise MP3Error(f"no earlier keys to chain epoch {j} from")
            prev_keys = self.keys_by_epoch[max(prior)]
            mk = self.mk.copy()
            consumed = self.pending_revocations[:n_rev]
            new_keys = ClientEpochKeys.generate(self.rng)
            record = records.make_lt_record(prev_keys, new_keys, mk, consumed, n_rev, j, self.rng)
            pending = _Unacked(record.to_bytes(), mk, new_keys, len(consumed))
            self._unacked[j] = pending
        reply = self.long.registration.request(Frame(MsgType.REGISTER_LT, j, pending.record))
        del self._unacked[j]
        wire.raise_for_error(reply)
        self.mk = pending.mk
        self.keys_by_epoch[j] = pending.keys
        del self.pending_revocations[: pending.consumed]
        self._prune_keys()
        return records.LongTermRecord.from_bytes(pending.record, n_rev)

    def _prune_keys(self) -> None:
        for e in sorted(self.keys_by_epoch)[:-3]:
            del self.keys_by_epoch[e]

    def _padded(self, idents: list[bytes]) -> tuple[list[bytes], list[int]]:
        """Pad to ``n_fmax`` with random identifiers and shuffle.

        Returns the padded list and, for each input, its position in it.
        """
        n_fmax = self.params.n_fmax
        if len(idents) > n_fmax:
            raise FriendLimitReached("more friends than lookup slots")
        slots = list(idents) + [self.rng.randbytes(32) for _ in range(n_fmax - len(idents))]
        order = list(range(n_fmax))
        self.rng.shuffle(order)
        padded = [slots[k] for k in order]
        position = {src: dst for dst, src in enumerate(order)}
        return padded, [position[k] for k in range(len(idents))]

    def lookup_long_term(self, j: int) -> dict[str, LtOutcome]:
        """Fetch every friend's epoch-``j`` record and advance their key chains."""
        meta = majority_meta(self.long.lookups, j)
        if meta.epoch != j:
            raise MetaDisagreement("metadata is for a different epoch")
        names = [n for n, f in self.friends.items() if not f.terminated]
        idents = [records.lt_record_id(self.friends[n].known_lt_pk) for n in names]
        padded, where = self._padded(idents)
        try:
            values = private_fetch(self.long.lookups, meta, padded, self.params.t, self.rng)
        except InconsistentResponses as exc:
            self.flagged_servers.update(exc.servers)
            raise

        outcomes = {n: LtOutcome.TERMINATED for n, f in self.friends.items() if f.terminated}
        for name, pos in zip(names, where):
            friend = self.friends[name]
            value = values[pos]
            if value is None:
                outcomes[name] = LtOutcome.OFFLINE
                continue
            try:
                record = records.LongTermRecord.from_value(friend.known_lt_pk, value, self.params.n_rev)
                dk, next_pk, presence_pub = records.read_lt_record(record, friend.dk, j)
            except (BadSignature, MalformedRecord):
                outcomes[name] = LtOutcome.BAD_SIGNATURE
                continue
            except SelfRevoked:
                friend.terminated = True
                outcomes[name] = LtOutcome.REVOKED
                continue
            except (AuthFailure, InvalidEncoding):
                friend.terminated = True
                outcomes[name] = LtOutcome.AUTH_FAILED
                continue
            friend.dk = dk
            friend.known_lt_pk = next_pk
            friend.known_presence_pub = presence_pub
            friend.last_processed_lt_epoch = j
            outcomes[name] = LtOutcome.UPDATED
        self.lt_lookup_epoch = j
        return outcomes

    def catch_up(self, from_epoch: int, to_epoch: int) -> list[dict[str, LtOutcome]]:
        """Replay every long-term lookup in ``[from_epoch, to_epoch]`` in order."""
        if to_epoch < from_epoch:
            return []
        if to_epoch - from_epoch + 1 > self.params.h_keep:
            raise NeedRekey(
                f"{to_epoch - from_epoch + 1} missed epochs exceed the {self.params.h_keep}-epoch history"
            )
        results = []
        for j in range(from_epoch, to_epoch + 1):
            try:
                results.append(self.lookup_long_term(j))
            except UnknownEpoch as exc:
                raise NeedRekey(str(exc)) from exc
        return results

    def sync_long_term(self, j: int) -> list[dict[str, LtOutcome]]:
        """Look up epoch ``j``, first catching up on any skipped epochs."""
        if self.lt_lookup_epoch is not None:
            start = self.lt_lookup_epoch + 1
        else:
            # never looked up: resume right after the oldest bundle we hold
            active = [f.last_processed_lt_epoch for f in self.friends.values() if not f.terminated]
            start = min(active) + 1 if active else j
        return self.catch_up(start, j)

    # -- short-term ----------------------------------------------------

    def register_short_term(self, i: int, message: bytes) -> records.ShortTermRecord:
        j = i // self.params.st_per_lt
        keys = self.keys_by_epoch.get(j)
        if keys is None:
            raise MP3Error(f"no presence keys for long-term epoch {j}")
        sealed = self._st_sealed.get(i)
        if sealed is None:
            data = records.make_st_record(keys, i, message, self.params.msg_len).to_bytes()
            self._st_sealed = {e: v for e, v in self._st_sealed.items() if e > i - 2}
            self._st_sealed[i] = (message, data)
        elif sealed[0] != message:
            # a second plaintext under the same (key, nonce) would break the AEAD
            raise MP3Error(f"already registered a different message for short-term epoch {i}")
        else:
            data = sealed[1]
        wire.raise_for_error(self.short.registration.request(Frame(MsgType.REGISTER_ST, i, data)))
        return records.ShortTermRecord.from_bytes(data, self.params.msg_len)

    def lookup_short_term(self, i: int) -> dict[str, Presence]:
        j = i // self.params.st_per_lt
        meta = majority_meta(self.short.lookups, i)
        if meta.epoch != i:
            raise MetaDisagreement("metadata is for a different epoch")
        result: dict[str, Presence] = {}
        names, idents = [], []
        for name, friend in self.friends.items():
            if (
                friend.terminated
                or friend.known_presence_pub is None
                or friend.last_processed_lt_epoch != j
            ):
                result[name] = Presence(Status.UNKNOWN)
                continue
            names.append(name)
            idents.append(records.st_record_id_from_pub(friend.known_presence_pub, i))
        padded, where = self._padded(idents)
        try:
            values = private_fetch(self.short.lookups, meta, padded, self.params.t, self.rng)
        except InconsistentResponses as exc:
            self.flagged_servers.update(exc.servers)
            raise
        for name, pos in zip(names, where):
            ct = values[pos]
            if ct is None:
                result[name] = Presence(Status.OFFLINE)
                continue
            try:
                message = records.read_st_record(ct, self.friends[name].known_presence_pub, i)
            except (AuthFailure, MalformedRecord):
                result[name] = Presence(Status.OFFLINE)
                continue
            result[name] = Presence(Status.ONLINE, message)
        return result

    # -- persistence ---------------------------------------------------

    def state_bytes(self) -> bytes:
        return keystore_dump(self)

    def load_state(self, data: bytes) -> None:
        keystore_load(self, data)


KEYSTORE_MAGIC = b"MP3K"
KEYSTORE_VERSION = 1


def keystore_dump(client: Client) -> bytes:
    """Binary header (magic, version) followed by a JSON body of hex fields."""
    body = {
        "mk": client.mk.to_bytes().hex(),
        "keys_by_epoch": {str(e): k.to_bytes().hex() for e, k in client.keys_by_epoch.items()},
        "pending_revocations": [group.encode_scalar(x).hex() for x in client.pending_revocations],
        "granted": {n: group.encode_scalar(x).hex() for n, x in client.granted.items()},
        "lt_lookup_epoch": client.lt_lookup_epoch,
        "st_sealed": {str(i): [m.hex(), d.hex()] for i, (m, d) in client._st_sealed.items()},
        "friends": {
            n: {
                "dk": f.dk.to_bytes().hex(),
                "known_lt_pk": f.known_lt_pk.hex(),
                "last_processed_lt_epoch": f.last_processed_lt_epoch,
                "known_presence_pub": (
                    None if f.known_presence_pub is None else group.encode_g1(f.known_presence_pub).hex()
                ),
                "terminated": f.terminated,
            }
            for n, f in client.friends.items()
        },
    }
    return KEYSTORE_MAGIC + struct.pack(">B", KEYSTORE_VERSION) + json.dumps(body, sort_keys=True).encode()


def keystore_load(client: Client, data: bytes) -> None:
    if data[:4] != KEYSTORE_MAGIC:
        raise InvalidEncoding("not an MP3 key store")
    if data[4] != KEYSTORE_VERSION:
        raise InvalidEncoding(f"unsupported key store version {data[4]}")
    body = json.loads(data[5:].decode())
    client.mk = ManagerKey.from_bytes(bytes.fromhex(body["mk"]))
    client.keys_by_epoch = {
        int(e): ClientEpochKeys.from_bytes(bytes.fromhex(k)) for e, k in body["keys_by_epoch"].items()
    }
    client.pending_revocations = [
        group.decode_scalar(bytes.fromhex(x)) for x in body["pending_revocations"]
    ]
    client.granted = {n: group.decode_scalar(bytes.fromhex(x)) for n, x in body["granted"].items()}
    client.lt_lookup_epoch = body["lt_lookup_epoch"]
    client._st_sealed = {
        int(i): (bytes.fromhex(m), bytes.fromhex(d)) for i, (m, d) in body["st_sealed"].items()
    }
    client.friends = {}
    for n, f in body["friends"].items():
        pub = f["known_presence_pub"]
        client.friends[n] = FriendState(
            dk=DecryptionKey.from_bytes(bytes.fromhex(f["dk"])),
            known_lt_pk=bytes.fromhex(f["known_lt_pk"]),
            last_processed_lt_epoch=f["last_processed_lt_epoch"],
            known_presence_pub=None if pub is None else group.decode_g1(bytes.fromhex(pub)),
            terminated=f["terminated"],
        )
