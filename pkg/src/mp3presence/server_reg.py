"""Registration server for one tier.

Records for epoch ``X`` are accepted while the window for ``X`` is open
(that is, during epoch ``X - 1``). ``close_epoch`` compiles the pending
records into a PIR database, pushes it to every lookup server and opens the
window for ``X + 1``.
"""

from __future__ import annotations

import logging
import random
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field

from . import pir, records, wire
from .errors import BadSignature, MalformedRecord, TransportError, WrongEpochWindow
from .group import default_rng
from .pir import PirDatabase
from .transport import Transport
from .wire import ErrorCode, Frame, MsgType

log = logging.getLogger(__name__)

LONG = "long"
SHORT = "short"


@dataclass
class PendingStore:
    epoch: int
    records: dict[bytes, bytes] = field(default_factory=dict)

    def put(self, ident: bytes, value: bytes) -> None:
        # last write wins
        self.records[ident] = value

    def __len__(self) -> int:
        return len(self.records)


class RegistrationServer:
    def __init__(
        self,
        tier: str,
        n_rev: int = 1,
        lookups: list[Transport] | None = None,
        h_keep: int | None = None,
        msg_len: int = records.MESSAGE_LEN,
        first_epoch: int = 1,
        rng: random.Random | None = None,
        push_retries: int = 3,
        push_backoff: float = 0.05,
    ):
        if tier not in (LONG, SHORT):
            raise ValueError(f"unknown tier {tier!r}")
        self.tier = tier
        self.n_rev = n_rev
        self.msg_len = msg_len
        self.lookups = list(lookups or [])
        self.h_keep = h_keep if h_keep is not None else (30 if tier == LONG else 1)
        self.rng = rng or default_rng()
        self.push_retries = push_retries
        self.push_backoff = push_backoff
        self.pending = PendingStore(first_epoch)
        self.retained: OrderedDict[int, PirDatabase] = OrderedDict()
        self._lock = threading.Lock()

    @property
    def window(self) -> int:
        """Epoch whose records are currently being accepted."""
        return self.pending.epoch

    @property
    def value_len(self) -> int:
        if self.tier == LONG:
            return records.lt_value_len(self.n_rev)
        return records.st_ct_len(self.msg_len)

    def _check_window(self, epoch: int) -> None:
        if epoch != self.pending.epoch:
            raise WrongEpochWindow(
                f"registration for epoch {epoch} while window {self.pending.epoch} is open"
            )

    def accept_lt(self, data: bytes, epoch: int) -> bytes:
        """Verify and store a long-term record; returns its identifier."""
        if self.tier != LONG:
            raise MalformedRecord("long-term record sent to short-term server")
        record = records.LongTermRecord.from_bytes(data, self.n_rev)
        if not record.verify():
            raise BadSignature("record signature does not verify under prev_pk")
        ident = records.lt_record_id(record.prev_pk)
        with self._lock:
            self._check_window(epoch)
            self.pending.put(ident, record.value_bytes())
        return ident

    def accept_st(self, data: bytes, epoch: int) -> bytes:
        """Store a short-term record under ``H3(e(g1, tag))``. Nothing to verify."""
        if self.tier != SHORT:
            raise MalformedRecord("short-term record sent to long-term server")
        record = records.ShortTermRecord.from_bytes(data, self.msg_len)
        ident = records.st_record_id_from_tag(record.tag)
        with self._lock:
            self._check_window(epoch)
            self.pending.put(ident, record.ct)
        return ident

    def close_epoch(self) -> PirDatabase:
        with self._lock:
            closing = self.pending
            self.pending = PendingStore(closing.epoch + 1)
            db = pir.build_database(
                list(closing.records.items()), closing.epoch, self.value_len, self.rng
            )
            self.retained[closing.epoch] = db
            while len(self.retained) > self.h_keep:
                self.retained.popitem(last=False)
        self.push(db)
        return db

    def push(self, db: PirDatabase) -> list[int]:
        """Send ``db`` to every lookup server; returns indices that failed."""
        frame = Frame(MsgType.DB_PUSH, db.meta.epoch, wire.db_push_payload(db.to_bytes()))
        failed = []
        for k, lookup in enumerate(self.lookups):
            delay = self.push_backoff
            for attempt in range(self.push_retries):
                try:
                    wire.raise_for_error(lookup.request(frame))
                    break
                except (TransportError, OSError) as exc:
                    log.warning("push of epoch %d to lookup %d failed (%s), attempt %d",
                                db.meta.epoch, k, exc, attempt + 1)
                    time.sleep(delay)
                    delay *= 2
            else:
                log.error("giving up pushing epoch %d to lookup %d", db.meta.epoch, k)
                failed.append(k)
        return failed

    def handle(self, frame: Frame) -> Frame:
        try:
            if frame.msg_type == MsgType.REGISTER_LT:
                self.accept_lt(frame.payload, frame.epoch)
            elif frame.msg_type == MsgType.REGISTER_ST:
                self.accept_st(frame.payload, frame.epoch)
            else:
                return wire.error_frame(
                    ErrorCode.UNSUPPORTED,
                    f"registration server does not handle {frame.msg_type.name}",
                    frame.epoch,
                )
        except BadSignature as exc:
            return wire.error_frame(ErrorCode.BAD_SIGNATURE, str(exc), frame.epoch)
        except WrongEpochWindow as exc:
            return wire.error_frame(ErrorCode.WRONG_EPOCH_WINDOW, str(exc), frame.epoch)
        except MalformedRecord as exc:
            return wire.error_frame(ErrorCode.MALFORMED_RECORD, str(exc), frame.epoch)
        return Frame(MsgType.ACK, frame.epoch)
