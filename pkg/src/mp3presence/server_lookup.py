"""PIR lookup server: holds pushed databases and answers metadata/PIR queries."""

from __future__ import annotations

import hashlib
import logging
import threading
from collections import OrderedDict

from . import pir, wire
from .errors import BadQuery, InvalidEncoding, UnknownEpoch
from .pir import PirDatabase, PirMeta
from .wire import ErrorCode, Frame, MsgType

log = logging.getLogger(__name__)


class LookupServer:
    """One of the ``N_lookup`` servers for a tier.

    Databases are immutable once installed; installs swap a new mapping in
    under a lock so concurrent readers see either the old or the new set.
    ``fault_injection`` makes every PIR response deterministically wrong in
    one byte, for exercising client-side detection.
    """

    def __init__(self, index: int, h_keep: int = 30, fault_injection: bool = False):
        self.index = index
        self.h_keep = h_keep
        self.fault_injection = fault_injection
        self._dbs: OrderedDict[int, PirDatabase] = OrderedDict()
        self.digests: dict[int, bytes] = {}
        self._lock = threading.Lock()

    @property
    def epochs(self) -> list[int]:
        return list(self._dbs)

    def install(self, db: PirDatabase, digest: bytes | None = None) -> None:
        epoch = db.meta.epoch
        computed = hashlib.sha256(db.to_bytes()).digest()
        if digest is not None and digest != computed:
            raise ValueError("pushed database does not match its digest")
        with self._lock:
            dbs = OrderedDict(self._dbs)
            dbs[epoch] = db
            dbs = OrderedDict(sorted(dbs.items()))
            while len(dbs) > self.h_keep:
                old, _ = dbs.popitem(last=False)
                self.digests.pop(old, None)
            self.digests[epoch] = computed
            self._dbs = dbs

    def install_bytes(self, payload: bytes) -> int:
        body = wire.split_db_push(payload)
        db = PirDatabase.from_bytes(body)
        self.install(db)
        return db.meta.epoch

    def database(self, epoch: int) -> PirDatabase:
        try:
            return self._dbs[epoch]
        except KeyError:
            raise UnknownEpoch(f"epoch {epoch} not retained") from None

    def get_meta(self, epoch: int) -> PirMeta:
        return self.database(epoch).meta

    def serve_query(self, epoch: int, query: bytes) -> bytes:
        response = pir.answer_query(self.database(epoch), query)
        if self.fault_injection:
            buf = bytearray(response)
            buf[sum(query) % len(buf)] ^= 0x5A
            response = bytes(buf)
        return response

    def handle(self, frame: Frame) -> Frame:
        try:
            if frame.msg_type == MsgType.GET_META:
                return Frame(MsgType.GET_META, frame.epoch, self.get_meta(frame.epoch).to_bytes())
            if frame.msg_type == MsgType.PIR_QUERY:
                return Frame(
                    MsgType.PIR_RESPONSE, frame.epoch, self.serve_query(frame.epoch, frame.payload)
                )
            if frame.msg_type == MsgType.DB_PUSH:
                epoch = self.install_bytes(frame.payload)
                return Frame(MsgType.ACK, epoch)
        except UnknownEpoch as exc:
            return wire.error_frame(ErrorCode.UNKNOWN_EPOCH, str(exc), frame.epoch)
        except BadQuery as exc:
            return wire.error_frame(ErrorCode.BAD_QUERY, str(exc), frame.epoch)
        except (ValueError, InvalidEncoding) as exc:
            return wire.error_frame(ErrorCode.BAD_DIGEST, str(exc), frame.epoch)
        return wire.error_frame(
            ErrorCode.UNSUPPORTED, f"lookup server does not handle {frame.msg_type.name}", frame.epoch
        )
