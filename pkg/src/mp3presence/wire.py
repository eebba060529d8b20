"""Length-prefixed binary frames shared by clients and servers.

    frame = len(4) | msg_type(1) | epoch_id(8) | payload

``len`` counts the bytes after itself (type, epoch and payload). All integers
are big-endian.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass

from . import errors

_HEAD = struct.Struct(">IB8s")
HEADER_LEN = _HEAD.size
MAX_FRAME = 1 << 31
DIGEST_LEN = 32


class MsgType(enum.IntEnum):
    REGISTER_LT = 0x01
    REGISTER_ST = 0x02
    DB_PUSH = 0x03
    ACK = 0x04
    GET_META = 0x10
    PIR_QUERY = 0x11
    PIR_RESPONSE = 0x12
    ERROR = 0x7F


class ErrorCode(enum.IntEnum):
    BAD_SIGNATURE = 1
    WRONG_EPOCH_WINDOW = 2
    MALFORMED_RECORD = 3
    UNKNOWN_EPOCH = 4
    BAD_QUERY = 5
    BAD_DIGEST = 6
    UNSUPPORTED = 7
    INTERNAL = 8
    RATE_LIMITED = 9


_EXCEPTIONS = {
    ErrorCode.BAD_SIGNATURE: errors.BadSignature,
    ErrorCode.WRONG_EPOCH_WINDOW: errors.WrongEpochWindow,
    ErrorCode.MALFORMED_RECORD: errors.MalformedRecord,
    ErrorCode.UNKNOWN_EPOCH: errors.UnknownEpoch,
    ErrorCode.BAD_QUERY: errors.BadQuery,
}


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    epoch: int
    payload: bytes = b""

    def encode(self) -> bytes:
        return (
            _HEAD.pack(1 + 8 + len(self.payload), self.msg_type, self.epoch.to_bytes(8, "big"))
            + self.payload
        )

    def __len__(self) -> int:
        return HEADER_LEN + len(self.payload)


def frame_len(payload_len: int) -> int:
    return HEADER_LEN + payload_len


def decode(data: bytes) -> Frame:
    if len(data) < HEADER_LEN:
        raise errors.MalformedRecord("frame shorter than header")
    length, msg_type, epoch = _HEAD.unpack_from(data)
    if length != len(data) - 4:
        raise errors.MalformedRecord("frame length field mismatch")
    try:
        kind = MsgType(msg_type)
    except ValueError as exc:
        raise errors.MalformedRecord(f"unknown message type {msg_type:#x}") from exc
    return Frame(kind, int.from_bytes(epoch, "big"), bytes(data[HEADER_LEN:]))


def read_frame(recv_exactly) -> Frame:
    """Read one frame using ``recv_exactly(n) -> bytes``."""
    head = recv_exactly(4)
    (length,) = struct.unpack(">I", head)
    if length < 9 or length > MAX_FRAME:
        raise errors.MalformedRecord(f"bad frame length {length}")
    return decode(head + recv_exactly(length))


def error_frame(code: ErrorCode, message: str, epoch: int = 0) -> Frame:
    return Frame(MsgType.ERROR, epoch, struct.pack(">H", code) + message.encode())


def raise_for_error(frame: Frame) -> Frame:
    """Return ``frame`` unchanged unless it is an ERROR frame."""
    if frame.msg_type != MsgType.ERROR:
        return frame
    (code,) = struct.unpack(">H", frame.payload[:2])
    message = frame.payload[2:].decode(errors="replace")
    try:
        exc_type = _EXCEPTIONS.get(ErrorCode(code))
    except ValueError:
        exc_type = None
    if exc_type is not None:
        raise exc_type(message)
    raise errors.RemoteError(code, message)


def db_push_payload(db_bytes: bytes) -> bytes:
    return db_bytes + hashlib.sha256(db_bytes).digest()


def split_db_push(payload: bytes) -> bytes:
    body, digest = payload[:-DIGEST_LEN], payload[-DIGEST_LEN:]
    if hashlib.sha256(body).digest() != digest:
        raise ValueError("database digest mismatch")
    return body
