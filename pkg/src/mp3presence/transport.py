"""Request/response transports for wire frames.

``InProcessTransport`` hands encoded frames straight to a service object and
counts every byte through a shared ``Meter``; the simulator and the tests use
it. ``TcpTransport`` and ``FrameServer`` carry the same frames over sockets.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from collections import Counter
from typing import Protocol

from . import wire
from .errors import TransportError
from .wire import Frame, MsgType

log = logging.getLogger(__name__)


class Service(Protocol):
    def handle(self, frame: Frame) -> Frame: ...


class Transport(Protocol):
    def request(self, frame: Frame) -> Frame: ...


class Meter:
    """Byte and frame counters keyed by party label."""

    def __init__(self):
        self.lock = threading.Lock()
        self.reset()

    def reset(self) -> None:
        self.bytes_out: Counter[str] = Counter()
        self.bytes_in: Counter[str] = Counter()
        self.frames: Counter[tuple[str, MsgType]] = Counter()

    def transfer(self, src: str, dst: str, nbytes: int, msg_type: MsgType, count: int = 1) -> None:
        with self.lock:
            self.bytes_out[src] += nbytes * count
            self.bytes_in[dst] += nbytes * count
            self.frames[(src, msg_type)] += count

    def total_in(self, prefix: str) -> int:
        return sum(v for k, v in self.bytes_in.items() if k.startswith(prefix))

    def total_out(self, prefix: str) -> int:
        return sum(v for k, v in self.bytes_out.items() if k.startswith(prefix))

    def frame_count(self, src: str, msg_type: MsgType) -> int:
        return self.frames[(src, msg_type)]


class InProcessTransport:
    def __init__(self, service: Service, meter: Meter | None = None,
                 local: str = "client", remote: str = "server"):
        self.service = service
        self.meter = meter
        self.local = local
        self.remote = remote

    def request(self, frame: Frame) -> Frame:
        data = frame.encode()
        if self.meter is not None:
            self.meter.transfer(self.local, self.remote, len(data), frame.msg_type)
        reply = self.service.handle(wire.decode(data))
        rdata = reply.encode()
        if self.meter is not None:
            self.meter.transfer(self.remote, self.local, len(rdata), reply.msg_type)
        return wire.decode(rdata)

    def account(self, msg_type: MsgType, payload_len: int, reply_type: MsgType,
                reply_len: int, count: int = 1) -> None:
        """Meter ``count`` exchanges of the given sizes without executing them."""
        if self.meter is None:
            return
        self.meter.transfer(self.local, self.remote, wire.frame_len(payload_len), msg_type, count)
        self.meter.transfer(self.remote, self.local, wire.frame_len(reply_len), reply_type, count)


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port:
        raise ValueError(f"address must be host:port, got {addr!r}")
    return host, int(port)


class TcpTransport:
    def __init__(self, address: str | tuple[str, int], timeout: float = 30.0):
        self.address = parse_address(address) if isinstance(address, str) else address
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._lock = threading.Lock()

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection(self.address, timeout=self.timeout)
            except OSError as exc:
                raise TransportError(f"cannot reach {self.address}: {exc}") from exc
        return self._sock

    def _recv_exactly(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self._sock.recv(n - len(buf))
            if not chunk:
                raise TransportError("connection closed mid-frame")
            buf += chunk
        return bytes(buf)

    def request(self, frame: Frame) -> Frame:
        with self._lock:
            sock = self._connect()
            try:
                sock.sendall(frame.encode())
                return wire.read_frame(self._recv_exactly)
            except OSError as exc:
                self.close()
                raise TransportError(str(exc)) from exc

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None


class _FrameHandler(socketserver.BaseRequestHandler):
    def _recv_exactly(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self.request.recv(n - len(buf))
            if not chunk:
                raise EOFError
            buf += chunk
        return bytes(buf)

    def handle(self) -> None:
        service = self.server.service
        cap = self.server.record_cap
        registrations = 0
        while True:
            try:
                frame = wire.read_frame(self._recv_exactly)
            except EOFError:
                return
            except Exception as exc:
                log.warning("dropping connection after bad frame: %s", exc)
                return
            if frame.msg_type in (MsgType.REGISTER_LT, MsgType.REGISTER_ST):
                registrations += 1
                if cap is not None and registrations > cap:
                    reply = wire.error_frame(
                        wire.ErrorCode.RATE_LIMITED, f"more than {cap} records on one connection",
                        frame.epoch,
                    )
                    self.request.sendall(reply.encode())
                    continue
            try:
                reply = service.handle(frame)
            except Exception as exc:
                log.exception("service failed")
                reply = wire.error_frame(wire.ErrorCode.INTERNAL, str(exc), frame.epoch)
            self.request.sendall(reply.encode())


class FrameServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], service: Service, record_cap: int | None = None):
        super().__init__(address, _FrameHandler)
        self.service = service
        # stand-in for anonymous rate limiting: registrations per connection
        self.record_cap = record_cap

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
