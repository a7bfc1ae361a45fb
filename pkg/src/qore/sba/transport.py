"""Message pipes between network functions.

``pipe_pair`` gives two in-process endpoints backed by queues, which keeps
test runs deterministic. ``SocketPipe`` carries the same messages over TCP
with a 4-byte length prefix. ``ScpRelay`` forwards records between two pipes
without holding any keys.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
from typing import Callable

from ..errors import QoreError
from ..handshake.core import Session

_CLOSED = object()


class TransportError(QoreError):
    code = "transport-error"


class TransportTimeout(TransportError):
    code = "transport-timeout"


class LoopbackPipe:
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, name: str = ""):
        self._inbox, self._outbox = inbox, outbox
        self.name = name
        self.closed = False

    def send(self, data: bytes) -> None:
        if self.closed:
            raise TransportError("pipe closed")
        self._outbox.put(bytes(data))

    def recv(self, timeout: float | None = 10.0) -> bytes:
        try:
            item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportTimeout(f"no message within {timeout}s") from None
        if item is _CLOSED:
            self._inbox.put(_CLOSED)
            raise TransportError("peer closed the pipe")
        return item

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._outbox.put(_CLOSED)


def pipe_pair(name: str = "") -> tuple[LoopbackPipe, LoopbackPipe]:
    a, b = queue.Queue(), queue.Queue()
    return LoopbackPipe(a, b, f"{name}/client"), LoopbackPipe(b, a, f"{name}/server")


class SocketPipe:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._send_lock = threading.Lock()

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 10.0) -> "SocketPipe":
        return cls(socket.create_connection((host, port), timeout=timeout))

    def send(self, data: bytes) -> None:
        with self._send_lock:
            self.sock.sendall(struct.pack(">I", len(data)) + data)

    def _read_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                raise TransportError("peer closed the connection")
            buf += chunk
        return bytes(buf)

    def recv(self, timeout: float | None = 10.0) -> bytes:
        self.sock.settimeout(timeout)
        try:
            (n,) = struct.unpack(">I", self._read_exact(4))
            return self._read_exact(n)
        except socket.timeout:
            raise TransportTimeout(f"no message within {timeout}s") from None

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class SecureConnection:
    """A handshake session bound to its pipe."""

    def __init__(self, pipe, session: Session):
        self.pipe = pipe
        self.session = session

    @property
    def peer(self):
        return self.session.peer

    def send(self, plaintext: bytes) -> None:
        self.pipe.send(self.session.send(plaintext))

    def recv(self, timeout: float | None = 10.0) -> bytes:
        return self.session.receive(self.pipe.recv(timeout))

    def close(self) -> None:
        self.pipe.close()


class ScpRelay:
    """Service communication proxy: copies records between two pipes and keeps
    a log of what it saw. It never holds session keys."""

    def __init__(self, downstream, upstream):
        self.downstream, self.upstream = downstream, upstream
        self.seen: list[bytes] = []
        self._threads: list[threading.Thread] = []

    def _pump(self, src, dst) -> None:
        while True:
            try:
                data = src.recv(timeout=30.0)
            except TransportError:
                dst.close()
                return
            self.seen.append(data)
            try:
                dst.send(data)
            except TransportError:
                return

    def start(self) -> "ScpRelay":
        for src, dst in ((self.downstream, self.upstream), (self.upstream, self.downstream)):
            t = threading.Thread(target=self._pump, args=(src, dst), daemon=True)
            t.start()
            self._threads.append(t)
        return self


def serve_in_thread(handler: Callable[[object], None], pipe) -> threading.Thread:
    t = threading.Thread(target=handler, args=(pipe,), daemon=True)
    t.start()
    return t


class SocketServer:
    """Accepts TCP connections on localhost and hands each to ``handler`` in a thread."""

    def __init__(self, handler: Callable[[SocketPipe], None], host: str = "127.0.0.1", port: int = 0):
        self.handler = handler
        self.sock = socket.create_server((host, port))
        self.address = self.sock.getsockname()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    def _accept_loop(self) -> None:
        self.sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self.sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self.handler, args=(SocketPipe(conn),), daemon=True).start()

    def start(self) -> "SocketServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self.sock.close()
        self._thread.join(timeout=2)
