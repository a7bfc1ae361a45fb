"""Handshake message framing: ``[type:1][len:3][body]``."""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

from ..errors import QoreError
from ..hybrid import CIPHERTEXT_LEN, PUBLIC_KEY_LEN
from ..pki import Certificate, MalformedCertificate, SignatureEntry

RANDOM_LEN = 32
MAX_BODY = (1 << 24) - 1


class DecodeError(QoreError):
    code = "decode-error"


class MsgType(enum.IntEnum):
    CLIENT_HELLO = 1
    SERVER_HELLO = 2
    CERTIFICATE = 11
    CERTIFICATE_REQUEST = 13
    CERTIFICATE_VERIFY = 15
    FINISHED = 20
    ALERT = 21


def frame(msg_type: int, body: bytes) -> bytes:
    if len(body) > MAX_BODY:
        raise DecodeError("handshake message too large")
    return bytes([msg_type]) + len(body).to_bytes(3, "big") + body


def iter_frames(data: bytes) -> Iterator[tuple[int, bytes, bytes]]:
    """Yields ``(type, body, raw_frame)``."""
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise DecodeError("truncated message header")
        msg_type = data[pos]
        n = int.from_bytes(data[pos + 1:pos + 4], "big")
        if pos + 4 + n > len(data):
            raise DecodeError("truncated message body")
        yield msg_type, data[pos + 4:pos + 4 + n], data[pos:pos + 4 + n]
        pos += 4 + n


def split_frames(data: bytes) -> list[tuple[int, bytes, bytes]]:
    return list(iter_frames(data))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("message body truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u24(self) -> int:
        return int.from_bytes(self.take(3), "big")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError("trailing bytes in message body")


@dataclass(frozen=True)
class ClientHello:
    random: bytes
    suites: tuple[int, ...]
    key_share: bytes

    def encode(self) -> bytes:
        body = self.random + bytes([len(self.suites)])
        body += b"".join(struct.pack(">H", s) for s in self.suites) + self.key_share
        return frame(MsgType.CLIENT_HELLO, body)

    @classmethod
    def decode(cls, body: bytes) -> "ClientHello":
        r = _Reader(body)
        random = r.take(RANDOM_LEN)
        suites = tuple(r.u16() for _ in range(r.u8()))
        share = r.take(PUBLIC_KEY_LEN)
        r.done()
        if not suites:
            raise DecodeError("ClientHello offers no cipher suites")
        return cls(random, suites, share)


@dataclass(frozen=True)
class ServerHello:
    random: bytes
    suite: int
    ciphertext: bytes

    def encode(self) -> bytes:
        return frame(MsgType.SERVER_HELLO, self.random + struct.pack(">H", self.suite) + self.ciphertext)

    @classmethod
    def decode(cls, body: bytes) -> "ServerHello":
        r = _Reader(body)
        out = cls(r.take(RANDOM_LEN), r.u16(), r.take(CIPHERTEXT_LEN))
        r.done()
        return out


def encode_certificate(chain: Sequence[Certificate]) -> bytes:
    body = bytes([len(chain)])
    for cert in chain:
        raw = cert.encode()
        body += len(raw).to_bytes(3, "big") + raw
    return frame(MsgType.CERTIFICATE, body)


def decode_certificate(body: bytes) -> list[Certificate]:
    r = _Reader(body)
    chain = []
    for _ in range(r.u8()):
        raw = r.take(r.u24())
        try:
            chain.append(Certificate.decode(raw))
        except MalformedCertificate as exc:
            raise DecodeError(f"bad certificate: {exc}") from exc
    r.done()
    return chain


def encode_certificate_verify(sigs: Sequence[SignatureEntry]) -> bytes:
    body = bytes([len(sigs)])
    for s in sigs:
        alg = s.alg.encode("ascii")
        body += bytes([len(alg)]) + alg + struct.pack(">H", len(s.value)) + s.value
    return frame(MsgType.CERTIFICATE_VERIFY, body)


def decode_certificate_verify(body: bytes) -> tuple[SignatureEntry, ...]:
    r = _Reader(body)
    out = []
    for _ in range(r.u8()):
        try:
            alg = r.take(r.u8()).decode("ascii")
        except UnicodeDecodeError as exc:
            raise DecodeError("bad signature algorithm name") from exc
        out.append(SignatureEntry(alg, r.take(r.u16())))
    r.done()
    return tuple(out)


def encode_alert(code: str) -> bytes:
    return frame(MsgType.ALERT, code.encode("ascii")[:255])


class Transcript:
    """Append-only running hash over raw handshake frames."""

    def __init__(self, hash_name: str, frames: Sequence[bytes] = ()):
        self.hash_name = hash_name
        self._h = hashlib.new(hash_name)
        self.frames: list[bytes] = []
        for f in frames:
            self.append(f)

    def append(self, raw: bytes) -> None:
        self._h.update(raw)
        self.frames.append(raw)

    def digest(self) -> bytes:
        return self._h.copy().digest()
