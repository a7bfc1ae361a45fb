"""The same handshake over an unreliable datagram link.

Each flight is cut into datagrams of at most ``mtu`` bytes::

    [flight:1][index:2][count:2][payload]

A receiver reassembles once every index of a flight has arrived. A sender
that has not seen the peer's next flight retransmits its whole flight, as
DTLS does on timer expiry.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import Callable

from ..errors import QoreError
from .core import HandshakeConfig, Session, client_finish, client_hello, server_complete, server_respond

DEFAULT_MTU = 1200
HEADER_LEN = 5


class HandshakeTimeout(QoreError):
    code = "handshake-timeout"


def fragment(flight_id: int, data: bytes, mtu: int = DEFAULT_MTU) -> list[bytes]:
    room = mtu - HEADER_LEN
    if room <= 0:
        raise ValueError("MTU too small for the fragment header")
    chunks = [data[i:i + room] for i in range(0, len(data), room)] or [b""]
    if len(chunks) > 0xFFFF:
        raise ValueError("flight too large")
    return [struct.pack(">BHH", flight_id, i, len(chunks)) + c for i, c in enumerate(chunks)]


class Reassembler:
    def __init__(self):
        self._parts: dict[int, dict[int, bytes]] = {}
        self._counts: dict[int, int] = {}

    def add(self, datagram: bytes) -> None:
        if len(datagram) < HEADER_LEN:
            return
        flight_id, index, count = struct.unpack(">BHH", datagram[:HEADER_LEN])
        if count == 0 or index >= count:
            return
        if self._counts.setdefault(flight_id, count) != count:
            return
        self._parts.setdefault(flight_id, {})[index] = datagram[HEADER_LEN:]

    def complete(self, flight_id: int) -> bytes | None:
        parts = self._parts.get(flight_id, {})
        count = self._counts.get(flight_id)
        if count is None or len(parts) != count:
            return None
        return b"".join(parts[i] for i in range(count))


@dataclass
class LossyLink:
    """Drops, duplicates and reorders datagrams with a seeded PRNG."""

    loss: float = 0.0
    duplicate: float = 0.0
    reorder: bool = False
    seed: int = 0
    mtu: int = DEFAULT_MTU
    sent: int = 0
    dropped: int = 0
    _rand: random.Random = field(init=False, repr=False)

    def __post_init__(self):
        self._rand = random.Random(self.seed)

    def transmit(self, datagrams: list[bytes]) -> list[bytes]:
        out = []
        for d in datagrams:
            if len(d) > self.mtu:
                raise ValueError(f"datagram of {len(d)} bytes exceeds MTU {self.mtu}")
            self.sent += 1
            if self._rand.random() < self.loss:
                self.dropped += 1
                continue
            out.append(d)
            if self._rand.random() < self.duplicate:
                out.append(d)
        if self.reorder:
            self._rand.shuffle(out)
        return out


@dataclass
class DtlsStats:
    datagrams: int = 0
    retransmissions: int = 0
    max_datagram: int = 0


def _deliver(link: LossyLink, flight_id: int, data: bytes, receiver: Reassembler,
             stats: DtlsStats, max_attempts: int, on_retransmit: Callable[[], None] | None) -> bytes:
    frags = fragment(flight_id, data, link.mtu)
    stats.max_datagram = max(stats.max_datagram, max(len(f) for f in frags))
    for attempt in range(max_attempts):
        if attempt:
            stats.retransmissions += 1
            if on_retransmit:
                on_retransmit()
        stats.datagrams += len(frags)
        for d in link.transmit(frags):
            receiver.add(d)
        done = receiver.complete(flight_id)
        if done is not None:
            return done
    raise HandshakeTimeout(f"flight {flight_id} undelivered after {max_attempts} attempts")


def dtls_handshake(client_cfg: HandshakeConfig, server_cfg: HandshakeConfig, link: LossyLink,
                   max_attempts: int = 20) -> tuple[Session, Session, DtlsStats]:
    stats = DtlsStats()
    at_server, at_client = Reassembler(), Reassembler()
    hello, cstate = client_hello(client_cfg)
    got = _deliver(link, 1, hello, at_server, stats, max_attempts, None)
    flight, sstate = server_respond(server_cfg, got)
    got = _deliver(link, 2, flight, at_client, stats, max_attempts, None)
    out, csession = client_finish(cstate, got)
    got = _deliver(link, 3, out, at_server, stats, max_attempts, None)
    ssession = server_complete(sstate, got)
    return csession, ssession, stats
