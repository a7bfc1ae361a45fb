"""Pluggable entropy sources.

Three kinds are supported:

* ``SystemEntropy`` reads the OS CSPRNG.
* ``SeededDrbg`` is an HMAC_DRBG (SHA-256) instantiated from a 32-byte seed.
  Equal seeds give equal byte streams, so any protocol run can be replayed.
* ``ExternalQrngStub`` draws from a caller-supplied callable or byte pool,
  standing in for a hardware QRNG.

Primitives that can use a native backend only do so when the source is the
system CSPRNG; any other source has its bytes injected into the algorithm so
that the output is a pure function of the stream.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import threading
from typing import Callable

from ..errors import EntropyUnavailable


class EntropySource:
    kind = "abstract"
    is_system = False

    def random_bytes(self, n: int) -> bytes:
        raise NotImplementedError

    def __call__(self, n: int) -> bytes:
        return self.random_bytes(n)


class SystemEntropy(EntropySource):
    kind = "system-csprng"
    is_system = True

    def random_bytes(self, n: int) -> bytes:
        try:
            return os.urandom(n)
        except (NotImplementedError, OSError) as exc:
            raise EntropyUnavailable(str(exc)) from exc


class SeededDrbg(EntropySource):
    """HMAC_DRBG with SHA-256 (NIST SP 800-90A), no prediction resistance.

    The instance is stateful and meant to have a single owner.
    """

    kind = "seeded-drbg"
    _MAX_REQUEST = 4096

    def __init__(self, seed: bytes, personalization: bytes = b""):
        if len(seed) != 32:
            raise ValueError("seeded DRBG requires a 32-byte seed")
        self._key = b"\x00" * 32
        self._v = b"\x01" * 32
        self._update(seed + personalization)

    @classmethod
    def from_hex(cls, seed_hex: str) -> "SeededDrbg":
        return cls(bytes.fromhex(seed_hex))

    def _hmac(self, key: bytes, data: bytes) -> bytes:
        return hmac.new(key, data, hashlib.sha256).digest()

    def _update(self, provided: bytes) -> None:
        self._key = self._hmac(self._key, self._v + b"\x00" + provided)
        self._v = self._hmac(self._key, self._v)
        if provided:
            self._key = self._hmac(self._key, self._v + b"\x01" + provided)
            self._v = self._hmac(self._key, self._v)

    def _generate(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            self._v = self._hmac(self._key, self._v)
            out += self._v
        self._update(b"")
        return bytes(out[:n])

    def random_bytes(self, n: int) -> bytes:
        chunks = []
        while n > 0:
            step = min(n, self._MAX_REQUEST)
            chunks.append(self._generate(step))
            n -= step
        return b"".join(chunks)

    def fork(self, label: bytes) -> "SeededDrbg":
        """Independent child stream, e.g. one per simulated network function."""
        return SeededDrbg(self.random_bytes(32), personalization=label)


class ExternalQrngStub(EntropySource):
    """Entropy from an external device, modelled as a callable or a finite pool."""

    kind = "external-qrng-stub"

    def __init__(self, source: Callable[[int], bytes] | bytes):
        self._lock = threading.Lock()
        if callable(source):
            self._read = source
            self._pool = None
        else:
            self._read = None
            self._pool = bytearray(source)

    def random_bytes(self, n: int) -> bytes:
        with self._lock:
            if self._pool is not None:
                if len(self._pool) < n:
                    raise EntropyUnavailable(
                        f"QRNG pool exhausted ({len(self._pool)} < {n} bytes)")
                out = bytes(self._pool[:n])
                del self._pool[:n]
                return out
            try:
                out = self._read(n)
            except Exception as exc:
                raise EntropyUnavailable(f"QRNG read failed: {exc}") from exc
        if not isinstance(out, (bytes, bytearray)) or len(out) != n:
            raise EntropyUnavailable("QRNG returned a short read")
        return bytes(out)


def default_entropy() -> EntropySource:
    return SystemEntropy()


def resolve(rng: EntropySource | None) -> EntropySource:
    return rng if rng is not None else SystemEntropy()
