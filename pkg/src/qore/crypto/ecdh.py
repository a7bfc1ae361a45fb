"""X25519 (RFC 7748)."""

from __future__ import annotations

from cryptography.hazmat.primitives.asymmetric import x25519

from ..errors import LengthMismatch, SmallOrderPoint
from .entropy import EntropySource, resolve

X25519_LEN = 32


def dh_public(sk: bytes) -> bytes:
    if len(sk) != X25519_LEN:
        raise LengthMismatch("X25519 private key must be 32 bytes")
    return x25519.X25519PrivateKey.from_private_bytes(sk).public_key().public_bytes_raw()


def dh_keygen(rng: EntropySource | None = None) -> tuple[bytes, bytes]:
    """Returns ``(sk, pk)``."""
    sk = resolve(rng).random_bytes(X25519_LEN)
    return sk, dh_public(sk)


def dh_agree(sk: bytes, peer_pk: bytes) -> bytes:
    if len(sk) != X25519_LEN or len(peer_pk) != X25519_LEN:
        raise LengthMismatch("X25519 keys must be 32 bytes")
    priv = x25519.X25519PrivateKey.from_private_bytes(sk)
    try:
        ss = priv.exchange(x25519.X25519PublicKey.from_public_bytes(peer_pk))
    except ValueError as exc:
        raise SmallOrderPoint("peer point has small order") from exc
    if ss == bytes(X25519_LEN):
        raise SmallOrderPoint("all-zero shared secret")
    return ss
