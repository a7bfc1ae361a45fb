"""HKDF (RFC 5869) and the ANSI X9.63 KDF."""

from __future__ import annotations

import hashlib
import hmac

from ..errors import OutputTooLong

_HASHES = {"sha256": hashlib.sha256, "sha384": hashlib.sha384}


def hash_fn(name: str):
    try:
        return _HASHES[name]
    except KeyError:
        raise ValueError(f"unsupported hash {name!r}") from None


def hash_len(name: str) -> int:
    return hash_fn(name)().digest_size


def hkdf_extract(salt: bytes, ikm: bytes, hash_name: str = "sha256") -> bytes:
    h = hash_fn(hash_name)
    if not salt:
        salt = b"\x00" * h().digest_size
    return hmac.new(salt, ikm, h).digest()


def hkdf_expand(prk: bytes, info: bytes, out_len: int, hash_name: str = "sha256") -> bytes:
    h = hash_fn(hash_name)
    n = h().digest_size
    if out_len > 255 * n:
        raise OutputTooLong(f"HKDF output limited to {255 * n} bytes")
    okm, block = b"", b""
    counter = 1
    while len(okm) < out_len:
        block = hmac.new(prk, block + info + bytes([counter]), h).digest()
        okm += block
        counter += 1
    return okm[:out_len]


def hkdf(salt: bytes, ikm: bytes, info: bytes, out_len: int, hash_name: str = "sha256") -> bytes:
    return hkdf_expand(hkdf_extract(salt, ikm, hash_name), info, out_len, hash_name)


def x963_kdf(ss: bytes, shared_info: bytes, out_len: int, hash_name: str = "sha256") -> bytes:
    """Hash(Z || counter32 || SharedInfo) for counter = 1, 2, ..., truncated."""
    if out_len <= 0:
        raise ValueError("X9.63 KDF output length must be positive")
    h = hash_fn(hash_name)
    if out_len > h().digest_size * 0xFFFFFFFF:
        raise OutputTooLong("X9.63 KDF output too long")
    out = bytearray()
    counter = 1
    while len(out) < out_len:
        out += h(ss + counter.to_bytes(4, "big") + shared_info).digest()
        counter += 1
    return bytes(out[:out_len])
