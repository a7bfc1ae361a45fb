"""AES-256-CTR, AEAD (AES-GCM, ChaCha20-Poly1305) and HMAC."""

from __future__ import annotations

import hashlib
import hmac
from typing import Callable

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, ChaCha20Poly1305

from ..errors import AuthFailure, LengthMismatch
from .kdf import hash_fn

AEAD_KEY_LEN = {"AES-256-GCM": 32, "AES-128-GCM": 16, "CHACHA20-POLY1305": 32}
AEAD_NONCE_LEN = 12
AEAD_TAG_LEN = 16


def ctr_encrypt(key: bytes, icb: bytes, data: bytes) -> bytes:
    """AES-256 in CTR mode; the same call decrypts."""
    if len(key) != 32:
        raise LengthMismatch("AES-256-CTR key must be 32 bytes")
    if len(icb) != 16:
        raise LengthMismatch("initial counter block must be 16 bytes")
    enc = Cipher(algorithms.AES(key), modes.CTR(icb)).encryptor()
    return enc.update(data) + enc.finalize()


ctr_decrypt = ctr_encrypt


def _aead(alg: str, key: bytes):
    try:
        expected = AEAD_KEY_LEN[alg]
    except KeyError:
        raise ValueError(f"unsupported AEAD {alg!r}") from None
    if len(key) != expected:
        raise LengthMismatch(f"{alg} key must be {expected} bytes")
    return ChaCha20Poly1305(key) if alg == "CHACHA20-POLY1305" else AESGCM(key)


def aead_seal(key: bytes, nonce: bytes, aad: bytes, pt: bytes, alg: str = "AES-256-GCM") -> bytes:
    if len(nonce) != AEAD_NONCE_LEN:
        raise LengthMismatch("AEAD nonce must be 12 bytes")
    return _aead(alg, key).encrypt(nonce, pt, aad)


def aead_open(key: bytes, nonce: bytes, aad: bytes, ct: bytes, alg: str = "AES-256-GCM") -> bytes:
    if len(nonce) != AEAD_NONCE_LEN:
        raise LengthMismatch("AEAD nonce must be 12 bytes")
    try:
        return _aead(alg, key).decrypt(nonce, ct, aad)
    except InvalidTag:
        raise AuthFailure("AEAD tag mismatch") from None


def hmac_tag(mac_key: bytes, data: bytes, hash_name: str = "sha256") -> bytes:
    return hmac.new(mac_key, data, hash_fn(hash_name)).digest()


def hmac_verify(mac_key: bytes, data: bytes, tag: bytes, hash_name: str = "sha256") -> bool:
    return hmac.compare_digest(hmac_tag(mac_key, data, hash_name), tag)


class SymmetricKeyMaterial:
    """enc_key(32) || icb(16) || mac_key(32) carved from 80 bytes of KDF output.

    Buffers are mutable so ``release()`` can overwrite them; ``on_release``
    is a seam for tests to observe zeroization.
    """

    LENGTH = 80
    on_release: Callable[["SymmetricKeyMaterial"], None] | None = None

    def __init__(self, okm: bytes):
        if len(okm) != self.LENGTH:
            raise LengthMismatch(f"key material must be {self.LENGTH} bytes")
        self._enc = bytearray(okm[:32])
        self._icb = bytearray(okm[32:48])
        self._mac = bytearray(okm[48:80])
        self.released = False

    @property
    def enc_key(self) -> bytes:
        return bytes(self._enc)

    @property
    def icb(self) -> bytes:
        return bytes(self._icb)

    @property
    def mac_key(self) -> bytes:
        return bytes(self._mac)

    def buffers(self) -> tuple[bytearray, bytearray, bytearray]:
        return self._enc, self._icb, self._mac

    def release(self) -> None:
        for buf in self.buffers():
            for i in range(len(buf)):
                buf[i] = 0
        self.released = True
        hook = type(self).on_release
        if hook is not None:
            hook(self)

    def __enter__(self) -> "SymmetricKeyMaterial":
        return self

    def __exit__(self, *exc) -> None:
        self.release()

    def __repr__(self) -> str:
        return f"SymmetricKeyMaterial(released={self.released})"


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()
