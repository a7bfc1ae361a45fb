"""X25519MLKEM768 hybrid key encapsulation.

Encodings are fixed-width concatenations with the ML-KEM part first:

    public key   mlkem_ek (1184) | x25519_pk (32)                   = 1216
    private key  mlkem_dk (2400) | x25519_sk (32) | x25519_pk (32)  = 2464
    ciphertext   mlkem_ct (1088) | x25519_ephemeral_pk (32)         = 1120

Both component secrets feed one HKDF-SHA-256 stage:

    ss = HKDF(salt=0^32, ikm=mlkem_ss | x25519_ss,
              info="QORE-hybrid-X25519MLKEM768", L=32)
"""

from __future__ import annotations

import hmac
from dataclasses import dataclass

from .crypto.ecdh import X25519_LEN, dh_agree, dh_keygen, dh_public
from .crypto.entropy import EntropySource, resolve
from .crypto.kdf import hkdf
from .crypto.kem import (
    check_decapsulation_key, encapsulation_key_valid, kem_decaps, kem_encaps, kem_keygen,
)
from .crypto.params import ML_KEM_768
from .errors import LengthMismatch, MalformedKey, QoreError

COMBINER_SALT = b"\x00" * 32
COMBINER_INFO = b"QORE-hybrid-X25519MLKEM768"
SHARED_SECRET_LEN = 32

PUBLIC_KEY_LEN = ML_KEM_768.ek_len + X25519_LEN
PRIVATE_KEY_LEN = ML_KEM_768.dk_len + 2 * X25519_LEN
CIPHERTEXT_LEN = ML_KEM_768.ct_len + X25519_LEN


class MalformedPublicKey(MalformedKey):
    code = "malformed-public-key"


def _check_len(name: str, data: bytes, expected: int) -> None:
    if len(data) != expected:
        raise LengthMismatch(f"{name} must be {expected} bytes, got {len(data)}")


def _check_x25519_share(name: str, share: bytes) -> None:
    # X25519 ignores bit 255, so a flipped top bit would leave the secret unchanged.
    if share[31] & 0x80:
        raise MalformedKey(f"{name} has the unused top bit set")


@dataclass(frozen=True)
class HybridPublicKey:
    mlkem_ek: bytes
    x25519_pk: bytes

    def __post_init__(self):
        _check_len("ML-KEM-768 encapsulation key", self.mlkem_ek, ML_KEM_768.ek_len)
        _check_len("X25519 public key", self.x25519_pk, X25519_LEN)

    def encode(self) -> bytes:
        return self.mlkem_ek + self.x25519_pk

    @classmethod
    def decode(cls, data: bytes) -> "HybridPublicKey":
        _check_len("hybrid public key", data, PUBLIC_KEY_LEN)
        n = ML_KEM_768.ek_len
        return cls(bytes(data[:n]), bytes(data[n:]))


@dataclass(frozen=True)
class HybridPrivateKey:
    mlkem_dk: bytes
    x25519_sk: bytes
    x25519_pk: bytes

    def __post_init__(self):
        _check_len("ML-KEM-768 decapsulation key", self.mlkem_dk, ML_KEM_768.dk_len)
        _check_len("X25519 private key", self.x25519_sk, X25519_LEN)
        _check_len("X25519 public key", self.x25519_pk, X25519_LEN)

    def encode(self) -> bytes:
        return self.mlkem_dk + self.x25519_sk + self.x25519_pk

    @classmethod
    def decode(cls, data: bytes) -> "HybridPrivateKey":
        _check_len("hybrid private key", data, PRIVATE_KEY_LEN)
        n = ML_KEM_768.dk_len
        return cls(bytes(data[:n]), bytes(data[n:n + 32]), bytes(data[n + 32:]))

    def public_key(self) -> HybridPublicKey:
        k = ML_KEM_768.k
        return HybridPublicKey(self.mlkem_dk[384 * k: 768 * k + 32], self.x25519_pk)

    def __repr__(self) -> str:
        return "HybridPrivateKey(<redacted>)"


@dataclass(frozen=True)
class HybridCiphertext:
    mlkem_ct: bytes
    x25519_ephemeral_pk: bytes

    def __post_init__(self):
        _check_len("ML-KEM-768 ciphertext", self.mlkem_ct, ML_KEM_768.ct_len)
        _check_len("X25519 ephemeral key", self.x25519_ephemeral_pk, X25519_LEN)

    def encode(self) -> bytes:
        return self.mlkem_ct + self.x25519_ephemeral_pk

    @classmethod
    def decode(cls, data: bytes) -> "HybridCiphertext":
        _check_len("hybrid ciphertext", data, CIPHERTEXT_LEN)
        n = ML_KEM_768.ct_len
        return cls(bytes(data[:n]), bytes(data[n:]))


class SharedSecret:
    """32-byte combined secret.

    Deliberately has no encoding: callers feed ``expose()`` straight into a
    KDF and call ``release()`` (or use ``with``) to wipe the buffer.
    """

    __slots__ = ("_buf", "released")

    def __init__(self, value: bytes):
        if len(value) != SHARED_SECRET_LEN:
            raise LengthMismatch("shared secret must be 32 bytes")
        self._buf = bytearray(value)
        self.released = False

    def expose(self) -> bytes:
        if self.released:
            raise QoreError("shared secret already released")
        return bytes(self._buf)

    def release(self) -> None:
        for i in range(len(self._buf)):
            self._buf[i] = 0
        self.released = True

    def __enter__(self) -> "SharedSecret":
        return self

    def __exit__(self, *exc) -> None:
        self.release()

    def __len__(self) -> int:
        return SHARED_SECRET_LEN

    def __eq__(self, other) -> bool:
        if not isinstance(other, SharedSecret):
            return NotImplemented
        return hmac.compare_digest(bytes(self._buf), bytes(other._buf))

    __hash__ = None

    def __repr__(self) -> str:
        return f"SharedSecret(released={self.released})"


def combine(mlkem_ss: bytes, x25519_ss: bytes) -> bytes:
    return hkdf(COMBINER_SALT, mlkem_ss + x25519_ss, COMBINER_INFO, SHARED_SECRET_LEN)


def hybrid_keygen(rng: EntropySource | None = None) -> tuple[HybridPublicKey, HybridPrivateKey]:
    rng = resolve(rng)
    ek, dk = kem_keygen(ML_KEM_768, rng)
    sk, pk = dh_keygen(rng)
    return HybridPublicKey(ek, pk), HybridPrivateKey(dk, sk, pk)


def _as_public(pub: HybridPublicKey | bytes) -> HybridPublicKey:
    if isinstance(pub, HybridPublicKey):
        return pub
    try:
        return HybridPublicKey.decode(pub)
    except LengthMismatch as exc:
        raise MalformedPublicKey(str(exc)) from exc


def hybrid_encaps(pub: HybridPublicKey | bytes,
                  rng: EntropySource | None = None) -> tuple[HybridCiphertext, SharedSecret]:
    pub = _as_public(pub)
    if not encapsulation_key_valid(ML_KEM_768, pub.mlkem_ek):
        raise MalformedPublicKey("ML-KEM-768 encapsulation key failed the modulus check")
    try:
        _check_x25519_share("X25519 public key", pub.x25519_pk)
    except MalformedKey as exc:
        raise MalformedPublicKey(str(exc)) from exc
    rng = resolve(rng)
    mlkem_ct, mlkem_ss = kem_encaps(ML_KEM_768, pub.mlkem_ek, rng)
    eph_sk, eph_pk = dh_keygen(rng)
    x_ss = dh_agree(eph_sk, pub.x25519_pk)
    return HybridCiphertext(mlkem_ct, eph_pk), SharedSecret(combine(mlkem_ss, x_ss))


def hybrid_decaps(priv: HybridPrivateKey | bytes, ct: HybridCiphertext | bytes) -> SharedSecret:
    if not isinstance(priv, HybridPrivateKey):
        priv = HybridPrivateKey.decode(priv)
    if not isinstance(ct, HybridCiphertext):
        ct = HybridCiphertext.decode(ct)
    _check_x25519_share("X25519 ephemeral key", ct.x25519_ephemeral_pk)
    mlkem_ss = kem_decaps(ML_KEM_768, priv.mlkem_dk, ct.mlkem_ct)
    x_ss = dh_agree(priv.x25519_sk, ct.x25519_ephemeral_pk)
    return SharedSecret(combine(mlkem_ss, x_ss))


def validate_private_key(priv: HybridPrivateKey) -> None:
    check_decapsulation_key(ML_KEM_768, priv.mlkem_dk)
    if dh_public(priv.x25519_sk) != priv.x25519_pk:
        raise MalformedKey("X25519 public half does not match the private key")


def hexdump(data: bytes, width: int = 32) -> str:
    return "\n".join(data[i:i + width].hex() for i in range(0, len(data), width))
