"""ML-DSA signatures (FIPS 204, pure mode with context) and Ed25519.

Backend selection mirrors :mod:`qore.crypto.kem`: hedged signing with OS
randomness and all verification go through ``pqcrypto``; signing that must
consume injected randomness (or the deterministic variant) runs
``ML-DSA.Sign_internal`` from ``dilithium-py``.
"""

from __future__ import annotations

import importlib

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import ed25519
from dilithium_py.ml_dsa import ML_DSA_44 as _REF_44
from dilithium_py.ml_dsa import ML_DSA_65 as _REF_65
from dilithium_py.ml_dsa import ML_DSA_87 as _REF_87

from ..errors import ContextTooLong, MalformedKey
from .entropy import EntropySource, resolve
from .params import ML_DSA_44, ML_DSA_65, ML_DSA_87, SigParamSet, sig_params

_REFERENCE = {ML_DSA_44.name: _REF_44, ML_DSA_65.name: _REF_65, ML_DSA_87.name: _REF_87}
_NATIVE_MODULES = {
    ML_DSA_44.name: "pqcrypto.sign.ml_dsa_44",
    ML_DSA_65.name: "pqcrypto.sign.ml_dsa_65",
    ML_DSA_87.name: "pqcrypto.sign.ml_dsa_87",
}


def _native(params: SigParamSet):
    return importlib.import_module(_NATIVE_MODULES[params.name])


def _check_context(context: bytes) -> None:
    if len(context) > 255:
        raise ContextTooLong(f"context is {len(context)} bytes, limit is 255")


def keygen_from_seed(params: SigParamSet | str, xi: bytes) -> tuple[bytes, bytes]:
    """Deterministic ML-DSA.KeyGen_internal(xi); returns ``(vk, sk)``."""
    params = sig_params(params)
    if len(xi) != 32:
        raise ValueError("ML-DSA key generation seed must be 32 bytes")
    return _REFERENCE[params.name]._keygen_internal(xi)


def sig_keygen(params: SigParamSet | str, rng: EntropySource | None = None) -> tuple[bytes, bytes]:
    params = sig_params(params)
    rng = resolve(rng)
    if rng.is_system:
        rng.random_bytes(1)
        vk, sk = _native(params).keygen()
        return bytes(vk), bytes(sk)
    return keygen_from_seed(params, rng.random_bytes(32))


def sig_sign(params: SigParamSet | str, sk: bytes, message: bytes, context: bytes = b"",
             rng: EntropySource | None = None, *, deterministic: bool = False) -> bytes:
    params = sig_params(params)
    _check_context(context)
    if len(sk) != params.sk_len:
        raise MalformedKey(f"{params.name} signing key must be {params.sk_len} bytes")
    rng = resolve(rng)
    if not deterministic and rng.is_system:
        return bytes(_native(params).sign(bytes(sk), bytes(message), context=bytes(context)))
    rnd = b"\x00" * 32 if deterministic else rng.random_bytes(32)
    m_prime = bytes([0, len(context)]) + bytes(context) + bytes(message)
    return _REFERENCE[params.name]._sign_internal(bytes(sk), m_prime, rnd)


def sig_verify(params: SigParamSet | str, vk: bytes, message: bytes, sig: bytes,
               context: bytes = b"") -> bool:
    params = sig_params(params)
    _check_context(context)
    if len(vk) != params.vk_len:
        raise MalformedKey(f"{params.name} verification key must be {params.vk_len} bytes")
    if len(sig) != params.sig_len:
        return False
    try:
        _native(params).verify(bytes(vk), bytes(message), bytes(sig), context=bytes(context))
    except ValueError:
        return False
    return True


def sig_verify_reference(params: SigParamSet | str, vk: bytes, message: bytes, sig: bytes,
                         context: bytes = b"") -> bool:
    params = sig_params(params)
    _check_context(context)
    return _REFERENCE[params.name].verify(bytes(vk), bytes(message), bytes(sig), bytes(context))


# Ed25519, the classical half of hybrid certificates

ED25519_KEY_LEN = 32
ED25519_SIG_LEN = 64


def ed25519_keygen(rng: EntropySource | None = None) -> tuple[bytes, bytes]:
    """Returns ``(pk, sk)`` with ``sk`` the 32-byte seed."""
    sk = resolve(rng).random_bytes(32)
    pk = ed25519.Ed25519PrivateKey.from_private_bytes(sk).public_key().public_bytes_raw()
    return pk, sk


def ed25519_sign(sk: bytes, message: bytes) -> bytes:
    if len(sk) != ED25519_KEY_LEN:
        raise MalformedKey("Ed25519 private key must be 32 bytes")
    return ed25519.Ed25519PrivateKey.from_private_bytes(sk).sign(message)


def ed25519_verify(pk: bytes, message: bytes, sig: bytes) -> bool:
    if len(pk) != ED25519_KEY_LEN:
        raise MalformedKey("Ed25519 public key must be 32 bytes")
    try:
        ed25519.Ed25519PublicKey.from_public_bytes(pk).verify(sig, message)
    except (InvalidSignature, ValueError):
        return False
    return True
