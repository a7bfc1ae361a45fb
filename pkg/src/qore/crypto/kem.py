"""ML-KEM key encapsulation behind a length-checked interface.

Lattice arithmetic is delegated. The native backend (``pqcrypto``) serves
every call that draws randomness from the OS; calls that must consume an
injected entropy stream (seeded DRBG, QRNG stub, known-answer tests) run the
FIPS 203 ``*_internal`` algorithms of the reference backend (``kyber-py``).
Both operate on the standard expanded key encodings, so keys and ciphertexts
move freely between them.
"""

from __future__ import annotations

import hashlib
import importlib
import re

from kyber_py.ml_kem import ML_KEM_512 as _REF_512
from kyber_py.ml_kem import ML_KEM_768 as _REF_768
from kyber_py.ml_kem import ML_KEM_1024 as _REF_1024

from ..errors import LengthMismatch, MalformedDecapsulationKey, MalformedEncapsulationKey
from .entropy import EntropySource, resolve
from .params import ML_KEM_512, ML_KEM_768, ML_KEM_1024, KemParamSet, kem_params

Q = 3329

_REFERENCE = {
    ML_KEM_512.name: _REF_512,
    ML_KEM_768.name: _REF_768,
    ML_KEM_1024.name: _REF_1024,
}
_NATIVE_MODULES = {
    ML_KEM_512.name: "pqcrypto.kem.ml_kem_512",
    ML_KEM_768.name: "pqcrypto.kem.ml_kem_768",
    ML_KEM_1024.name: "pqcrypto.kem.ml_kem_1024",
}


def _native(params: KemParamSet):
    return importlib.import_module(_NATIVE_MODULES[params.name])


# A 12-bit coefficient can only reach Q = 0xD01 when its top nibble is >= 0xD,
# so only triples flagged by these byte patterns need the exact comparison.
_LOW_NIBBLE = bytes(b & 0x0F for b in range(256))
_LOW_TOP = re.compile(rb"[\x0d-\x0f]")
_HIGH_TOP = re.compile(rb"[\xd0-\xff]")


def _triple_ok(t: bytes, i: int) -> bool:
    b0, b1, b2 = t[i], t[i + 1], t[i + 2]
    return (b0 | (b1 & 0x0F) << 8) < Q and (b1 >> 4 | b2 << 4) < Q


def encapsulation_key_valid(params: KemParamSet, ek: bytes) -> bool:
    """FIPS 203 type and modulus check on an encapsulation key."""
    if len(ek) != params.ek_len:
        return False
    t = bytes(ek[: 384 * params.k])
    flagged = {m.start() for m in _LOW_TOP.finditer(t[1::3].translate(_LOW_NIBBLE))}
    flagged.update(m.start() for m in _HIGH_TOP.finditer(t[2::3]))
    return all(_triple_ok(t, 3 * j) for j in flagged)


def check_decapsulation_key(params: KemParamSet, dk: bytes) -> None:
    """FIPS 203 length and hash check on an expanded decapsulation key."""
    if len(dk) != params.dk_len:
        raise LengthMismatch(
            f"{params.name} decapsulation key must be {params.dk_len} bytes, got {len(dk)}")
    k = params.k
    ek = dk[384 * k: 768 * k + 32]
    h = dk[768 * k + 32: 768 * k + 64]
    if hashlib.sha3_256(ek).digest() != h:
        raise MalformedDecapsulationKey("embedded encapsulation-key hash does not match")


def encapsulation_key_from_dk(params: KemParamSet, dk: bytes) -> bytes:
    k = params.k
    return bytes(dk[384 * k: 768 * k + 32])


def keygen_from_seed(params: KemParamSet | str, d: bytes, z: bytes) -> tuple[bytes, bytes]:
    """Deterministic ML-KEM.KeyGen_internal(d, z)."""
    params = kem_params(params)
    if len(d) != 32 or len(z) != 32:
        raise ValueError("d and z must be 32 bytes each")
    return _REFERENCE[params.name]._keygen_internal(d, z)


def encaps_deterministic(params: KemParamSet | str, ek: bytes, m: bytes) -> tuple[bytes, bytes]:
    """Deterministic ML-KEM.Encaps_internal(ek, m); returns ``(ct, ss)``."""
    params = kem_params(params)
    if not encapsulation_key_valid(params, ek):
        raise MalformedEncapsulationKey(f"{params.name} encapsulation key failed validation")
    ss, ct = _REFERENCE[params.name]._encaps_internal(ek, m)
    return ct, ss


def kem_keygen(params: KemParamSet | str, rng: EntropySource | None = None) -> tuple[bytes, bytes]:
    """Generate ``(ek, dk)``."""
    params = kem_params(params)
    rng = resolve(rng)
    if rng.is_system:
        rng.random_bytes(1)  # surfaces entropy-unavailable before the native call
        ek, dk = _native(params).keygen()
    else:
        seed = rng.random_bytes(64)
        ek, dk = keygen_from_seed(params, seed[:32], seed[32:])
    return bytes(ek), bytes(dk)


def kem_encaps(params: KemParamSet | str, ek: bytes,
               rng: EntropySource | None = None) -> tuple[bytes, bytes]:
    """Encapsulate to ``ek``; returns ``(ct, ss)``."""
    params = kem_params(params)
    if not encapsulation_key_valid(params, ek):
        raise MalformedEncapsulationKey(f"{params.name} encapsulation key failed validation")
    rng = resolve(rng)
    if rng.is_system:
        ct, ss = _native(params).encaps(bytes(ek))
        return bytes(ct), bytes(ss)
    return encaps_deterministic(params, ek, rng.random_bytes(32))


def kem_decaps(params: KemParamSet | str, dk: bytes, ct: bytes) -> bytes:
    """Decapsulate. Never fails on a well-formed length: a forged or corrupted
    ciphertext yields the implicit-rejection secret."""
    params = kem_params(params)
    if len(ct) != params.ct_len:
        raise LengthMismatch(
            f"{params.name} ciphertext must be {params.ct_len} bytes, got {len(ct)}")
    check_decapsulation_key(params, dk)
    return bytes(_native(params).decaps(bytes(dk), bytes(ct)))


def kem_decaps_reference(params: KemParamSet | str, dk: bytes, ct: bytes) -> bytes:
    """Decapsulation through the reference backend, for cross-checks."""
    params = kem_params(params)
    if len(ct) != params.ct_len:
        raise LengthMismatch("ciphertext length")
    check_decapsulation_key(params, dk)
    return _REFERENCE[params.name]._decaps_internal(dk, ct)
