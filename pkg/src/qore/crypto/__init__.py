"""Uniform interfaces over the primitives every other qore module consumes."""

from .ecdh import dh_agree, dh_keygen, dh_public
from .entropy import EntropySource, ExternalQrngStub, SeededDrbg, SystemEntropy
from .kdf import hkdf, hkdf_expand, hkdf_extract, x963_kdf
from .kem import kem_decaps, kem_encaps, kem_keygen
from .params import (
    ML_DSA_44, ML_DSA_65, ML_DSA_87, ML_KEM_512, ML_KEM_768, ML_KEM_1024,
    KemParamSet, SigParamSet, kem_params, sig_params,
)
from .sig import ed25519_keygen, ed25519_sign, ed25519_verify, sig_keygen, sig_sign, sig_verify
from .symmetric import (
    SymmetricKeyMaterial, aead_open, aead_seal, ctr_encrypt, hmac_tag, hmac_verify,
)

__all__ = [
    "EntropySource", "ExternalQrngStub", "SeededDrbg", "SystemEntropy",
    "KemParamSet", "SigParamSet", "kem_params", "sig_params",
    "ML_KEM_512", "ML_KEM_768", "ML_KEM_1024", "ML_DSA_44", "ML_DSA_65", "ML_DSA_87",
    "kem_keygen", "kem_encaps", "kem_decaps",
    "sig_keygen", "sig_sign", "sig_verify",
    "ed25519_keygen", "ed25519_sign", "ed25519_verify",
    "dh_keygen", "dh_agree", "dh_public",
    "hkdf", "hkdf_extract", "hkdf_expand", "x963_kdf",
    "ctr_encrypt", "aead_seal", "aead_open", "hmac_tag", "hmac_verify",
    "SymmetricKeyMaterial",
]
