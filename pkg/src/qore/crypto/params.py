"""Parameter-set tables for ML-KEM (FIPS 203) and ML-DSA (FIPS 204)."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import UnknownAlgorithm


@dataclass(frozen=True)
class KemParamSet:
    name: str
    k: int
    ek_len: int
    dk_len: int
    ct_len: int
    ss_len: int = 32


@dataclass(frozen=True)
class SigParamSet:
    name: str
    vk_len: int
    sk_len: int
    sig_len: int
    # signature length of the pre-standard round-3 draft of the same level
    draft_sig_len: int


ML_KEM_512 = KemParamSet("ML-KEM-512", 2, 800, 1632, 768)
ML_KEM_768 = KemParamSet("ML-KEM-768", 3, 1184, 2400, 1088)
ML_KEM_1024 = KemParamSet("ML-KEM-1024", 4, 1568, 3168, 1568)

ML_DSA_44 = SigParamSet("ML-DSA-44", 1312, 2560, 2420, 2420)
ML_DSA_65 = SigParamSet("ML-DSA-65", 1952, 4032, 3309, 3293)
ML_DSA_87 = SigParamSet("ML-DSA-87", 2592, 4896, 4627, 4595)

KEM_PARAMS = {p.name: p for p in (ML_KEM_512, ML_KEM_768, ML_KEM_1024)}
SIG_PARAMS = {p.name: p for p in (ML_DSA_44, ML_DSA_65, ML_DSA_87)}


def kem_params(name: str | KemParamSet) -> KemParamSet:
    if isinstance(name, KemParamSet):
        return name
    key = name.upper().replace("_", "-")
    if key.startswith("MLKEM"):
        key = "ML-KEM-" + key[5:].lstrip("-")
    try:
        return KEM_PARAMS[key]
    except KeyError:
        raise UnknownAlgorithm(f"unknown KEM parameter set {name!r}") from None


def sig_params(name: str | SigParamSet) -> SigParamSet:
    if isinstance(name, SigParamSet):
        return name
    key = name.upper().replace("_", "-")
    if key.startswith("MLDSA"):
        key = "ML-DSA-" + key[5:].lstrip("-")
    try:
        return SIG_PARAMS[key]
    except KeyError:
        raise UnknownAlgorithm(f"unknown signature parameter set {name!r}") from None
