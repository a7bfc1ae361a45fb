"""Known-answer test loader and runners for ML-KEM and ML-DSA.

Reads the response-file format used by the official KAT sets: stanzas of
``key = hexvalue`` lines, each starting with ``count = N``. Lines beginning
with ``#`` are header comments.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

from .kem import encaps_deterministic, kem_decaps, kem_decaps_reference, keygen_from_seed
from .params import kem_params, sig_params
from .sig import keygen_from_seed as sig_keygen_from_seed
from .sig import sig_sign, sig_verify

KAT_PACKAGE = "qore.data.kat"

KAT_FILES = {
    "ML-KEM-512": "kat_MLKEM_512.rsp",
    "ML-KEM-768": "kat_MLKEM_768.rsp",
    "ML-KEM-1024": "kat_MLKEM_1024.rsp",
    "ML-DSA-44": "kat_MLDSA_44_det_pure.rsp",
    "ML-DSA-65": "kat_MLDSA_65_det_pure.rsp",
    "ML-DSA-87": "kat_MLDSA_87_det_pure.rsp",
}


def parse_rsp(lines: Iterable[str]) -> Iterator[dict[str, str]]:
    stanza: dict[str, str] = {}
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("["):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed KAT line: {line[:40]!r}")
        key, value = key.strip(), value.strip()
        if key == "count" and stanza:
            yield stanza
            stanza = {}
        stanza[key] = value
    if stanza:
        yield stanza


def header_comments(lines: Iterable[str]) -> list[str]:
    out = []
    for line in lines:
        if not line.startswith("#"):
            break
        out.append(line[1:].strip())
    return out


def _kat_path(name: str):
    return resources.files(KAT_PACKAGE).joinpath(name)


def load_vectors(alg: str, limit: int | None = None,
                 path: str | Path | None = None) -> list[dict[str, str]]:
    source = Path(path) if path is not None else _kat_path(KAT_FILES[alg])
    with source.open("r") as fh:
        vectors = []
        for v in parse_rsp(fh):
            vectors.append(v)
            if limit is not None and len(vectors) >= limit:
                break
    return vectors


def manifest() -> dict[str, str]:
    """``filename -> sha256 hex`` from the committed checksum manifest."""
    text = _kat_path("SHA256SUMS").read_text()
    out = {}
    for line in text.splitlines():
        if line.strip() and not line.startswith("#"):
            digest, name = line.split()
            out[name] = digest
    return out


def verify_checksums() -> list[tuple[str, bool]]:
    results = []
    for name, digest in manifest().items():
        actual = hashlib.sha256(_kat_path(name).read_bytes()).hexdigest()
        results.append((name, actual == digest))
    return results


@dataclass
class KatResult:
    alg: str
    count: int
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def check_mlkem_vector(alg: str, v: dict[str, str]) -> KatResult:
    params = kem_params(alg)
    res = KatResult(params.name, int(v["count"]))
    ek, dk = keygen_from_seed(params, bytes.fromhex(v["d"]), bytes.fromhex(v["z"]))
    if ek.hex() != v["pk"].lower():
        res.mismatches.append("pk")
    if dk.hex() != v["sk"].lower():
        res.mismatches.append("sk")
    ct, ss = encaps_deterministic(params, ek, bytes.fromhex(v["msg"]))
    if ct.hex() != v["ct"].lower():
        res.mismatches.append("ct")
    if ss.hex() != v["ss"].lower():
        res.mismatches.append("ss")
    kat_dk = bytes.fromhex(v["sk"])
    if kem_decaps(params, kat_dk, bytes.fromhex(v["ct"])).hex() != v["ss"].lower():
        res.mismatches.append("decaps")
    if "ct_n" in v:
        ct_n = bytes.fromhex(v["ct_n"])
        if kem_decaps(params, kat_dk, ct_n).hex() != v["ss_n"].lower():
            res.mismatches.append("decaps-implicit-rejection")
        if kem_decaps_reference(params, kat_dk, ct_n).hex() != v["ss_n"].lower():
            res.mismatches.append("reference-implicit-rejection")
    return res


def check_mldsa_vector(alg: str, v: dict[str, str]) -> KatResult:
    params = sig_params(alg)
    res = KatResult(params.name, int(v["count"]))
    vk, sk = sig_keygen_from_seed(params, bytes.fromhex(v["xi"]))
    if vk.hex() != v["pk"].lower():
        res.mismatches.append("pk")
    if sk.hex() != v["sk"].lower():
        res.mismatches.append("sk")
    msg = bytes.fromhex(v["msg"])
    ctx = bytes.fromhex(v.get("ctx", ""))
    sm = bytes.fromhex(v["sm"])
    expected_sig = sm[: params.sig_len]
    if sm[params.sig_len:] != msg:
        res.mismatches.append("sm-message")
    sig = sig_sign(params, sk, msg, ctx, deterministic=True)
    if sig != expected_sig:
        res.mismatches.append("sig")
    if not sig_verify(params, bytes.fromhex(v["pk"]), msg, expected_sig, ctx):
        res.mismatches.append("verify")
    return res


def run_kat(alg: str, limit: int | None = None) -> list[KatResult]:
    vectors = load_vectors(alg, limit)
    check = check_mlkem_vector if alg.startswith("ML-KEM") else check_mldsa_vector
    return [check(alg, v) for v in vectors]
