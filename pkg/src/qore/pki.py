"""A small certificate authority for ML-DSA and hybrid ML-DSA-65 + Ed25519 keys.

Certificates are canonical JSON rather than DER. The to-be-signed bytes
cover every field except the signature values, including the list of
signature algorithms, so a signature cannot be stripped from a hybrid
certificate without invalidating the other.

A certificate carries one signature per component of its *issuer's* key: a
hybrid issuer produces an Ed25519 signature followed by an ML-DSA-65
signature over the same bytes.
"""

from __future__ import annotations

import base64
import hashlib
import json
import textwrap
import threading
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .crypto.entropy import EntropySource, resolve
from .crypto.params import ML_DSA_44, ML_DSA_65, ML_DSA_87
from .crypto.sig import (
    ED25519_KEY_LEN, ed25519_keygen, ed25519_sign, ed25519_verify, sig_keygen, sig_sign, sig_verify,
)
from .errors import MalformedKey, QoreError, UnknownAlgorithm

FORMAT = "qore-cert/1"
CRL_FORMAT = "qore-crl/1"

ED25519 = "Ed25519"
HYBRID = "ML-DSA-65+Ed25519"
ALGORITHMS = (ML_DSA_44.name, ML_DSA_65.name, ML_DSA_87.name, ED25519, HYBRID)

CERT_CONTEXT = b"qore-cert"
CRL_CONTEXT = b"qore-crl"

DAY = 86400
YEAR = 365 * DAY

KEY_CERT_SIGN = "key_cert_sign"
CRL_SIGN = "crl_sign"
DIGITAL_SIGNATURE = "digital_signature"
EKU_SERVER = "server_auth"
EKU_CLIENT = "client_auth"

CERT_PEM_LABEL = "QORE CERTIFICATE"
CRL_PEM_LABEL = "QORE CRL"


class PkiError(QoreError):
    code = "pki-error"


class NotACa(PkiError):
    code = "not-a-ca"


class ValidityExceedsProfile(PkiError):
    code = "validity-exceeds-profile"


class AlgorithmNotInProfile(PkiError):
    code = "algorithm-not-in-profile"


class PathLengthExceeded(PkiError):
    code = "path-length-exceeded"


class ChainError(PkiError):
    code = "chain-invalid"


class UntrustedRoot(ChainError):
    code = "untrusted-root"


class SignatureInvalid(ChainError):
    code = "signature-invalid"


class ExpiredCert(ChainError):
    code = "expired-cert"


class RevokedCert(ChainError):
    code = "revoked-cert"


class StaleCrl(ChainError):
    code = "stale-crl"


class BrokenChain(ChainError):
    code = "broken-chain"


class MalformedCertificate(PkiError):
    code = "malformed-certificate"


# keys

_PUBLIC_LEN = {
    ML_DSA_44.name: ML_DSA_44.vk_len, ML_DSA_65.name: ML_DSA_65.vk_len,
    ML_DSA_87.name: ML_DSA_87.vk_len, ED25519: ED25519_KEY_LEN,
    HYBRID: ML_DSA_65.vk_len + ED25519_KEY_LEN,
}
_SECRET_LEN = {
    ML_DSA_44.name: ML_DSA_44.sk_len, ML_DSA_65.name: ML_DSA_65.sk_len,
    ML_DSA_87.name: ML_DSA_87.sk_len, ED25519: ED25519_KEY_LEN,
    HYBRID: ML_DSA_65.sk_len + ED25519_KEY_LEN,
}


def _check_alg(alg: str) -> None:
    if alg not in ALGORITHMS:
        raise UnknownAlgorithm(f"unknown certificate algorithm {alg!r}")


def signature_algs(key_alg: str) -> tuple[str, ...]:
    """Signature algorithms a key of ``key_alg`` produces, in certificate order."""
    _check_alg(key_alg)
    return (ED25519, ML_DSA_65.name) if key_alg == HYBRID else (key_alg,)


@dataclass(frozen=True)
class PublicKeyInfo:
    alg: str
    key: bytes = field(repr=False)

    def __post_init__(self):
        _check_alg(self.alg)
        if len(self.key) != _PUBLIC_LEN[self.alg]:
            raise MalformedKey(f"{self.alg} public key must be {_PUBLIC_LEN[self.alg]} bytes")

    def to_dict(self) -> dict:
        return {"alg": self.alg, "key": self.key.hex()}

    @classmethod
    def from_dict(cls, d: dict) -> "PublicKeyInfo":
        return cls(d["alg"], bytes.fromhex(d["key"]))

    @classmethod
    def from_bytes(cls, key: bytes) -> "PublicKeyInfo":
        for alg, n in _PUBLIC_LEN.items():
            if len(key) == n:
                return cls(alg, bytes(key))
        raise MalformedKey(f"no certificate algorithm has {len(key)}-byte public keys")


@dataclass(frozen=True)
class KeyPair:
    alg: str
    public: bytes
    secret: bytes = field(repr=False)

    def __post_init__(self):
        _check_alg(self.alg)
        if len(self.secret) != _SECRET_LEN[self.alg]:
            raise MalformedKey(f"{self.alg} secret key must be {_SECRET_LEN[self.alg]} bytes")
        PublicKeyInfo(self.alg, self.public)

    @property
    def spki(self) -> PublicKeyInfo:
        return PublicKeyInfo(self.alg, self.public)

    @classmethod
    def from_bytes(cls, public: bytes, secret: bytes) -> "KeyPair":
        spki = PublicKeyInfo.from_bytes(public)
        return cls(spki.alg, bytes(public), bytes(secret))


def generate_keypair(alg: str, rng: EntropySource | None = None) -> KeyPair:
    _check_alg(alg)
    rng = resolve(rng)
    if alg == ED25519:
        pk, sk = ed25519_keygen(rng)
        return KeyPair(alg, pk, sk)
    if alg == HYBRID:
        vk, sk = sig_keygen(ML_DSA_65, rng)
        epk, esk = ed25519_keygen(rng)
        return KeyPair(alg, vk + epk, sk + esk)
    vk, sk = sig_keygen(alg, rng)
    return KeyPair(alg, vk, sk)


@dataclass(frozen=True)
class SignatureEntry:
    alg: str
    value: bytes = field(repr=False)

    def to_dict(self) -> dict:
        return {"alg": self.alg, "value": self.value.hex()}


def sign_bytes(keys: KeyPair, data: bytes, context: bytes,
               rng: EntropySource | None = None) -> tuple[SignatureEntry, ...]:
    if keys.alg == ED25519:
        return (SignatureEntry(ED25519, ed25519_sign(keys.secret, data)),)
    if keys.alg == HYBRID:
        n = ML_DSA_65.sk_len
        return (
            SignatureEntry(ED25519, ed25519_sign(keys.secret[n:], data)),
            SignatureEntry(ML_DSA_65.name, sig_sign(ML_DSA_65, keys.secret[:n], data, context, rng)),
        )
    return (SignatureEntry(keys.alg, sig_sign(keys.alg, keys.secret, data, context, rng)),)


def _verify_one(alg: str, key: bytes, data: bytes, sig: bytes, context: bytes) -> bool:
    if alg == ED25519:
        return ed25519_verify(key, data, sig)
    return sig_verify(alg, key, data, sig, context)


def signature_results(spki: PublicKeyInfo, data: bytes, sigs: Sequence[SignatureEntry],
                      context: bytes) -> list[bool]:
    """Per-signature verdicts; ``[]`` when the algorithm list does not match the key."""
    expected = signature_algs(spki.alg)
    if tuple(s.alg for s in sigs) != expected:
        return []
    if spki.alg == HYBRID:
        n = ML_DSA_65.vk_len
        keys = {ED25519: spki.key[n:], ML_DSA_65.name: spki.key[:n]}
    else:
        keys = {spki.alg: spki.key}
    return [_verify_one(s.alg, keys[s.alg], data, s.value, context) for s in sigs]


def verify_signatures(spki: PublicKeyInfo, data: bytes, sigs: Sequence[SignatureEntry],
                      context: bytes, policy: str = "and") -> bool:
    results = signature_results(spki, data, sigs, context)
    if not results:
        return False
    if policy == "and":
        return all(results)
    if policy == "or":
        return any(results)
    raise ValueError(f"unknown hybrid policy {policy!r}")


# certificates

@dataclass(frozen=True)
class Extensions:
    san: tuple[str, ...] = ()
    key_usage: tuple[str, ...] = (DIGITAL_SIGNATURE,)
    eku: tuple[str, ...] = ()
    is_ca: bool = False
    path_len: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "san", tuple(self.san))
        object.__setattr__(self, "key_usage", tuple(sorted(set(self.key_usage))))
        object.__setattr__(self, "eku", tuple(sorted(set(self.eku))))

    def to_dict(self) -> dict:
        return {"san": list(self.san), "key_usage": list(self.key_usage), "eku": list(self.eku),
                "is_ca": self.is_ca, "path_len": self.path_len}

    @classmethod
    def from_dict(cls, d: dict) -> "Extensions":
        return cls(tuple(d["san"]), tuple(d["key_usage"]), tuple(d["eku"]), bool(d["is_ca"]),
                   d["path_len"])

    @classmethod
    def ca(cls, path_len: int | None = None) -> "Extensions":
        return cls(key_usage=(KEY_CERT_SIGN, CRL_SIGN, DIGITAL_SIGNATURE), is_ca=True, path_len=path_len)

    @classmethod
    def end_entity(cls, san: Iterable[str] = (), eku: Iterable[str] = (EKU_SERVER, EKU_CLIENT)) -> "Extensions":
        return cls(san=tuple(san), key_usage=(DIGITAL_SIGNATURE,), eku=tuple(eku))


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("ascii")


def _pem(label: str, body: bytes) -> str:
    b64 = base64.b64encode(body).decode("ascii")
    return f"-----BEGIN {label}-----\n" + "\n".join(textwrap.wrap(b64, 64)) + f"\n-----END {label}-----\n"


def _unpem(label: str, text: str) -> bytes:
    begin, end = f"-----BEGIN {label}-----", f"-----END {label}-----"
    text = text.strip()
    if not text.startswith(begin) or not text.endswith(end):
        raise MalformedCertificate(f"missing {label} delimiters")
    try:
        return base64.b64decode("".join(text[len(begin):-len(end)].split()), validate=True)
    except ValueError as exc:
        raise MalformedCertificate(str(exc)) from exc


@dataclass(frozen=True)
class Certificate:
    serial: bytes
    issuer: str
    subject: str
    not_before: int
    not_after: int
    spki: PublicKeyInfo
    extensions: Extensions
    signatures: tuple[SignatureEntry, ...] = ()
    version: int = 3

    def tbs_dict(self, sig_algs: Sequence[str] | None = None) -> dict:
        return {
            "format": FORMAT, "version": self.version, "serial": self.serial.hex(),
            "issuer": self.issuer, "subject": self.subject,
            "not_before": self.not_before, "not_after": self.not_after,
            "spki": self.spki.to_dict(), "extensions": self.extensions.to_dict(),
            "sig_algs": list(sig_algs if sig_algs is not None else (s.alg for s in self.signatures)),
        }

    def tbs_bytes(self) -> bytes:
        return _canonical(self.tbs_dict())

    def encode(self) -> bytes:
        d = self.tbs_dict()
        d["signatures"] = [s.to_dict() for s in self.signatures]
        return _canonical(d)

    @classmethod
    def decode(cls, data: bytes) -> "Certificate":
        try:
            d = json.loads(data)
            if d.get("format") != FORMAT:
                raise ValueError(f"unsupported certificate format {d.get('format')!r}")
            sigs = tuple(SignatureEntry(s["alg"], bytes.fromhex(s["value"])) for s in d["signatures"])
            if [s.alg for s in sigs] != d["sig_algs"]:
                raise ValueError("signature list does not match sig_algs")
            cert = cls(bytes.fromhex(d["serial"]), d["issuer"], d["subject"], int(d["not_before"]),
                       int(d["not_after"]), PublicKeyInfo.from_dict(d["spki"]),
                       Extensions.from_dict(d["extensions"]), sigs, int(d["version"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedCertificate(str(exc)) from exc
        if cert.encode() != bytes(data):
            raise MalformedCertificate("certificate is not in canonical form")
        return cert

    def to_pem(self) -> str:
        return _pem(CERT_PEM_LABEL, self.encode())

    @classmethod
    def from_pem(cls, text: str) -> "Certificate":
        return cls.decode(_unpem(CERT_PEM_LABEL, text))

    @property
    def is_hybrid(self) -> bool:
        return self.spki.alg == HYBRID

    @property
    def is_self_issued(self) -> bool:
        return self.issuer == self.subject

    def fingerprint(self) -> str:
        return hashlib.sha256(self.encode()).hexdigest()


def certificates_from_pem(text: str) -> list[Certificate]:
    out, buf = [], []
    for line in text.splitlines():
        if line.strip():
            buf.append(line)
        if line.startswith(f"-----END {CERT_PEM_LABEL}"):
            out.append(Certificate.from_pem("\n".join(buf)))
            buf = []
    return out


def chain_to_pem(chain: Sequence[Certificate]) -> str:
    return "".join(c.to_pem() for c in chain)


# profiles and issuance

@dataclass(frozen=True)
class Profile:
    name: str
    algorithms: tuple[str, ...]
    max_validity: int
    is_ca: bool


ROOT_PROFILE = Profile("root", (ML_DSA_87.name,), 10 * YEAR, True)
INTERMEDIATE_PROFILE = Profile("intermediate", (ML_DSA_65.name, HYBRID), 2 * YEAR, True)
END_ENTITY_PROFILE = Profile("end-entity", (ML_DSA_65.name, HYBRID), 186 * DAY, False)
PROFILES = {p.name: p for p in (ROOT_PROFILE, INTERMEDIATE_PROFILE, END_ENTITY_PROFILE)}


@dataclass(frozen=True)
class CertRequest:
    subject: str
    spki: PublicKeyInfo
    extensions: Extensions
    validity: int
    not_before: int | None = None


def new_serial(rng: EntropySource | None = None) -> bytes:
    serial = bytearray(resolve(rng).random_bytes(16))
    serial[0] &= 0x7F
    return bytes(serial)


def _check_profile(profile: Profile, request: CertRequest) -> None:
    if request.spki.alg not in profile.algorithms:
        raise AlgorithmNotInProfile(f"{request.spki.alg} not allowed by the {profile.name} profile")
    if request.validity <= 0:
        raise ValidityExceedsProfile("validity must be positive")
    if request.validity > profile.max_validity:
        raise ValidityExceedsProfile(
            f"{request.validity // DAY} days exceeds the {profile.name} limit of "
            f"{profile.max_validity // DAY} days")
    if request.extensions.is_ca != profile.is_ca:
        raise ValidityExceedsProfile(f"the {profile.name} profile requires is_ca={profile.is_ca}")


def create_root(subject: str, keys: KeyPair | None = None, now: int = 0,
                validity: int = 10 * YEAR, path_len: int | None = None,
                rng: EntropySource | None = None) -> tuple[Certificate, KeyPair]:
    rng = resolve(rng)
    keys = keys or generate_keypair(ML_DSA_87.name, rng)
    request = CertRequest(subject, keys.spki, Extensions.ca(path_len), validity, now)
    _check_profile(ROOT_PROFILE, request)
    cert = Certificate(new_serial(rng), subject, subject, now, now + validity, keys.spki,
                       request.extensions)
    return _sign_certificate(cert, keys, rng), keys


def _sign_certificate(cert: Certificate, issuer_keys: KeyPair, rng: EntropySource) -> Certificate:
    tbs = _canonical(cert.tbs_dict(signature_algs(issuer_keys.alg)))
    return replace(cert, signatures=sign_bytes(issuer_keys, tbs, CERT_CONTEXT, rng))


def issue_certificate(ca_cert: Certificate, ca_keys: KeyPair, request: CertRequest,
                      profile: Profile | str, now: int = 0,
                      rng: EntropySource | None = None) -> Certificate:
    profile = PROFILES[profile] if isinstance(profile, str) else profile
    if not ca_cert.extensions.is_ca or KEY_CERT_SIGN not in ca_cert.extensions.key_usage:
        raise NotACa(f"{ca_cert.subject} is not a CA")
    if ca_keys.spki != ca_cert.spki:
        raise MalformedKey("CA key pair does not match the CA certificate")
    _check_profile(profile, request)
    ext = request.extensions
    if ext.is_ca:
        parent = ca_cert.extensions.path_len
        if parent is not None:
            if parent < 1:
                raise PathLengthExceeded(f"{ca_cert.subject} may not issue CA certificates")
            if ext.path_len is None:
                ext = replace(ext, path_len=parent - 1)
            elif ext.path_len > parent - 1:
                raise PathLengthExceeded(f"path_len {ext.path_len} exceeds issuer allowance")
    rng = resolve(rng)
    start = request.not_before if request.not_before is not None else now
    cert = Certificate(new_serial(rng), ca_cert.subject, request.subject, start,
                       start + request.validity, request.spki, ext)
    return _sign_certificate(cert, ca_keys, rng)


def renew_certificate(old: Certificate, ca_cert: Certificate, ca_keys: KeyPair,
                      profile: Profile | str, now: int, validity: int | None = None,
                      rng: EntropySource | None = None) -> Certificate:
    """Same subject, key and extensions; fresh serial and validity window."""
    request = CertRequest(old.subject, old.spki, old.extensions,
                          validity if validity is not None else old.not_after - old.not_before, now)
    return issue_certificate(ca_cert, ca_keys, request, profile, now, rng)


# revocation lists

@dataclass(frozen=True)
class RevokedEntry:
    serial: bytes
    revocation_time: int


@dataclass(frozen=True)
class Crl:
    issuer: str
    this_update: int
    next_update: int
    revoked: tuple[RevokedEntry, ...] = ()
    signatures: tuple[SignatureEntry, ...] = ()

    def tbs_dict(self, sig_algs: Sequence[str] | None = None) -> dict:
        return {
            "format": CRL_FORMAT, "issuer": self.issuer,
            "this_update": self.this_update, "next_update": self.next_update,
            "revoked": [{"serial": e.serial.hex(), "time": e.revocation_time}
                        for e in sorted(self.revoked, key=lambda e: e.serial)],
            "sig_algs": list(sig_algs if sig_algs is not None else (s.alg for s in self.signatures)),
        }

    def tbs_bytes(self) -> bytes:
        return _canonical(self.tbs_dict())

    def encode(self) -> bytes:
        d = self.tbs_dict()
        d["signatures"] = [s.to_dict() for s in self.signatures]
        return _canonical(d)

    @classmethod
    def decode(cls, data: bytes) -> "Crl":
        try:
            d = json.loads(data)
            if d.get("format") != CRL_FORMAT:
                raise ValueError("unsupported CRL format")
            return cls(d["issuer"], int(d["this_update"]), int(d["next_update"]),
                       tuple(RevokedEntry(bytes.fromhex(e["serial"]), int(e["time"])) for e in d["revoked"]),
                       tuple(SignatureEntry(s["alg"], bytes.fromhex(s["value"])) for s in d["signatures"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedCertificate(str(exc)) from exc

    def to_pem(self) -> str:
        return _pem(CRL_PEM_LABEL, self.encode())

    @classmethod
    def from_pem(cls, text: str) -> "Crl":
        return cls.decode(_unpem(CRL_PEM_LABEL, text))

    def is_revoked(self, serial: bytes) -> bool:
        return any(e.serial == serial for e in self.revoked)

    def verify(self, issuer_spki: PublicKeyInfo, policy: str = "and") -> bool:
        return verify_signatures(issuer_spki, self.tbs_bytes(), self.signatures, CRL_CONTEXT, policy)


def sign_crl(ca_cert: Certificate, ca_keys: KeyPair, entries: Iterable[RevokedEntry | tuple[bytes, int]],
             now: int, validity: int = 7 * DAY, rng: EntropySource | None = None) -> Crl:
    if not ca_cert.extensions.is_ca:
        raise NotACa(f"{ca_cert.subject} is not a CA")
    if validity <= 0:
        raise ValueError("next_update must be after this_update")
    revoked = tuple(e if isinstance(e, RevokedEntry) else RevokedEntry(*e) for e in entries)
    crl = Crl(ca_cert.subject, now, now + validity, revoked)
    tbs = _canonical(crl.tbs_dict(signature_algs(ca_keys.alg)))
    return replace(crl, signatures=sign_bytes(ca_keys, tbs, CRL_CONTEXT, rng))


def ocsp_response(ca_cert: Certificate, ca_keys: KeyPair, serial: bytes, revoked_at: int | None,
                  now: int, validity: int = 3600, rng: EntropySource | None = None) -> Crl:
    """Status for one serial, expressed as a short-lived CRL."""
    entries = [RevokedEntry(serial, revoked_at)] if revoked_at is not None else []
    return sign_crl(ca_cert, ca_keys, entries, now, validity, rng)


# trust and validation

def _self_signature_ok(cert: Certificate, policy: str = "and") -> bool:
    return verify_signatures(cert.spki, cert.tbs_bytes(), cert.signatures, CERT_CONTEXT, policy)


class TrustStore:
    """Root anchors. Immutable; ``with_anchor``/``without_anchor`` return new stores."""

    def __init__(self, anchors: Iterable[Certificate] = ()):
        anchors = tuple(anchors)
        for a in anchors:
            if not a.extensions.is_ca or not a.is_self_issued or not _self_signature_ok(a):
                raise UntrustedRoot(f"{a.subject} is not a self-signed CA certificate")
        self.anchors = anchors

    def find(self, subject: str) -> list[Certificate]:
        return [a for a in self.anchors if a.subject == subject]

    def contains(self, cert: Certificate) -> bool:
        return any(a.encode() == cert.encode() for a in self.anchors)

    def with_anchor(self, cert: Certificate) -> "TrustStore":
        return TrustStore(self.anchors + (cert,))

    def without_anchor(self, subject: str) -> "TrustStore":
        return TrustStore(a for a in self.anchors if a.subject != subject)

    def __len__(self) -> int:
        return len(self.anchors)


class TrustStoreHolder:
    """Snapshot-swapped reference to the current TrustStore."""

    def __init__(self, store: TrustStore):
        self._lock = threading.Lock()
        self._store = store

    def get(self) -> TrustStore:
        return self._store

    def swap(self, store: TrustStore) -> None:
        with self._lock:
            self._store = store


@dataclass(frozen=True)
class ValidatedIdentity:
    subject: str
    spki: PublicKeyInfo
    eku: tuple[str, ...]
    san: tuple[str, ...] = ()


def _check_revocation(cert: Certificate, issuer: Certificate, crls: Sequence[Crl], now: int,
                      policy: str) -> None:
    for crl in crls:
        if crl.issuer != issuer.subject:
            continue
        if not crl.verify(issuer.spki, policy):
            raise SignatureInvalid(f"CRL from {issuer.subject} has an invalid signature")
        if crl.next_update <= now:
            raise StaleCrl(f"CRL from {issuer.subject} expired at {crl.next_update}")
        if crl.is_revoked(cert.serial):
            raise RevokedCert(f"{cert.subject} (serial {cert.serial.hex()}) is revoked")


def validate_chain(chain: Sequence[Certificate], trust: TrustStore, now: int,
                   crls: Sequence[Crl] = (), policy: str = "and") -> ValidatedIdentity:
    """Validate a leaf-first chain. Checks run leaf to root; the first failure is raised."""
    if not chain:
        raise BrokenChain("empty chain")
    chain = list(chain)
    for i, cert in enumerate(chain):
        if i + 1 < len(chain):
            issuer = chain[i + 1]
        elif cert.is_self_issued:
            issuer = cert
        else:
            anchors = trust.find(cert.issuer)
            if not anchors:
                raise UntrustedRoot(f"no trust anchor named {cert.issuer}")
            issuer = anchors[0]
        if issuer.subject != cert.issuer:
            raise BrokenChain(f"{cert.subject} is issued by {cert.issuer}, next is {issuer.subject}")
        if not issuer.extensions.is_ca or KEY_CERT_SIGN not in issuer.extensions.key_usage:
            raise BrokenChain(f"{issuer.subject} is not a CA")
        if i > 0 and issuer is not cert:
            below = sum(1 for c in chain[1:i + 1] if c.extensions.is_ca and not c.is_self_issued)
            if issuer.extensions.path_len is not None and below > issuer.extensions.path_len:
                raise BrokenChain(f"path length constraint of {issuer.subject} violated")
        if not verify_signatures(issuer.spki, cert.tbs_bytes(), cert.signatures, CERT_CONTEXT, policy):
            raise SignatureInvalid(f"signature on {cert.subject} does not verify")
        if not cert.not_before <= now < cert.not_after:
            raise ExpiredCert(f"{cert.subject} not valid at {now}")
        if issuer is not cert:
            _check_revocation(cert, issuer, crls, now, policy)
        if issuer is cert or (i + 1 == len(chain)):
            top = issuer
            if not trust.contains(top):
                raise UntrustedRoot(f"{top.subject} is not a trust anchor")
            if top is not cert and not top.not_before <= now < top.not_after:
                raise ExpiredCert(f"{top.subject} not valid at {now}")
            break
    leaf = chain[0]
    return ValidatedIdentity(leaf.subject, leaf.spki, leaf.extensions.eku, leaf.extensions.san)
