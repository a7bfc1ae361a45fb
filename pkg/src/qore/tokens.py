"""ML-DSA signed JWTs carrying 5G service-authorization claims.

Compact form is ``b64url(header).b64url(payload).b64url(signature)`` with the
signature over the ASCII of the first two segments. JSON is canonical (sorted
keys, no whitespace) so the same claims always produce the same signing input.

Validation runs a fixed sequence and stops at the first failure:

1. parse                          -> malformed-token
2. resolve the key by ``kid``     -> unknown-kid
3. verify the signature           -> bad-signature
4. ``exp > now``, ``jti`` revoked -> expired, revoked
5. audience, scope, subject       -> audience-mismatch, scope-mismatch, subject-mismatch
"""

from __future__ import annotations

import base64
import binascii
import json
import uuid
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

from .crypto.entropy import EntropySource, resolve
from .crypto.params import ML_DSA_65, ML_DSA_87, sig_params
from .crypto.sig import sig_keygen, sig_sign, sig_verify
from .errors import MalformedKey, QoreError

SUPPORTED_ALGS = (ML_DSA_65.name, ML_DSA_87.name)
MIN_LIFETIME = 900
MAX_LIFETIME = 3600
DEFAULT_LIFETIME = 900

NF_TYPES = frozenset({"AMF", "SMF", "UPF", "AUSF", "UDM", "NRF", "PCF", "NEF"})

REVOCATION_CONTEXT = b"QORE-revocation-set"


class TokenError(QoreError):
    code = "token-error"


class MalformedToken(TokenError):
    code = "malformed-token"


class UnknownKid(TokenError):
    code = "unknown-kid"


class BadSignature(TokenError):
    code = "bad-signature"


class Expired(TokenError):
    code = "expired"


class Revoked(TokenError):
    code = "revoked"


class RevocationSetInvalid(TokenError):
    code = "revocation-set-invalid"


class AudienceMismatch(TokenError):
    code = "audience-mismatch"


class ScopeMismatch(TokenError):
    code = "scope-mismatch"


class SubjectMismatch(TokenError):
    code = "subject-mismatch"


class InvalidLifetime(TokenError):
    code = "invalid-lifetime"


class UnsupportedAlg(TokenError):
    code = "unsupported-alg"


def b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    """Strict decoding: unpadded, URL alphabet only, canonical trailing bits."""
    if not text.isascii() or "=" in text or len(text) % 4 == 1:
        raise ValueError("not unpadded base64url")
    try:
        raw = base64.b64decode(text + "=" * (-len(text) % 4), altchars=b"-_", validate=True)
    except binascii.Error as exc:
        raise ValueError(str(exc)) from exc
    if b64url_encode(raw) != text:
        raise ValueError("non-canonical base64url")
    return raw


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValueError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _parse_json_object(raw: bytes) -> dict:
    obj = json.loads(raw.decode("utf-8"), object_pairs_hook=_reject_duplicates)
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    return obj


def new_jti(rng: EntropySource | None = None) -> str:
    return str(uuid.UUID(bytes=resolve(rng).random_bytes(16), version=4))


@dataclass(frozen=True)
class TokenClaims:
    iss: str
    sub: str
    aud: str | tuple[str, ...]
    iat: int
    exp: int
    scope: tuple[str, ...]
    nf_instance_id: str
    nf_type: str
    allowed_services: tuple[str, ...] = ()
    jti: str = ""

    def __post_init__(self):
        if isinstance(self.aud, list):
            object.__setattr__(self, "aud", tuple(self.aud))
        object.__setattr__(self, "scope", tuple(self.scope))
        object.__setattr__(self, "allowed_services", tuple(self.allowed_services))
        if self.nf_type not in NF_TYPES and not self.nf_type.startswith("custom"):
            raise ValueError(f"unknown NF type {self.nf_type!r}")
        if self.iat > self.exp:
            raise ValueError("iat must not be after exp")

    @property
    def audiences(self) -> tuple[str, ...]:
        return (self.aud,) if isinstance(self.aud, str) else tuple(self.aud)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aud"] = self.aud if isinstance(self.aud, str) else list(self.aud)
        d["scope"] = list(self.scope)
        d["allowed_services"] = list(self.allowed_services)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TokenClaims":
        expected = {f for f in cls.__dataclass_fields__}
        if set(d) != expected:
            raise ValueError(f"claim set mismatch: {sorted(set(d) ^ expected)}")
        for name in ("iss", "sub", "nf_instance_id", "nf_type", "jti"):
            if not isinstance(d[name], str):
                raise ValueError(f"claim {name} must be a string")
        for name in ("iat", "exp"):
            if not isinstance(d[name], int) or isinstance(d[name], bool):
                raise ValueError(f"claim {name} must be an integer")
        aud = d["aud"]
        if not isinstance(aud, str):
            if not isinstance(aud, list) or not all(isinstance(a, str) for a in aud):
                raise ValueError("aud must be a string or list of strings")
            aud = tuple(aud)
        for name in ("scope", "allowed_services"):
            if not isinstance(d[name], list) or not all(isinstance(s, str) for s in d[name]):
                raise ValueError(f"claim {name} must be a list of strings")
        return cls(d["iss"], d["sub"], aud, d["iat"], d["exp"], tuple(d["scope"]),
                   d["nf_instance_id"], d["nf_type"], tuple(d["allowed_services"]), d["jti"])


def make_claims(*, iss: str, sub: str, aud: str | Sequence[str], scope: Iterable[str],
                nf_type: str, now: int, lifetime: int = DEFAULT_LIFETIME,
                nf_instance_id: str | None = None, allowed_services: Iterable[str] | None = None,
                rng: EntropySource | None = None) -> TokenClaims:
    rng = resolve(rng)
    scope = tuple(scope)
    return TokenClaims(
        iss=iss, sub=sub, aud=aud if isinstance(aud, str) else tuple(aud),
        iat=int(now), exp=int(now) + lifetime, scope=scope,
        nf_instance_id=nf_instance_id or sub, nf_type=nf_type,
        allowed_services=tuple(allowed_services) if allowed_services is not None else scope,
        jti=new_jti(rng),
    )


# key set

@dataclass(frozen=True)
class KeyEntry:
    kid: str
    alg: str
    vk: bytes

    def to_dict(self) -> dict:
        return {"kid": self.kid, "alg": self.alg, "vk": b64url_encode(self.vk)}


@dataclass(frozen=True)
class KeySetDocument:
    keys: tuple[KeyEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "keys", tuple(self.keys))
        kids = [k.kid for k in self.keys]
        if len(kids) != len(set(kids)):
            raise ValueError("duplicate kid in key set")
        for k in self.keys:
            if k.alg not in SUPPORTED_ALGS:
                raise UnsupportedAlg(f"key {k.kid}: {k.alg}")
            if len(k.vk) != sig_params(k.alg).vk_len:
                raise MalformedKey(f"key {k.kid}: wrong verification key length")

    def get(self, kid: str) -> KeyEntry | None:
        for k in self.keys:
            if k.kid == kid:
                return k
        return None

    def with_key(self, entry: KeyEntry) -> "KeySetDocument":
        return KeySetDocument(self.keys + (entry,))

    def without_key(self, kid: str) -> "KeySetDocument":
        return KeySetDocument(tuple(k for k in self.keys if k.kid != kid))

    def to_json(self) -> str:
        return canonical_json({"keys": [k.to_dict() for k in self.keys]}).decode()

    @classmethod
    def from_json(cls, text: str | bytes) -> "KeySetDocument":
        doc = json.loads(text)
        return cls(tuple(KeyEntry(k["kid"], k["alg"], b64url_decode(k["vk"])) for k in doc["keys"]))


@dataclass(frozen=True)
class SigningKey:
    """An NRF token-signing key."""

    kid: str
    alg: str
    sk: bytes = field(repr=False)
    vk: bytes = field(repr=False)

    def entry(self) -> KeyEntry:
        return KeyEntry(self.kid, self.alg, self.vk)


def generate_signing_key(kid: str, alg: str = ML_DSA_65.name,
                         rng: EntropySource | None = None) -> SigningKey:
    if alg not in SUPPORTED_ALGS:
        raise UnsupportedAlg(alg)
    vk, sk = sig_keygen(alg, rng)
    return SigningKey(kid, alg, sk, vk)


def alg_for_signing_key(sk: bytes) -> str:
    for name in SUPPORTED_ALGS:
        if len(sk) == sig_params(name).sk_len:
            return name
    raise UnsupportedAlg("signing key is not an ML-DSA-65 or ML-DSA-87 key")


# issuance

def issue_token(signing_key: SigningKey | bytes, kid: str | None, claims: TokenClaims, now: int,
                *, alg: str | None = None, rng: EntropySource | None = None) -> str:
    if isinstance(signing_key, SigningKey):
        sk, kid, alg = signing_key.sk, kid or signing_key.kid, alg or signing_key.alg
    else:
        sk = bytes(signing_key)
        alg = alg or alg_for_signing_key(sk)
    if alg not in SUPPORTED_ALGS:
        raise UnsupportedAlg(f"token alg must be one of {', '.join(SUPPORTED_ALGS)}")
    if not kid:
        raise ValueError("kid is required")
    lifetime = claims.exp - claims.iat
    if not MIN_LIFETIME <= lifetime <= MAX_LIFETIME:
        raise InvalidLifetime(f"lifetime {lifetime}s outside [{MIN_LIFETIME}, {MAX_LIFETIME}]")
    if claims.exp <= now:
        raise InvalidLifetime("token would already be expired")
    if not claims.jti:
        claims = replace(claims, jti=new_jti(rng))
    header = {"alg": alg, "kid": kid, "typ": "JWT"}
    signing_input = b64url_encode(canonical_json(header)) + "." + b64url_encode(canonical_json(claims.to_dict()))
    sig = sig_sign(alg, sk, signing_input.encode("ascii"), b"", rng)
    return signing_input + "." + b64url_encode(sig)


@dataclass(frozen=True)
class ParsedToken:
    header: dict
    claims: TokenClaims
    signing_input: bytes
    signature: bytes


def parse_token(token: str) -> ParsedToken:
    if not isinstance(token, str):
        raise MalformedToken("token must be a string")
    parts = token.split(".")
    if len(parts) != 3 or not all(parts):
        raise MalformedToken("expected three non-empty dot-separated segments")
    try:
        header = _parse_json_object(b64url_decode(parts[0]))
        payload = _parse_json_object(b64url_decode(parts[1]))
        signature = b64url_decode(parts[2])
        claims = TokenClaims.from_dict(payload)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedToken(str(exc)) from exc
    if set(header) != {"alg", "kid", "typ"} or header["typ"] != "JWT":
        raise MalformedToken("header must hold exactly alg, kid and typ=JWT")
    if not isinstance(header["alg"], str) or not isinstance(header["kid"], str):
        raise MalformedToken("alg and kid must be strings")
    return ParsedToken(header, claims, (parts[0] + "." + parts[1]).encode("ascii"), signature)


# revocation

@dataclass(frozen=True)
class RevocationSet:
    revoked_token_ids: frozenset[str]
    issued_at: int
    kid: str
    alg: str
    signature: bytes = field(default=b"", repr=False)

    def signed_bytes(self) -> bytes:
        return canonical_json({
            "alg": self.alg, "issued_at": self.issued_at, "kid": self.kid,
            "revoked": sorted(self.revoked_token_ids),
        })

    def verify(self, keyset: KeySetDocument) -> bool:
        entry = keyset.get(self.kid)
        if entry is None or entry.alg != self.alg or not self.signature:
            return False
        return sig_verify(self.alg, entry.vk, self.signed_bytes(), self.signature, REVOCATION_CONTEXT)

    def to_json(self) -> str:
        doc = json.loads(self.signed_bytes())
        doc["signature"] = b64url_encode(self.signature)
        return canonical_json(doc).decode()

    @classmethod
    def from_json(cls, text: str | bytes) -> "RevocationSet":
        d = json.loads(text)
        return cls(frozenset(d["revoked"]), int(d["issued_at"]), d["kid"], d["alg"],
                   b64url_decode(d["signature"]) if d.get("signature") else b"")


def sign_revocation_set(jtis: Iterable[str], signing_key: SigningKey, now: int,
                        rng: EntropySource | None = None) -> RevocationSet:
    unsigned = RevocationSet(frozenset(jtis), int(now), signing_key.kid, signing_key.alg)
    sig = sig_sign(signing_key.alg, signing_key.sk, unsigned.signed_bytes(), REVOCATION_CONTEXT, rng)
    return replace(unsigned, signature=sig)


def revoke(jti: str, rset: RevocationSet | None, signing_key: SigningKey, now: int,
           rng: EntropySource | None = None) -> RevocationSet:
    """A freshly signed set with ``jti`` added."""
    current = rset.revoked_token_ids if rset is not None else frozenset()
    return sign_revocation_set(current | {jti}, signing_key, now, rng)


def is_revoked(jti: str, rset: RevocationSet | None) -> bool:
    return rset is not None and jti in rset.revoked_token_ids


# validation

def validate_token(token: str, keyset: KeySetDocument, expected_aud: str | None, now: int,
                   revocations: RevocationSet | None = None, *,
                   required_scope: str | Iterable[str] | None = None,
                   expected_sub: str | None = None) -> TokenClaims:
    parsed = parse_token(token)

    entry = keyset.get(parsed.header["kid"])
    if entry is None:
        raise UnknownKid(f"kid {parsed.header['kid']!r} not in key set")

    if parsed.header["alg"] != entry.alg or not sig_verify(
            entry.alg, entry.vk, parsed.signing_input, parsed.signature, b""):
        raise BadSignature("signature does not verify")

    claims = parsed.claims
    if claims.exp <= now:
        raise Expired(f"expired at {claims.exp}, now {now}")
    if revocations is not None:
        if not revocations.verify(keyset):
            raise RevocationSetInvalid("revocation set signature does not verify")
        if claims.jti in revocations.revoked_token_ids:
            raise Revoked(f"token {claims.jti} revoked")

    if expected_aud is not None and expected_aud not in claims.audiences:
        raise AudienceMismatch(f"token audience {claims.aud!r}, expected {expected_aud!r}")
    if required_scope is not None:
        needed = {required_scope} if isinstance(required_scope, str) else set(required_scope)
        if not needed <= set(claims.scope):
            raise ScopeMismatch(f"scope {sorted(needed - set(claims.scope))} not granted")
    if expected_sub is not None and claims.sub != expected_sub:
        raise SubjectMismatch(f"token subject {claims.sub!r}, peer {expected_sub!r}")
    return claims
