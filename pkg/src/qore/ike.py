"""IKEv2 key schedule with additional key exchanges and post-quantum PPK mixing.

    SKEYSEED  = prf(Ni | Nr, g^ir)
    {SK_d | SK_ai | SK_ar | SK_ei | SK_er | SK_pi | SK_pr}
              = prf+(SKEYSEED, Ni | Nr | SPIi | SPIr)

Each IKE_INTERMEDIATE exchange (RFC 9370) re-seeds from the previous SK_d:

    SKEYSEED' = prf(SK_d, SS_n | Ni | Nr)

and a PPK (RFC 8784) replaces the three keys that feed child SAs and AUTH:

    SK_d' = prf+(PPK, SK_d)    SK_pi' = prf+(PPK, SK_pi)    SK_pr' = prf+(PPK, SK_pr)

Every transformation returns a new ``IkeKeyState``.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
import os
import stat
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .crypto.ecdh import dh_agree, dh_keygen
from .crypto.entropy import EntropySource, resolve
from .crypto.kem import kem_decaps, kem_encaps, kem_keygen
from .crypto.params import ML_KEM_768
from .errors import OutputTooLong, QoreError

log = logging.getLogger(__name__)

PRFS = {"HMAC-SHA-256": hashlib.sha256, "HMAC-SHA-384": hashlib.sha384}
DEFAULT_PRF = "HMAC-SHA-384"
MAX_EXCHANGES = 7
PPK_LEN = 32
MIN_NONCE = 16
MAX_NONCE = 256
SPI_LEN = 8
METHODS = ("DH-2048", "X25519", "ECP-384", "ML-KEM-768")

SK_NAMES = ("sk_d", "sk_ai", "sk_ar", "sk_ei", "sk_er", "sk_pi", "sk_pr")


class IkeError(QoreError):
    code = "ike-error"


class InvalidNonce(IkeError):
    code = "invalid-nonce"


class EmptySharedSecret(IkeError):
    code = "empty-shared-secret"


class StateNotDerived(IkeError):
    code = "state-not-derived"


class PpkAlreadyMixed(IkeError):
    code = "ppk-already-mixed"


class UnknownPpkId(IkeError):
    code = "unknown-ppk-id"


class TooManyExchanges(IkeError):
    code = "too-many-exchanges"


class AuthenticationFailed(IkeError):
    code = "ike-auth-failed"


def _hash(prf_name: str):
    try:
        return PRFS[prf_name]
    except KeyError:
        raise ValueError(f"unsupported PRF {prf_name!r}") from None


def prf_len(prf_name: str) -> int:
    return _hash(prf_name)().digest_size


def prf(prf_name: str, key: bytes, data: bytes) -> bytes:
    return hmac.new(key, data, _hash(prf_name)).digest()


def prf_plus(prf_name: str, key: bytes, seed: bytes, length: int) -> bytes:
    """T1 = prf(K, S | 0x01), Tn = prf(K, Tn-1 | S | n), concatenated and truncated."""
    n = prf_len(prf_name)
    if length > 255 * n:
        raise OutputTooLong(f"prf+ output limited to {255 * n} bytes")
    out, block = b"", b""
    for counter in range(1, -(-length // n) + 1):
        block = prf(prf_name, key, block + seed + bytes([counter]))
        out += block
    return out[:length]


@dataclass(frozen=True)
class KeyLengthProfile:
    """Byte lengths of the negotiated transforms. SK_d/pi/pr always take the PRF length."""

    name: str
    prf: str
    encr_key_len: int
    integ_key_len: int

    @property
    def total(self) -> int:
        p = prf_len(self.prf)
        return 3 * p + 2 * self.integ_key_len + 2 * self.encr_key_len

    def lengths(self) -> dict[str, int]:
        p = prf_len(self.prf)
        return {"sk_d": p, "sk_ai": self.integ_key_len, "sk_ar": self.integ_key_len,
                "sk_ei": self.encr_key_len, "sk_er": self.encr_key_len, "sk_pi": p, "sk_pr": p}


PROFILES = {
    p.name: p for p in (
        KeyLengthProfile("AES-256-GCM/HMAC-SHA-384", "HMAC-SHA-384", 32, 48),
        KeyLengthProfile("AES-256-GCM/HMAC-SHA-256", "HMAC-SHA-256", 32, 32),
    )
}
DEFAULT_PROFILE = PROFILES["AES-256-GCM/HMAC-SHA-384"]


def profile_for(prf_name: str) -> KeyLengthProfile:
    for p in PROFILES.values():
        if p.prf == prf_name:
            return p
    raise ValueError(f"no key-length profile for {prf_name}")


@dataclass(frozen=True)
class PpkEntry:
    ppk_id: str
    ppk: bytes = field(repr=False)

    def __post_init__(self):
        if len(self.ppk) != PPK_LEN:
            raise ValueError(f"PPK must be exactly {PPK_LEN} bytes")
        if not self.ppk_id:
            raise ValueError("PPK id must be non-empty")


@dataclass(frozen=True)
class IkeKeyState:
    prf: str
    ni: bytes
    nr: bytes
    spi_i: bytes
    spi_r: bytes
    skeyseed: bytes = field(repr=False)
    profile: KeyLengthProfile | None = None
    sk_d: bytes = field(default=b"", repr=False)
    sk_ai: bytes = field(default=b"", repr=False)
    sk_ar: bytes = field(default=b"", repr=False)
    sk_ei: bytes = field(default=b"", repr=False)
    sk_er: bytes = field(default=b"", repr=False)
    sk_pi: bytes = field(default=b"", repr=False)
    sk_pr: bytes = field(default=b"", repr=False)
    exchanges: int = 1
    ppk_mixed: bool = False

    @property
    def derived(self) -> bool:
        return bool(self.sk_d)

    def keys(self) -> dict[str, bytes]:
        return {name: getattr(self, name) for name in SK_NAMES}

    def fingerprints(self) -> dict[str, str]:
        return {name: hashlib.sha256(v).hexdigest()[:16] for name, v in self.keys().items()}


def _check_nonce(name: str, nonce: bytes) -> None:
    if not MIN_NONCE <= len(nonce) <= MAX_NONCE:
        raise InvalidNonce(f"{name} must be {MIN_NONCE}..{MAX_NONCE} bytes, got {len(nonce)}")


def initial_skeyseed(prf_name: str, ni: bytes, nr: bytes, ss0: bytes,
                     spi_i: bytes = b"\x00" * SPI_LEN, spi_r: bytes = b"\x00" * SPI_LEN) -> IkeKeyState:
    _check_nonce("Ni", ni)
    _check_nonce("Nr", nr)
    if not ss0:
        raise EmptySharedSecret("IKE_SA_INIT shared secret is empty")
    if len(spi_i) != SPI_LEN or len(spi_r) != SPI_LEN:
        raise ValueError("SPIs must be 8 bytes")
    return IkeKeyState(prf_name, bytes(ni), bytes(nr), bytes(spi_i), bytes(spi_r),
                       prf(prf_name, ni + nr, ss0))


def derive_sk(state: IkeKeyState, profile: KeyLengthProfile | str | None = None) -> IkeKeyState:
    if isinstance(profile, str):
        profile = PROFILES[profile]
    profile = profile or state.profile or profile_for(state.prf)
    if profile.prf != state.prf:
        raise ValueError(f"profile PRF {profile.prf} does not match state PRF {state.prf}")
    lengths = profile.lengths()
    keymat = prf_plus(state.prf, state.skeyseed, state.ni + state.nr + state.spi_i + state.spi_r,
                      profile.total)
    out, pos = {}, 0
    for name in SK_NAMES:
        out[name] = keymat[pos:pos + lengths[name]]
        pos += lengths[name]
    return replace(state, profile=profile, **out)


def mix_intermediate(state: IkeKeyState, additional_ss: bytes) -> IkeKeyState:
    if not state.derived:
        raise StateNotDerived("derive SK_* before mixing an additional exchange")
    if not additional_ss:
        raise EmptySharedSecret("additional key exchange produced no secret")
    if state.ppk_mixed:
        raise PpkAlreadyMixed("additional exchanges must precede PPK mixing")
    if state.exchanges >= MAX_EXCHANGES:
        raise TooManyExchanges(f"at most {MAX_EXCHANGES} key exchanges per IKE SA")
    skeyseed = prf(state.prf, state.sk_d, additional_ss + state.ni + state.nr)
    return derive_sk(replace(state, skeyseed=skeyseed, exchanges=state.exchanges + 1))


def mix_ppk(state: IkeKeyState, ppk: PpkEntry) -> IkeKeyState:
    if not state.derived:
        raise StateNotDerived("derive SK_* before mixing a PPK")
    if state.ppk_mixed:
        raise PpkAlreadyMixed("a PPK has already been mixed into this state")

    def mixed(old: bytes) -> bytes:
        return prf_plus(state.prf, ppk.ppk, old, len(old))

    return replace(state, sk_d=mixed(state.sk_d), sk_pi=mixed(state.sk_pi),
                   sk_pr=mixed(state.sk_pr), ppk_mixed=True)


def child_sa_keys(state: IkeKeyState, ni: bytes, nr: bytes, length: int,
                  g_ir: bytes = b"") -> bytes:
    """KEYMAT = prf+(SK_d, [g^ir (new)] | Ni | Nr)."""
    if not state.derived:
        raise StateNotDerived("no SK_d yet")
    _check_nonce("Ni", ni)
    _check_nonce("Nr", nr)
    return prf_plus(state.prf, state.sk_d, g_ir + ni + nr, length)


# schedules

@dataclass(frozen=True)
class KeyExchange:
    method: str
    shared_secret: bytes = field(repr=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown key exchange method {self.method!r}")


@dataclass(frozen=True)
class KeyExchangeSchedule:
    exchanges: tuple[KeyExchange, ...]

    def __post_init__(self):
        object.__setattr__(self, "exchanges", tuple(self.exchanges))
        if not self.exchanges:
            raise ValueError("a schedule needs the IKE_SA_INIT exchange")
        if len(self.exchanges) > MAX_EXCHANGES:
            raise TooManyExchanges(f"{len(self.exchanges)} exchanges, limit {MAX_EXCHANGES}")


def run_schedule(schedule: KeyExchangeSchedule, ni: bytes, nr: bytes, spi_i: bytes, spi_r: bytes,
                 *, prf_name: str = DEFAULT_PRF, profile: KeyLengthProfile | str | None = None,
                 ppk: PpkEntry | None = None) -> IkeKeyState:
    first, *rest = schedule.exchanges
    state = derive_sk(initial_skeyseed(prf_name, ni, nr, first.shared_secret, spi_i, spi_r), profile)
    for ex in rest:
        state = mix_intermediate(state, ex.shared_secret)
    if ppk is not None:
        state = mix_ppk(state, ppk)
    return state


# PPK store

def parse_ppk_store(text: str) -> dict[str, PpkEntry]:
    out: dict[str, PpkEntry] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        ppk_id, sep, value = line.partition(":")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'ppk_id: hex'")
        ppk_id = ppk_id.strip()
        if ppk_id in out:
            raise ValueError(f"line {lineno}: duplicate PPK id {ppk_id!r}")
        out[ppk_id] = PpkEntry(ppk_id, bytes.fromhex(value.strip()))
    return out


def load_ppk_store(path: str | os.PathLike) -> dict[str, PpkEntry]:
    """Read a ``ppk_id: hex`` file. Logs a warning when group or others can read it."""
    path = Path(path)
    mode = path.stat().st_mode
    if mode & (stat.S_IRWXG | stat.S_IRWXO):
        log.warning("PPK store %s has mode %o; expected 0600", path, stat.S_IMODE(mode))
    return parse_ppk_store(path.read_text())


def resolve_ppk(store: Mapping[str, PpkEntry], ppk_id: str) -> PpkEntry:
    try:
        return store[ppk_id]
    except KeyError:
        raise UnknownPpkId(f"no PPK with id {ppk_id!r}") from None


# transcripts for the CLI

def state_from_transcript(doc: Mapping, ppk_store: Mapping[str, PpkEntry] | None = None) -> IkeKeyState:
    """Build a state from ``{"prf", "profile", "ni", "nr", "spi_i", "spi_r",
    "exchanges": [{"method", "shared_secret"}], "ppk_id"}`` (byte fields hex)."""
    prf_name = doc.get("prf", DEFAULT_PRF)
    schedule = KeyExchangeSchedule(tuple(
        KeyExchange(e["method"], bytes.fromhex(e["shared_secret"])) for e in doc["exchanges"]))
    ppk = None
    if doc.get("ppk_id"):
        ppk = resolve_ppk(ppk_store or {}, doc["ppk_id"])
    return run_schedule(
        schedule, bytes.fromhex(doc["ni"]), bytes.fromhex(doc["nr"]),
        bytes.fromhex(doc.get("spi_i", "00" * SPI_LEN)), bytes.fromhex(doc.get("spi_r", "00" * SPI_LEN)),
        prf_name=prf_name, profile=doc.get("profile"), ppk=ppk)


def state_to_json(state: IkeKeyState, show_keys: bool = False) -> dict:
    out = {"prf": state.prf, "profile": state.profile.name if state.profile else None,
           "exchanges": state.exchanges, "ppk_mixed": state.ppk_mixed}
    if show_keys:
        out["skeyseed"] = state.skeyseed.hex()
        out.update({k: v.hex() for k, v in state.keys().items()})
    else:
        out["fingerprints"] = state.fingerprints()
    return out


# two-party negotiation

AUTH_LABEL = b"QORE-IKE-AUTH"


def auth_payload(state: IkeKeyState, initiator: bool) -> bytes:
    """Simplified AUTH: prf(SK_p, label | Ni | Nr | SPIi | SPIr | role)."""
    key = state.sk_pi if initiator else state.sk_pr
    role = b"I" if initiator else b"R"
    return prf(state.prf, key, AUTH_LABEL + state.ni + state.nr + state.spi_i + state.spi_r + role)


@dataclass
class NegotiationResult:
    initiator: IkeKeyState
    responder: IkeKeyState
    child_keymat: bytes = field(repr=False)


def negotiate(initiator_ppk: PpkEntry | None, responder_ppk: PpkEntry | None,
              rng: EntropySource | None = None, *, prf_name: str = DEFAULT_PRF,
              additional: Sequence[str] = ("ML-KEM-768",), child_len: int = 64) -> NegotiationResult:
    """Run IKE_SA_INIT (X25519), IKE_INTERMEDIATE (ML-KEM-768) and IKE_AUTH between two
    in-process peers. Raises ``AuthenticationFailed`` when the peers' AUTH values disagree,
    which is what a PPK mismatch produces."""
    rng = resolve(rng)
    ni, nr = rng.random_bytes(32), rng.random_bytes(32)
    spi_i, spi_r = rng.random_bytes(SPI_LEN), rng.random_bytes(SPI_LEN)

    xi_sk, xi_pk = dh_keygen(rng)
    xr_sk, xr_pk = dh_keygen(rng)
    st_i = derive_sk(initial_skeyseed(prf_name, ni, nr, dh_agree(xi_sk, xr_pk), spi_i, spi_r))
    st_r = derive_sk(initial_skeyseed(prf_name, ni, nr, dh_agree(xr_sk, xi_pk), spi_i, spi_r))

    for method in additional:
        if method != "ML-KEM-768":
            raise ValueError(f"negotiation supports ML-KEM-768 intermediates, not {method}")
        ek, dk = kem_keygen(ML_KEM_768, rng)
        ct, ss_r = kem_encaps(ML_KEM_768, ek, rng)
        st_i = mix_intermediate(st_i, kem_decaps(ML_KEM_768, dk, ct))
        st_r = mix_intermediate(st_r, ss_r)

    if initiator_ppk is not None:
        st_i = mix_ppk(st_i, initiator_ppk)
    if responder_ppk is not None:
        st_r = mix_ppk(st_r, responder_ppk)

    if not hmac.compare_digest(auth_payload(st_i, True), auth_payload(st_r, True)):
        raise AuthenticationFailed("responder could not verify initiator AUTH")
    if not hmac.compare_digest(auth_payload(st_r, False), auth_payload(st_i, False)):
        raise AuthenticationFailed("initiator could not verify responder AUTH")

    ni2, nr2 = rng.random_bytes(32), rng.random_bytes(32)
    keymat = child_sa_keys(st_i, ni2, nr2, child_len)
    if keymat != child_sa_keys(st_r, ni2, nr2, child_len):
        raise AuthenticationFailed("child SA key material differs")
    return NegotiationResult(st_i, st_r, keymat)


def load_transcript(path: str | os.PathLike) -> dict:
    return json.loads(Path(path).read_text())


def iter_sk_pairs(a: IkeKeyState, b: IkeKeyState) -> Iterable[tuple[str, bytes, bytes]]:
    for name in SK_NAMES:
        yield name, getattr(a, name), getattr(b, name)
