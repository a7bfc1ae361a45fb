"""Post-quantum SUCI: concealment of the subscriber's MSIN under a home-network KEM key.

Pipeline on the UE side::

    (kem_ct, ss) = Encaps(hn_ek)
    okm          = X9.63-KDF(ss, shared_info=kem_ct, 80)
    enc | icb | mac_key = okm[0:32] | okm[32:48] | okm[48:80]
    msin_ct      = AES-256-CTR(enc, icb, BCD(msin))
    mac_tag      = HMAC-SHA-256(mac_key, kem_ct | msin_ct)

MCC and MNC stay in clear so the serving network can route the request.
Scheme 0x0C carries a hybrid ciphertext (ML-KEM-768 ct | X25519 ephemeral)
and feeds ``mlkem_ss | x25519_ss`` into the KDF.
"""

from __future__ import annotations

import re
import struct
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .crypto.ecdh import dh_agree, dh_keygen
from .crypto.entropy import EntropySource, resolve
from .crypto.kdf import x963_kdf
from .crypto.kem import (
    check_decapsulation_key, encapsulation_key_valid, kem_decaps, kem_encaps, kem_keygen,
)
from .crypto.params import ML_KEM_512, ML_KEM_768, KemParamSet, kem_params
from .crypto.symmetric import SymmetricKeyMaterial, ctr_decrypt, ctr_encrypt, hmac_tag, hmac_verify
from .errors import QoreError
from .hybrid import (
    CIPHERTEXT_LEN as HYBRID_CT_LEN, HybridCiphertext, HybridPrivateKey, HybridPublicKey,
    MalformedPublicKey, hybrid_keygen,
)

MAGIC = b"\x53\x55"
WIRE_VERSION = 1
SUPI_TYPE_IMSI = 0
MAC_LEN = 32

SCHEME_MLKEM768 = 0x0A
SCHEME_MLKEM512 = 0x0B
SCHEME_HYBRID = 0x0C

SCHEME_NAMES = {
    SCHEME_MLKEM768: "ML-KEM-768",
    SCHEME_MLKEM512: "ML-KEM-512",
    SCHEME_HYBRID: "X25519+ML-KEM-768",
}


class InvalidSupi(QoreError):
    code = "invalid-supi"


class UnknownKeyId(QoreError):
    code = "unknown-key-id"


class MacMismatch(QoreError):
    code = "mac-mismatch"


class MalformedEnvelope(QoreError):
    code = "malformed-envelope"


class TruncatedInput(MalformedEnvelope):
    code = "truncated-input"


class UnknownSchemeId(MalformedEnvelope):
    code = "unknown-scheme-id"


class LengthOverflow(MalformedEnvelope):
    code = "length-overflow"


_SUPI_RE = re.compile(r"^imsi-(\d{3})(\d+)$")


@dataclass(frozen=True)
class SupiIdentifier:
    mcc: str
    mnc: str
    msin: str

    def __post_init__(self):
        if not (len(self.mcc) == 3 and self.mcc.isdigit()):
            raise InvalidSupi(f"MCC must be 3 digits: {self.mcc!r}")
        if not (2 <= len(self.mnc) <= 3 and self.mnc.isdigit()):
            raise InvalidSupi(f"MNC must be 2 or 3 digits: {self.mnc!r}")
        if not (5 <= len(self.msin) <= 10 and self.msin.isdigit()):
            raise InvalidSupi(f"MSIN must be 5 to 10 digits: {self.msin!r}")

    @classmethod
    def parse(cls, text: str, mnc_len: int = 2) -> "SupiIdentifier":
        m = _SUPI_RE.match(text.strip())
        if not m or not m.group(2).isascii():
            raise InvalidSupi(f"not an IMSI-type SUPI: {text!r}")
        rest = m.group(2)
        return cls(m.group(1), rest[:mnc_len], rest[mnc_len:])

    @property
    def home_network_id(self) -> str:
        return self.mcc + self.mnc

    def __str__(self) -> str:
        return f"imsi-{self.mcc}{self.mnc}{self.msin}"


def pack_msin(msin: str) -> bytes:
    """BCD, low nibble first, 0xF filler for odd digit counts."""
    digits = [int(c) for c in msin]
    if len(digits) % 2:
        digits.append(0xF)
    return bytes(digits[i] | digits[i + 1] << 4 for i in range(0, len(digits), 2))


def unpack_msin(data: bytes) -> str:
    out = []
    for i, b in enumerate(data):
        lo, hi = b & 0x0F, b >> 4
        if lo > 9:
            raise MalformedEnvelope("invalid BCD digit in MSIN")
        out.append(str(lo))
        if hi == 0xF and i == len(data) - 1:
            break
        if hi > 9:
            raise MalformedEnvelope("invalid BCD digit in MSIN")
        out.append(str(hi))
    return "".join(out)


@dataclass(frozen=True)
class HomeNetworkKeyRecord:
    key_id: int
    scheme_id: int
    ek: bytes
    dk: bytes = b""

    def __post_init__(self):
        if not 0 <= self.key_id <= 255:
            raise ValueError("key_id must fit in one byte")
        if self.scheme_id not in SCHEME_NAMES:
            raise UnknownSchemeId(f"scheme 0x{self.scheme_id:02x}")

    @property
    def params(self) -> KemParamSet:
        return ML_KEM_512 if self.scheme_id == SCHEME_MLKEM512 else ML_KEM_768

    @property
    def ct_len(self) -> int:
        return HYBRID_CT_LEN if self.scheme_id == SCHEME_HYBRID else self.params.ct_len

    def public_view(self) -> "HomeNetworkKeyRecord":
        """The UE copy: same record without the decapsulation key."""
        return HomeNetworkKeyRecord(self.key_id, self.scheme_id, self.ek)

    def __repr__(self) -> str:
        return (f"HomeNetworkKeyRecord(key_id={self.key_id}, "
                f"scheme={SCHEME_NAMES[self.scheme_id]}, has_dk={bool(self.dk)})")


def scheme_for(params: KemParamSet | str) -> int:
    name = kem_params(params).name
    if name == ML_KEM_768.name:
        return SCHEME_MLKEM768
    if name == ML_KEM_512.name:
        return SCHEME_MLKEM512
    raise UnknownSchemeId(f"no SUCI scheme registered for {name}")


def provision_home_network(params: KemParamSet | str | None = None, rng: EntropySource | None = None,
                           key_id: int = 1, *, hybrid: bool = False) -> HomeNetworkKeyRecord:
    rng = resolve(rng)
    if hybrid:
        pub, priv = hybrid_keygen(rng)
        return HomeNetworkKeyRecord(key_id, SCHEME_HYBRID, pub.encode(), priv.encode())
    scheme = scheme_for(params if params is not None else ML_KEM_768)
    ek, dk = kem_keygen(kem_params(params or ML_KEM_768), rng)
    return HomeNetworkKeyRecord(key_id, scheme, ek, dk)


class HomeNetworkKeyStore:
    """key_id -> record. Readers take the current snapshot without locking."""

    def __init__(self, records: Mapping[int, HomeNetworkKeyRecord] | None = None):
        self._lock = threading.Lock()
        self._records: dict[int, HomeNetworkKeyRecord] = dict(records or {})

    def add(self, record: HomeNetworkKeyRecord) -> None:
        with self._lock:
            if record.key_id in self._records:
                raise ValueError(f"key_id {record.key_id} already provisioned")
            updated = dict(self._records)
            updated[record.key_id] = record
            self._records = updated

    def remove(self, key_id: int) -> None:
        with self._lock:
            updated = dict(self._records)
            updated.pop(key_id, None)
            self._records = updated

    def get(self, key_id: int) -> HomeNetworkKeyRecord:
        try:
            return self._records[key_id]
        except KeyError:
            raise UnknownKeyId(f"no home-network key with id {key_id}") from None

    def __contains__(self, key_id: int) -> bool:
        return key_id in self._records

    def __len__(self) -> int:
        return len(self._records)


@dataclass(frozen=True)
class SuciEnvelope:
    supi_type: int
    home_network_id: str
    routing_indicator: str
    scheme_id: int
    hn_key_id: int
    kem_ct: bytes
    msin_ciphertext: bytes
    mac_tag: bytes = field(repr=False)

    def __str__(self) -> str:
        return (f"suci-{self.supi_type}-{self.home_network_id}-{self.routing_indicator}-"
                f"{self.scheme_id:#04x}-{self.hn_key_id}-{self.msin_ciphertext.hex()}")


def _derive(shared: bytes, kem_ct: bytes) -> SymmetricKeyMaterial:
    return SymmetricKeyMaterial(x963_kdf(shared, kem_ct, SymmetricKeyMaterial.LENGTH))


def _check_routing_indicator(ri: str) -> None:
    if not (1 <= len(ri) <= 4 and ri.isdigit() and ri.isascii()):
        raise InvalidSupi(f"routing indicator must be 1 to 4 digits: {ri!r}")


def _encapsulate(hn_pub: HomeNetworkKeyRecord, rng: EntropySource) -> tuple[bytes, bytes]:
    if hn_pub.scheme_id == SCHEME_HYBRID:
        try:
            pub = HybridPublicKey.decode(hn_pub.ek)
        except QoreError as exc:
            raise MalformedPublicKey(str(exc)) from exc
        if not encapsulation_key_valid(ML_KEM_768, pub.mlkem_ek):
            raise MalformedPublicKey("home-network ML-KEM key failed validation")
        mlkem_ct, mlkem_ss = kem_encaps(ML_KEM_768, pub.mlkem_ek, rng)
        eph_sk, eph_pk = dh_keygen(rng)
        return mlkem_ct + eph_pk, mlkem_ss + dh_agree(eph_sk, pub.x25519_pk)
    if not encapsulation_key_valid(hn_pub.params, hn_pub.ek):
        raise MalformedPublicKey(f"home-network {hn_pub.params.name} key failed validation")
    return kem_encaps(hn_pub.params, hn_pub.ek, rng)


def _decapsulate(record: HomeNetworkKeyRecord, kem_ct: bytes) -> bytes:
    if record.scheme_id == SCHEME_HYBRID:
        priv = HybridPrivateKey.decode(record.dk)
        ct = HybridCiphertext.decode(kem_ct)
        return kem_decaps(ML_KEM_768, priv.mlkem_dk, ct.mlkem_ct) + \
            dh_agree(priv.x25519_sk, ct.x25519_ephemeral_pk)
    return kem_decaps(record.params, record.dk, kem_ct)


def conceal_supi(supi: SupiIdentifier | str, hn_pub: HomeNetworkKeyRecord,
                 routing_indicator: str = "0", rng: EntropySource | None = None) -> SuciEnvelope:
    if isinstance(supi, str):
        supi = SupiIdentifier.parse(supi)
    _check_routing_indicator(routing_indicator)
    kem_ct, shared = _encapsulate(hn_pub, resolve(rng))
    with _derive(shared, kem_ct) as keys:
        msin_ct = ctr_encrypt(keys.enc_key, keys.icb, pack_msin(supi.msin))
        tag = hmac_tag(keys.mac_key, kem_ct + msin_ct)
    return SuciEnvelope(SUPI_TYPE_IMSI, supi.home_network_id, routing_indicator,
                        hn_pub.scheme_id, hn_pub.key_id, kem_ct, msin_ct, tag)


def deconceal_suci(env: SuciEnvelope, hn_store: HomeNetworkKeyStore | Mapping[int, HomeNetworkKeyRecord],
                   *, cipher: Callable[[bytes, bytes, bytes], bytes] = ctr_decrypt) -> SupiIdentifier:
    """Recover the SUPI. The MAC is checked before ``cipher`` is ever called."""
    if isinstance(hn_store, HomeNetworkKeyStore):
        record = hn_store.get(env.hn_key_id)
    elif env.hn_key_id in hn_store:
        record = hn_store[env.hn_key_id]
    else:
        raise UnknownKeyId(f"no home-network key with id {env.hn_key_id}")
    if not record.dk:
        raise UnknownKeyId(f"key {env.hn_key_id} has no decapsulation key on this side")
    if env.scheme_id != record.scheme_id:
        raise MalformedEnvelope("envelope scheme does not match the home-network key")
    if env.supi_type != SUPI_TYPE_IMSI:
        raise MalformedEnvelope(f"unsupported SUPI type {env.supi_type}")
    if len(env.kem_ct) != record.ct_len or len(env.mac_tag) != MAC_LEN:
        raise MalformedEnvelope("ciphertext or tag has the wrong length")
    if not 3 <= len(env.msin_ciphertext) <= 5:
        raise MalformedEnvelope("MSIN ciphertext has the wrong length")
    if len(env.home_network_id) not in (5, 6) or not env.home_network_id.isdigit():
        raise MalformedEnvelope("home network id must be 5 or 6 digits")
    shared = _decapsulate(record, env.kem_ct)
    with _derive(shared, env.kem_ct) as keys:
        if not hmac_verify(keys.mac_key, env.kem_ct + env.msin_ciphertext, env.mac_tag):
            raise MacMismatch("SUCI integrity check failed")
        packed = cipher(keys.enc_key, keys.icb, env.msin_ciphertext)
    hn = env.home_network_id
    try:
        return SupiIdentifier(hn[:3], hn[3:], unpack_msin(packed))
    except InvalidSupi as exc:
        raise MalformedEnvelope(str(exc)) from exc


# TLV wire format

_MAX_HN_ID = 6
_MAX_RI = 4
_MAX_MSIN_CT = 5


def encode_suci(env: SuciEnvelope) -> bytes:
    hn = env.home_network_id.encode("ascii")
    ri = env.routing_indicator.encode("ascii")
    if len(hn) > _MAX_HN_ID or len(ri) > _MAX_RI or len(env.msin_ciphertext) > _MAX_MSIN_CT:
        raise LengthOverflow("envelope field too long")
    if len(env.mac_tag) != MAC_LEN:
        raise MalformedEnvelope("MAC tag must be 32 bytes")
    return b"".join([
        MAGIC, bytes([WIRE_VERSION, env.supi_type, len(hn)]), hn,
        bytes([len(ri)]), ri, bytes([env.scheme_id, env.hn_key_id]),
        struct.pack(">H", len(env.kem_ct)), env.kem_ct,
        struct.pack(">H", len(env.msin_ciphertext)), env.msin_ciphertext,
        env.mac_tag,
    ])


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedInput(f"input ends inside {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack(">H", self.take(2, what))[0]


def _expected_ct_len(scheme_id: int) -> int:
    if scheme_id == SCHEME_HYBRID:
        return HYBRID_CT_LEN
    return (ML_KEM_512 if scheme_id == SCHEME_MLKEM512 else ML_KEM_768).ct_len


def _digits(raw: bytes, what: str) -> str:
    if not raw or not all(0x30 <= b <= 0x39 for b in raw):
        raise MalformedEnvelope(f"{what} must be decimal digits")
    return raw.decode("ascii")


def decode_suci(data: bytes) -> SuciEnvelope:
    r = _Reader(bytes(data))
    if r.take(2, "magic") != MAGIC:
        raise MalformedEnvelope("bad magic")
    version = r.u8("version")
    if version != WIRE_VERSION:
        raise MalformedEnvelope(f"unsupported wire version {version}")
    supi_type = r.u8("supi type")
    hn_len = r.u8("home network id length")
    if hn_len > _MAX_HN_ID:
        raise LengthOverflow(f"home network id length {hn_len}")
    hn = _digits(r.take(hn_len, "home network id"), "home network id")
    ri_len = r.u8("routing indicator length")
    if ri_len > _MAX_RI:
        raise LengthOverflow(f"routing indicator length {ri_len}")
    ri = _digits(r.take(ri_len, "routing indicator"), "routing indicator")
    scheme = r.u8("scheme id")
    if scheme not in SCHEME_NAMES:
        raise UnknownSchemeId(f"scheme 0x{scheme:02x}")
    key_id = r.u8("key id")
    ct_len = r.u16("ciphertext length")
    if ct_len != _expected_ct_len(scheme):
        raise LengthOverflow(f"ciphertext length {ct_len} invalid for scheme 0x{scheme:02x}")
    kem_ct = r.take(ct_len, "KEM ciphertext")
    msin_len = r.u16("MSIN ciphertext length")
    if msin_len > _MAX_MSIN_CT:
        raise LengthOverflow(f"MSIN ciphertext length {msin_len}")
    msin_ct = r.take(msin_len, "MSIN ciphertext")
    mac = r.take(MAC_LEN, "MAC tag")
    if r.pos != len(r.data):
        raise MalformedEnvelope(f"{len(r.data) - r.pos} trailing bytes")
    return SuciEnvelope(supi_type, hn, ri, scheme, key_id, kem_ct, msin_ct, mac)


def check_record(record: HomeNetworkKeyRecord) -> None:
    """Structural validation of a provisioned record."""
    if record.scheme_id == SCHEME_HYBRID:
        pub = HybridPublicKey.decode(record.ek)
        if not encapsulation_key_valid(ML_KEM_768, pub.mlkem_ek):
            raise MalformedPublicKey("ML-KEM part failed validation")
        if record.dk:
            HybridPrivateKey.decode(record.dk)
        return
    if not encapsulation_key_valid(record.params, record.ek):
        raise MalformedPublicKey(f"{record.params.name} key failed validation")
    if record.dk:
        check_decapsulation_key(record.params, record.dk)

