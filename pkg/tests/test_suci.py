import hmac
import random
from dataclasses import replace

import pytest
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.kdf.x963kdf import X963KDF
from hypothesis import given, settings
from hypothesis import strategies as st

from qore.crypto.entropy import SeededDrbg
from qore.crypto.kem import kem_decaps
from qore.crypto.symmetric import ctr_decrypt
from qore.suci import (
    SCHEME_HYBRID, SCHEME_MLKEM512, SCHEME_MLKEM768, HomeNetworkKeyRecord, HomeNetworkKeyStore, InvalidSupi,
    LengthOverflow, MacMismatch, MalformedEnvelope, SupiIdentifier, TruncatedInput, UnknownKeyId,
    UnknownSchemeId, check_record, conceal_supi, deconceal_suci, decode_suci, encode_suci, pack_msin,
    provision_home_network, unpack_msin,
)


def _provision(scheme, rng, key_id=1):
    if scheme == "hybrid":
        return provision_home_network(rng=rng, key_id=key_id, hybrid=True)
    return provision_home_network(scheme, rng, key_id)


SCHEMES = ["ML-KEM-768", "ML-KEM-512", "hybrid"]
SCHEME_BY_ID = {SCHEME_MLKEM768: "ML-KEM-768", SCHEME_MLKEM512: "ML-KEM-512", SCHEME_HYBRID: "hybrid"}


@pytest.fixture(scope="module", params=SCHEMES)
def record(request):
    return _provision(request.param, SeededDrbg(b"\x33" * 32))


class CountingCipher:
    def __init__(self):
        self.calls = 0

    def __call__(self, key, icb, data):
        self.calls += 1
        return ctr_decrypt(key, icb, data)


def test_supi_parse_and_format():
    s = SupiIdentifier.parse("imsi-001010123456789")
    assert (s.mcc, s.mnc, s.msin) == ("001", "01", "0123456789")
    assert str(s) == "imsi-001010123456789"
    assert SupiIdentifier.parse("imsi-310410123456", mnc_len=3).mnc == "410"
    for bad in ("imsi-0010", "imei-001010123456789", "imsi-00101abc45678", "imsi-0010112345678901"):
        with pytest.raises(InvalidSupi):
            SupiIdentifier.parse(bad)


@given(st.text("0123456789", min_size=5, max_size=10))
def test_bcd_roundtrip(msin):
    packed = pack_msin(msin)
    assert len(packed) == (len(msin) + 1) // 2
    assert unpack_msin(packed) == msin


def test_bcd_layout():
    assert pack_msin("12345") == bytes([0x21, 0x43, 0xF5])
    with pytest.raises(MalformedEnvelope):
        unpack_msin(bytes([0x2A]))


def test_roundtrip_and_public_view(record):
    rng = SeededDrbg(b"\x01" * 32)
    env = conceal_supi("imsi-001010123456789", record.public_view(), "0", rng)
    assert env.scheme_id == record.scheme_id
    assert env.home_network_id == "00101"
    assert len(env.msin_ciphertext) == 5
    assert str(deconceal_suci(env, HomeNetworkKeyStore({1: record}))) == "imsi-001010123456789"
    assert str(deconceal_suci(decode_suci(encode_suci(env)), {1: record})) == "imsi-001010123456789"


def _independent_unwrap(record, env):
    """Re-derive the MSIN with off-the-shelf primitives only."""
    if record.scheme_id == SCHEME_HYBRID:
        from qore.crypto.ecdh import dh_agree

        n = 1088
        ss = kem_decaps("ML-KEM-768", record.dk[:2400], env.kem_ct[:n]) + \
            dh_agree(record.dk[2400:2432], env.kem_ct[n:])
    else:
        ss = kem_decaps(record.params, record.dk, env.kem_ct)
    okm = X963KDF(hashes.SHA256(), 80, env.kem_ct).derive(ss)
    enc, icb, mac_key = okm[:32], okm[32:48], okm[48:]
    tag = hmac.new(mac_key, env.kem_ct + env.msin_ciphertext, "sha256").digest()
    assert hmac.compare_digest(tag, env.mac_tag)
    dec = Cipher(algorithms.AES(enc), modes.CTR(icb)).decryptor()
    return dec.update(env.msin_ciphertext) + dec.finalize()


def test_matches_independent_pipeline(record):
    rng = SeededDrbg(b"\x02" * 32)
    for msin in ("12345", "0123456789", "987654"):
        env = conceal_supi(f"imsi-00101{msin}", record, "12", rng)
        assert _independent_unwrap(record, env) == pack_msin(msin)


def test_random_roundtrips(record):
    rnd = random.Random(record.scheme_id)
    store = HomeNetworkKeyStore({record.key_id: record})
    for _ in range(40):
        supi = SupiIdentifier(f"{rnd.randrange(1000):03d}", f"{rnd.randrange(100):02d}",
                              "".join(rnd.choice("0123456789") for _ in range(rnd.randint(5, 10))))
        env = conceal_supi(supi, record.public_view(), str(rnd.randrange(10000)))
        assert deconceal_suci(decode_suci(encode_suci(env)), store) == supi


def test_concealments_are_unlinkable(record):
    a = conceal_supi("imsi-001010123456789", record)
    b = conceal_supi("imsi-001010123456789", record)
    assert a.kem_ct != b.kem_ct and a.msin_ciphertext != b.msin_ciphertext


def _tampered(env, field, pos, mask):
    value = bytearray(getattr(env, field))
    value[pos] ^= mask
    return replace(env, **{field: bytes(value)})


@pytest.mark.parametrize("mask", [0x01, 0x80])
def test_tamper_sweep_never_reaches_cipher(record, mask):
    env = conceal_supi("imsi-001010123456789", record, "0", SeededDrbg(b"\x04" * 32))
    store = {1: record}
    counter = CountingCipher()
    outcomes = {}
    for field in ("kem_ct", "msin_ciphertext", "mac_tag"):
        for pos in range(len(getattr(env, field))):
            try:
                deconceal_suci(_tampered(env, field, pos, mask), store, cipher=counter)
                outcome = "accepted"
            except MacMismatch:
                outcome = "mac-mismatch"
            outcomes[outcome] = outcomes.get(outcome, 0) + 1
    assert set(outcomes) == {"mac-mismatch"}
    assert counter.calls == 0
    deconceal_suci(env, store, cipher=counter)
    assert counter.calls == 1


def test_wrong_key_is_indistinguishable_from_tamper(record):
    other = _provision(SCHEME_BY_ID[record.scheme_id], SeededDrbg(b"\x44" * 32))
    env = conceal_supi("imsi-001010123456789", record)
    with pytest.raises(MacMismatch) as exc:
        deconceal_suci(env, {1: other})
    assert exc.value.code == "mac-mismatch"


def test_key_lookup_errors(record):
    env = conceal_supi("imsi-001010123456789", record)
    with pytest.raises(UnknownKeyId):
        deconceal_suci(env, HomeNetworkKeyStore())
    with pytest.raises(UnknownKeyId):
        deconceal_suci(env, {1: record.public_view()})


def test_scheme_mismatch_is_malformed():
    a = _provision("ML-KEM-768", SeededDrbg(b"\x05" * 32))
    b = _provision("ML-KEM-512", SeededDrbg(b"\x06" * 32))
    env = conceal_supi("imsi-001010123456789", a)
    with pytest.raises(MalformedEnvelope):
        deconceal_suci(env, {1: b})


def test_decoder_rejects_bad_framing(record):
    wire = encode_suci(conceal_supi("imsi-001010123456789", record))
    for cut in (0, 1, 5, 20, len(wire) - 1):
        with pytest.raises(MalformedEnvelope):
            decode_suci(wire[:cut])
    with pytest.raises(MalformedEnvelope):
        decode_suci(wire + b"\x00")
    with pytest.raises(MalformedEnvelope):
        decode_suci(b"XX" + wire[2:])
    bad_version = bytearray(wire)
    bad_version[2] = 9
    with pytest.raises(MalformedEnvelope):
        decode_suci(bytes(bad_version))


def test_decoder_error_subtypes():
    rec = _provision("ML-KEM-768", SeededDrbg(b"\x07" * 32))
    wire = bytearray(encode_suci(conceal_supi("imsi-001010123456789", rec, "0")))
    with pytest.raises(TruncatedInput):
        decode_suci(bytes(wire[:30]))
    # magic(2) version supi_type hn_len hn(5) ri_len ri(1) scheme key_id
    oversized = bytearray(wire)
    oversized[4] = 7
    with pytest.raises(LengthOverflow):
        decode_suci(bytes(oversized))
    unknown = bytearray(wire)
    unknown[12] = 0x7F
    with pytest.raises(UnknownSchemeId):
        decode_suci(bytes(unknown))


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=1200))
def test_decoder_never_crashes(data):
    try:
        decode_suci(data)
    except MalformedEnvelope:
        pass


def test_routing_indicator_validation(record):
    with pytest.raises(InvalidSupi):
        conceal_supi("imsi-001010123456789", record, "12345")
    with pytest.raises(InvalidSupi):
        conceal_supi("imsi-001010123456789", record, "")


def test_record_checks():
    rec = _provision("ML-KEM-768", SeededDrbg(b"\x08" * 32))
    check_record(rec)
    with pytest.raises(ValueError):
        HomeNetworkKeyRecord(256, SCHEME_MLKEM768, rec.ek)
    with pytest.raises(UnknownSchemeId):
        HomeNetworkKeyRecord(1, 0x01, rec.ek)
    assert rec.dk.hex()[:32] not in repr(rec)


def test_store_snapshot_semantics():
    rec = _provision("ML-KEM-512", SeededDrbg(b"\x09" * 32), key_id=3)
    store = HomeNetworkKeyStore()
    store.add(rec)
    assert 3 in store and len(store) == 1
    with pytest.raises(ValueError):
        store.add(rec)
    store.remove(3)
    with pytest.raises(UnknownKeyId):
        store.get(3)
