import hashlib
import hmac

import pytest
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import x25519
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.kdf.x963kdf import X963KDF
from hypothesis import given, settings
from hypothesis import strategies as st

from qore.crypto.ecdh import dh_agree, dh_keygen, dh_public
from qore.crypto.entropy import ExternalQrngStub, SeededDrbg, SystemEntropy
from qore.crypto.kat import run_kat, verify_checksums
from qore.crypto.kdf import hkdf, hkdf_expand, hkdf_extract, x963_kdf
from qore.crypto.kem import (
    Q, encapsulation_key_valid, kem_decaps, kem_decaps_reference, kem_encaps, kem_keygen,
)
from qore.crypto.params import KEM_PARAMS, ML_KEM_768, SIG_PARAMS
from qore.crypto.sig import ed25519_keygen, ed25519_sign, ed25519_verify, sig_keygen, sig_sign, sig_verify
from qore.crypto.symmetric import (
    SymmetricKeyMaterial, aead_open, aead_seal, ctr_encrypt, hmac_tag, hmac_verify,
)
from qore.errors import (
    AuthFailure, ContextTooLong, EntropyUnavailable, LengthMismatch, OutputTooLong,
    SmallOrderPoint,
)

# RFC 5869 appendix A, cases 1 and 3
HKDF_CASES = [
    (bytes([0x0B] * 22), bytes(range(13)), bytes(range(0xF0, 0xFA)), 42,
     "077709362c2e32df0ddc3f0dc47bba6390b6c73bb50f9c3122ec844ad7c2b3e5",
     "3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865"),
    (bytes([0x0B] * 22), b"", b"", 42,
     "19ef24a32c717b167f33a91d6f648bdf96596776afdb6377ac434c1c293ccb04",
     "8da4e775a563c18f715f802a063c5a31b8a11f5c5ee1879ec3454e5f3c738d2d9d201395faa4b61a96c8"),
]


@pytest.mark.parametrize("ikm,salt,info,length,prk,okm", HKDF_CASES)
def test_hkdf_rfc5869(ikm, salt, info, length, prk, okm):
    assert hkdf_extract(salt, ikm).hex() == prk
    assert hkdf_expand(bytes.fromhex(prk), info, length).hex() == okm


@settings(max_examples=50, deadline=None)
@given(st.binary(max_size=64), st.binary(min_size=1, max_size=64), st.binary(max_size=32),
       st.integers(1, 255 * 32))
def test_hkdf_matches_cryptography(salt, ikm, info, length):
    ref = HKDF(hashes.SHA256(), length, salt or None, info).derive(ikm)
    assert hkdf(salt, ikm, info, length) == ref


def test_hkdf_rejects_overlong_output():
    with pytest.raises(OutputTooLong):
        hkdf_expand(b"\x00" * 32, b"", 255 * 32 + 1)


@settings(max_examples=50, deadline=None)
@given(st.binary(min_size=1, max_size=64), st.binary(max_size=32), st.integers(1, 200),
       st.sampled_from(["sha256", "sha384"]))
def test_x963_matches_cryptography(z, info, length, hash_name):
    algo = hashes.SHA256() if hash_name == "sha256" else hashes.SHA384()
    assert x963_kdf(z, info, length, hash_name) == X963KDF(algo, length, info).derive(z)


def test_hmac_rfc4231_case1():
    tag = hmac_tag(bytes([0x0B] * 20), b"Hi There")
    assert tag.hex() == "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"
    assert hmac_verify(bytes([0x0B] * 20), b"Hi There", tag)
    assert not hmac_verify(bytes([0x0B] * 20), b"Hi there", tag)


def test_aes256_ctr_sp800_38a():
    key = bytes.fromhex("603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4")
    icb = bytes.fromhex("f0f1f2f3f4f5f6f7f8f9fafbfcfdfeff")
    pt = bytes.fromhex("6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51")
    ct = ctr_encrypt(key, icb, pt)
    assert ct.hex() == "601ec313775789a5b7a7f504bbf3d228f443e3ca4d62b59aca84e990cacaf5c5"
    assert ctr_encrypt(key, icb, ct) == pt


def test_ctr_length_checks():
    with pytest.raises(LengthMismatch):
        ctr_encrypt(b"\x00" * 16, b"\x00" * 16, b"x")
    with pytest.raises(LengthMismatch):
        ctr_encrypt(b"\x00" * 32, b"\x00" * 12, b"x")


@pytest.mark.parametrize("alg", ["AES-256-GCM", "AES-128-GCM", "CHACHA20-POLY1305"])
def test_aead_roundtrip_and_tamper(alg):
    key = bytes(32 if alg != "AES-128-GCM" else 16)
    ct = aead_seal(key, b"\x01" * 12, b"aad", b"payload", alg)
    assert aead_open(key, b"\x01" * 12, b"aad", ct, alg) == b"payload"
    with pytest.raises(AuthFailure):
        aead_open(key, b"\x01" * 12, b"aae", ct, alg)
    bad = bytes([ct[0] ^ 1]) + ct[1:]
    with pytest.raises(AuthFailure):
        aead_open(key, b"\x01" * 12, b"aad", bad, alg)


def test_key_material_release_zeroes_buffers():
    km = SymmetricKeyMaterial(bytes(range(1, 81)))
    with km:
        assert km.enc_key == bytes(range(1, 33))
        assert km.icb == bytes(range(33, 49))
        assert km.mac_key == bytes(range(49, 81))
    assert km.released
    assert all(not any(buf) for buf in km.buffers())


# RFC 7748 section 6.1
ALICE_SK = "77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a"
ALICE_PK = "8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a"
BOB_SK = "5dab087e624a8a4b79e17f8b83800ee66f3bb1292618b6fd1c2f8b27ff88e0eb"
BOB_PK = "de9edb7d7b7dc1b4d35b61c2ece435373f8343c85b78674dadfc7e146f882b4f"
SHARED = "4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742"


def test_x25519_rfc7748():
    assert dh_public(bytes.fromhex(ALICE_SK)).hex() == ALICE_PK
    assert dh_public(bytes.fromhex(BOB_SK)).hex() == BOB_PK
    assert dh_agree(bytes.fromhex(ALICE_SK), bytes.fromhex(BOB_PK)).hex() == SHARED
    assert dh_agree(bytes.fromhex(BOB_SK), bytes.fromhex(ALICE_PK)).hex() == SHARED


def test_x25519_rejects_small_order_points(drbg):
    sk, _ = dh_keygen(drbg)
    for point in (bytes(32), b"\x01" + bytes(31)):
        with pytest.raises(SmallOrderPoint):
            dh_agree(sk, point)


def test_x25519_matches_cryptography(drbg):
    sk, pk = dh_keygen(drbg)
    ref = x25519.X25519PrivateKey.from_private_bytes(sk).public_key().public_bytes_raw()
    assert pk == ref


# entropy

def test_drbg_is_reproducible_and_seed_sensitive():
    a, b = SeededDrbg(b"\x01" * 32), SeededDrbg(b"\x01" * 32)
    assert a.random_bytes(100) == b.random_bytes(100)
    assert a.random_bytes(5000) == b.random_bytes(5000)
    assert SeededDrbg(b"\x02" * 32).random_bytes(32) != SeededDrbg(b"\x01" * 32).random_bytes(32)


def test_drbg_rejects_short_seed():
    with pytest.raises(ValueError):
        SeededDrbg(b"short")


def test_drbg_matches_hmac_drbg_definition():
    seed = bytes(range(32))
    # instantiate and generate by hand: K, V updated with HMAC-SHA-256
    k, v = b"\x00" * 32, b"\x01" * 32
    k = hmac.new(k, v + b"\x00" + seed, hashlib.sha256).digest()
    v = hmac.new(k, v, hashlib.sha256).digest()
    k = hmac.new(k, v + b"\x01" + seed, hashlib.sha256).digest()
    v = hmac.new(k, v, hashlib.sha256).digest()
    v = hmac.new(k, v, hashlib.sha256).digest()
    assert SeededDrbg(seed).random_bytes(32) == v


def test_system_entropy_and_stub():
    assert len(SystemEntropy().random_bytes(48)) == 48
    stub = ExternalQrngStub(bytes(range(10)))
    assert stub.random_bytes(4) == bytes(range(4))
    assert stub.random_bytes(6) == bytes(range(4, 10))
    with pytest.raises(EntropyUnavailable):
        stub.random_bytes(1)
    with pytest.raises(EntropyUnavailable):
        ExternalQrngStub(lambda n: b"\x00" * (n - 1)).random_bytes(8)


# ML-KEM / ML-DSA

@pytest.mark.parametrize("name", sorted(KEM_PARAMS))
def test_kem_roundtrip_and_sizes(name, drbg):
    p = KEM_PARAMS[name]
    ek, dk = kem_keygen(p, drbg)
    assert (len(ek), len(dk)) == (p.ek_len, p.dk_len)
    ct, ss = kem_encaps(p, ek, drbg)
    assert len(ct) == p.ct_len and len(ss) == 32
    assert kem_decaps(p, dk, ct) == ss
    assert kem_decaps_reference(p, dk, ct) == ss


def test_kem_native_and_seeded_paths_interoperate():
    ek, dk = kem_keygen(ML_KEM_768)
    ct, ss = kem_encaps(ML_KEM_768, ek, SeededDrbg(b"\x05" * 32))
    assert kem_decaps(ML_KEM_768, dk, ct) == ss


def test_kem_implicit_rejection(drbg):
    ek, dk = kem_keygen(ML_KEM_768, drbg)
    ct, ss = kem_encaps(ML_KEM_768, ek, drbg)
    bad = bytes([ct[0] ^ 1]) + ct[1:]
    assert kem_decaps(ML_KEM_768, dk, bad) != ss
    assert kem_decaps(ML_KEM_768, dk, bad) == kem_decaps_reference(ML_KEM_768, dk, bad)


def _modulus_check_by_coefficients(ek, k):
    t = ek[: 384 * k]
    coeffs = []
    for i in range(0, len(t), 3):
        coeffs.append(t[i] | (t[i + 1] & 0x0F) << 8)
        coeffs.append(t[i + 1] >> 4 | t[i + 2] << 4)
    return all(c < Q for c in coeffs)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_encapsulation_key_check_matches_coefficient_decode(data):
    p = ML_KEM_768
    ek = bytearray(kem_keygen(p, SeededDrbg(b"\x07" * 32))[0])
    for _ in range(data.draw(st.integers(0, 3))):
        pos = data.draw(st.integers(0, 384 * p.k - 1))
        ek[pos] = data.draw(st.sampled_from([0x0D, 0x0E, 0x0F, 0xD0, 0xD1, 0xFF, 0x00, 0x01]))
    assert encapsulation_key_valid(p, bytes(ek)) == _modulus_check_by_coefficients(bytes(ek), p.k)


def test_encapsulation_key_check_boundary():
    p = ML_KEM_768
    ek = bytearray(kem_keygen(p, SeededDrbg(b"\x08" * 32))[0])
    ek[0], ek[1] = 0x00, (ek[1] & 0xF0) | 0x0D  # coefficient 0xD00 = 3328, still valid
    assert encapsulation_key_valid(p, bytes(ek)) == _modulus_check_by_coefficients(bytes(ek), p.k)
    ek[0] = 0x01  # 3329
    assert not encapsulation_key_valid(p, bytes(ek))
    assert not encapsulation_key_valid(p, bytes(ek[:-1]))


@pytest.mark.parametrize("name", sorted(SIG_PARAMS))
def test_mldsa_sign_verify_context(name, drbg):
    p = SIG_PARAMS[name]
    vk, sk = sig_keygen(p, drbg)
    assert (len(vk), len(sk)) == (p.vk_len, p.sk_len)
    sig = sig_sign(p, sk, b"msg", b"ctx", drbg)
    assert len(sig) == p.sig_len
    assert sig_verify(p, vk, b"msg", sig, b"ctx")
    assert not sig_verify(p, vk, b"msg", sig, b"other")
    assert not sig_verify(p, vk, b"msh", sig, b"ctx")


def test_mldsa_context_limit(drbg):
    vk, sk = sig_keygen("ML-DSA-44", drbg)
    with pytest.raises(ContextTooLong):
        sig_sign("ML-DSA-44", sk, b"m", b"x" * 256)


def test_ed25519(drbg):
    pk, sk = ed25519_keygen(drbg)
    sig = ed25519_sign(sk, b"m")
    assert ed25519_verify(pk, b"m", sig)
    assert not ed25519_verify(pk, b"n", sig)


def test_kat_files_match_checksums():
    assert verify_checksums() and all(ok for _, ok in verify_checksums())


@pytest.mark.parametrize("alg", ["ML-KEM-512", "ML-KEM-1024", "ML-DSA-44", "ML-DSA-87"])
def test_other_parameter_sets_pass_kats(alg):
    results = run_kat(alg, 3)
    assert results and all(r.ok for r in results)
