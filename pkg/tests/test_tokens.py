import base64
import json
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qore.crypto.entropy import SeededDrbg
from qore.crypto.sig import sig_verify_reference
from qore.tokens import (
    AudienceMismatch, BadSignature, Expired, InvalidLifetime, KeySetDocument, MalformedToken, Revoked,
    RevocationSetInvalid, ScopeMismatch, SubjectMismatch, TokenError, UnknownKid, UnsupportedAlg,
    b64url_decode, b64url_encode, generate_signing_key, issue_token, make_claims, parse_token, revoke,
    sign_revocation_set, validate_token,
)

NOW = 1767225600
ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_."


@pytest.fixture(scope="module")
def nrf():
    rng = SeededDrbg(b"\x61" * 32)
    key = generate_signing_key("nrf-key-1", "ML-DSA-65", rng)
    keyset = KeySetDocument((key.entry(),))
    return key, keyset, rng


def _claims(rng, **over):
    base = dict(iss="nrf", sub="amf1", aud="UDM", scope=["nudm-sdm"], nf_type="AMF", now=NOW, rng=rng)
    base.update(over)
    return make_claims(**base)


def _token(nrf, **over):
    key, _, rng = nrf
    return issue_token(key, None, _claims(rng, **over), NOW, rng=rng)


def _unpad(seg):
    return base64.urlsafe_b64decode(seg + "=" * (-len(seg) % 4))


def test_compact_form_checked_independently(nrf):
    key, _, _ = nrf
    token = _token(nrf)
    h, p, s = token.split(".")
    header = json.loads(_unpad(h))
    payload = json.loads(_unpad(p))
    assert header == {"alg": "ML-DSA-65", "kid": "nrf-key-1", "typ": "JWT"}
    assert payload["aud"] == "UDM" and payload["exp"] - payload["iat"] == 900
    assert set(payload) >= {"iss", "sub", "aud", "exp", "scope", "nf_instance_id", "nf_type", "jti"}
    assert sig_verify_reference("ML-DSA-65", key.vk, f"{h}.{p}".encode(), _unpad(s), b"")


def test_valid_token_accepted(nrf):
    _, keyset, _ = nrf
    claims = validate_token(_token(nrf), keyset, "UDM", NOW + 10, required_scope="nudm-sdm",
                            expected_sub="amf1")
    assert claims.sub == "amf1" and claims.scope == ("nudm-sdm",)


def test_b64url_is_strict():
    assert b64url_decode(b64url_encode(b"\xff\xfe")) == b"\xff\xfe"
    for bad in ("a=", "a+b/", "abcde", "é", "_x"):
        with pytest.raises(ValueError):
            b64url_decode(bad)


def test_parse_rejects_structural_problems(nrf):
    token = _token(nrf)
    h, p, s = token.split(".")
    for bad in ("", "a.b", f"{h}.{p}", f"{h}.{p}.{s}.x", f"{h}..{s}", 42):
        with pytest.raises(MalformedToken):
            parse_token(bad)
    dup = b64url_encode(b'{"alg":"ML-DSA-65","alg":"ML-DSA-65","kid":"k","typ":"JWT"}')
    with pytest.raises(MalformedToken):
        parse_token(f"{dup}.{p}.{s}")
    extra = json.loads(_unpad(p))
    extra["admin"] = True
    with pytest.raises(MalformedToken):
        parse_token(f"{h}.{b64url_encode(json.dumps(extra).encode())}.{s}")


def test_lifetime_bounds(nrf):
    key, _, rng = nrf
    for lifetime in (899, 3601):
        with pytest.raises(InvalidLifetime):
            issue_token(key, None, _claims(rng, lifetime=lifetime), NOW, rng=rng)
    issue_token(key, None, _claims(rng, lifetime=3600), NOW, rng=rng)
    with pytest.raises(InvalidLifetime):
        issue_token(key, None, _claims(rng), NOW + 900, rng=rng)


def test_unsupported_alg():
    with pytest.raises(UnsupportedAlg):
        generate_signing_key("k", "ML-DSA-44")


def _resign(nrf, claims):
    key, _, rng = nrf
    return issue_token(key, None, claims, claims.iat, rng=rng)


# each row fails the named check and every later one, so the earliest check must win
def test_checks_fire_in_order(nrf):
    key, keyset, rng = nrf
    stale_wrong = _claims(rng, aud="SMF", scope=["x"], sub="smf1")
    base = _resign(nrf, stale_wrong)
    h, p, s = base.split(".")
    later = NOW + 10_000
    rset = revoke(stale_wrong.jti, None, key, NOW, rng)
    other = generate_signing_key("nrf-key-2", "ML-DSA-65", rng)
    foreign = issue_token(other, None, stale_wrong, NOW, rng=rng)
    forged_sig = s[:-4] + ("AAAA" if s[-4:] != "AAAA" else "BBBB")

    cases = [
        ("x" + base[1:], MalformedToken),
        (foreign, UnknownKid),
        (f"{h}.{p}.{forged_sig}", BadSignature),
        (base, Expired),
    ]
    for token, expected in cases:
        with pytest.raises(expected):
            validate_token(token, keyset, "UDM", later, rset, required_scope="nudm-sdm", expected_sub="amf1")

    with pytest.raises(Revoked):
        validate_token(base, keyset, "UDM", NOW, rset, required_scope="nudm-sdm", expected_sub="amf1")
    with pytest.raises(AudienceMismatch):
        validate_token(base, keyset, "UDM", NOW, None, required_scope="nudm-sdm", expected_sub="amf1")
    with pytest.raises(ScopeMismatch):
        validate_token(base, keyset, "SMF", NOW, None, required_scope="nudm-sdm", expected_sub="amf1")
    with pytest.raises(SubjectMismatch):
        validate_token(base, keyset, "SMF", NOW, None, required_scope="x", expected_sub="amf1")
    validate_token(base, keyset, "SMF", NOW, None, required_scope="x", expected_sub="smf1")


def test_alg_header_must_match_key(nrf):
    _, keyset, _ = nrf
    h, p, s = _token(nrf).split(".")
    h87 = b64url_encode(b'{"alg":"ML-DSA-87","kid":"nrf-key-1","typ":"JWT"}')
    with pytest.raises(BadSignature):
        validate_token(f"{h87}.{p}.{s}", keyset, "UDM", NOW)


def test_error_codes_are_distinct():
    classes = [MalformedToken, UnknownKid, BadSignature, Expired, Revoked, RevocationSetInvalid,
               AudienceMismatch, ScopeMismatch, SubjectMismatch]
    codes = [c.code for c in classes]
    assert len(set(codes)) == len(codes)
    assert all(issubclass(c, TokenError) for c in classes)


def test_multiple_audiences(nrf):
    _, keyset, _ = nrf
    token = _token(nrf, aud=["UDM", "PCF"])
    validate_token(token, keyset, "PCF", NOW)
    with pytest.raises(AudienceMismatch):
        validate_token(token, keyset, "SMF", NOW)


def test_expiry_boundary(nrf):
    _, keyset, _ = nrf
    token = _token(nrf)
    validate_token(token, keyset, "UDM", NOW + 899)
    with pytest.raises(Expired):
        validate_token(token, keyset, "UDM", NOW + 900)


def test_revocation_set_signed_and_verified(nrf):
    key, keyset, rng = nrf
    token = _token(nrf)
    jti = parse_token(token).claims.jti
    rset = sign_revocation_set({jti}, key, NOW, rng)
    with pytest.raises(Revoked):
        validate_token(token, keyset, "UDM", NOW, rset)
    other_jti = sign_revocation_set({"other"}, key, NOW, rng)
    validate_token(token, keyset, "UDM", NOW, other_jti)
    unsigned = replace(rset, signature=b"")
    with pytest.raises(RevocationSetInvalid):
        validate_token(token, keyset, "UDM", NOW, unsigned)
    tampered = replace(rset, revoked_token_ids=frozenset({"other"}))
    with pytest.raises(RevocationSetInvalid):
        validate_token(token, keyset, "UDM", NOW, tampered)
    assert type(rset).from_json(rset.to_json()) == rset


def test_key_rotation(nrf):
    key, keyset, rng = nrf
    new = generate_signing_key("nrf-key-2", "ML-DSA-87", rng)
    rotated = keyset.with_key(new.entry())
    old_token = _token(nrf)
    new_token = issue_token(new, None, _claims(rng), NOW, rng=rng)
    validate_token(old_token, rotated, "UDM", NOW)
    validate_token(new_token, rotated, "UDM", NOW)
    with pytest.raises(UnknownKid):
        validate_token(new_token, keyset, "UDM", NOW)
    with pytest.raises(UnknownKid):
        validate_token(old_token, rotated.without_key("nrf-key-1"), "UDM", NOW)
    assert KeySetDocument.from_json(rotated.to_json()) == rotated
    with pytest.raises(ValueError):
        rotated.with_key(new.entry())


def _mutate(token, rnd):
    pos = rnd.randrange(len(token) + 1)
    op = rnd.choice("sid") if pos < len(token) else "i"
    c = rnd.choice(ALPHABET)
    if op == "s":
        while c == token[pos]:
            c = rnd.choice(ALPHABET)
        return token[:pos] + c + token[pos + 1:]
    if op == "i":
        return token[:pos] + c + token[pos:]
    return token[:pos] + token[pos + 1:]


def test_mutation_sweep(nrf):
    _, keyset, _ = nrf
    tokens = [_token(nrf) for _ in range(4)]
    rnd = random.Random(7)
    accepted = 0
    for i in range(1000):
        original = tokens[i % len(tokens)]
        mutated = _mutate(original, rnd)
        if mutated == original:
            continue
        try:
            validate_token(mutated, keyset, "UDM", NOW)
            accepted += 1
        except TokenError:
            pass
    assert accepted == 0


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=300))
def test_validate_never_crashes_on_garbage(text):
    keyset = KeySetDocument()
    with pytest.raises(TokenError):
        validate_token(text, keyset, "UDM", NOW)
