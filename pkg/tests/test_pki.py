from dataclasses import replace

import pytest

from qore.crypto.entropy import SeededDrbg
from qore.pki import (
    CERT_CONTEXT, DAY, EKU_CLIENT, HYBRID, AlgorithmNotInProfile, BrokenChain, Certificate, CertRequest, Crl,
    ExpiredCert, Extensions, MalformedCertificate, NotACa, PathLengthExceeded, RevokedCert, RevokedEntry,
    SignatureEntry, SignatureInvalid, StaleCrl, TrustStore, TrustStoreHolder, UntrustedRoot,
    ValidityExceedsProfile,
    certificates_from_pem, chain_to_pem, create_root, generate_keypair, issue_certificate, ocsp_response,
    renew_certificate, sign_bytes, sign_crl, validate_chain, verify_signatures,
)

NOW = 1767225600


def _issue(ca, ca_keys, subject, alg="ML-DSA-65", profile="end-entity", ext=None, validity=90 * DAY,
           not_before=None):
    keys = generate_keypair(alg)
    ext = ext or (Extensions.ca(0) if profile == "intermediate" else Extensions.end_entity(san=[subject]))
    cert = issue_certificate(ca, ca_keys, CertRequest(f"CN={subject}", keys.spki, ext, validity, not_before),
                             profile, NOW)
    return cert, keys


@pytest.fixture(scope="module")
def pki():
    root, root_keys = create_root("CN=Root", now=NOW, path_len=1)
    inter, inter_keys = _issue(root, root_keys, "Issuing", profile="intermediate", validity=365 * DAY)
    leaf, leaf_keys = _issue(inter, inter_keys, "amf1")
    return dict(root=root, root_keys=root_keys, inter=inter, inter_keys=inter_keys, leaf=leaf,
                leaf_keys=leaf_keys, trust=TrustStore([root]))


@pytest.fixture(scope="module")
def hybrid_pki(pki):
    inter, inter_keys = _issue(pki["root"], pki["root_keys"], "Hybrid", alg=HYBRID, profile="intermediate",
                               validity=365 * DAY)
    leaf, _ = _issue(inter, inter_keys, "smf1")
    return inter, leaf


def test_three_level_chain_validates(pki):
    assert pki["root"].spki.alg == "ML-DSA-87"
    assert pki["inter"].spki.alg == "ML-DSA-65" and pki["leaf"].spki.alg == "ML-DSA-65"
    ident = validate_chain([pki["leaf"], pki["inter"]], pki["trust"], NOW + 1)
    assert ident.subject == "CN=amf1" and ident.san == ("amf1",)
    validate_chain([pki["leaf"], pki["inter"], pki["root"]], pki["trust"], NOW + 1)


def _corrupt(sig: SignatureEntry) -> SignatureEntry:
    return replace(sig, value=bytes([sig.value[0] ^ 1]) + sig.value[1:])


@pytest.mark.parametrize("ed_ok,ml_ok", [(True, True), (True, False), (False, True), (False, False)])
def test_hybrid_and_truth_table(pki, hybrid_pki, ed_ok, ml_ok):
    inter, leaf = hybrid_pki
    ed, ml = leaf.signatures
    assert (ed.alg, ml.alg) == ("Ed25519", "ML-DSA-65")
    forged = replace(leaf, signatures=(ed if ed_ok else _corrupt(ed), ml if ml_ok else _corrupt(ml)))
    chain = [forged, inter]
    if ed_ok and ml_ok:
        validate_chain(chain, pki["trust"], NOW + 1)
    else:
        with pytest.raises(SignatureInvalid):
            validate_chain(chain, pki["trust"], NOW + 1)
    assert verify_signatures(inter.spki, forged.tbs_bytes(), forged.signatures, CERT_CONTEXT, "or") == \
        (ed_ok or ml_ok)


def test_hybrid_signature_list_must_match_key(pki, hybrid_pki):
    inter, leaf = hybrid_pki
    for sigs in (leaf.signatures[:1], leaf.signatures[::-1], leaf.signatures + leaf.signatures[:1]):
        with pytest.raises(SignatureInvalid):
            validate_chain([replace(leaf, signatures=sigs), inter], pki["trust"], NOW + 1)


def test_revoked_leaf_rejected(pki):
    crl = sign_crl(pki["inter"], pki["inter_keys"], [(pki["leaf"].serial, NOW)], NOW)
    with pytest.raises(RevokedCert):
        validate_chain([pki["leaf"], pki["inter"]], pki["trust"], NOW + 1, [crl])
    clean = sign_crl(pki["inter"], pki["inter_keys"], [], NOW)
    validate_chain([pki["leaf"], pki["inter"]], pki["trust"], NOW + 1, [clean])


def test_crl_must_be_signed_and_fresh(pki):
    crl = sign_crl(pki["inter"], pki["inter_keys"], [], NOW, validity=DAY)
    with pytest.raises(StaleCrl):
        validate_chain([pki["leaf"], pki["inter"]], pki["trust"], NOW + DAY, [crl])
    forged = replace(crl, revoked=(RevokedEntry(b"\x01", NOW),))
    with pytest.raises(SignatureInvalid):
        validate_chain([pki["leaf"], pki["inter"]], pki["trust"], NOW + 1, [forged])
    assert Crl.from_pem(crl.to_pem()) == crl


def test_ocsp_style_status(pki):
    good = ocsp_response(pki["inter"], pki["inter_keys"], pki["leaf"].serial, None, NOW)
    bad = ocsp_response(pki["inter"], pki["inter_keys"], pki["leaf"].serial, NOW, NOW)
    validate_chain([pki["leaf"], pki["inter"]], pki["trust"], NOW + 1, [good])
    with pytest.raises(RevokedCert):
        validate_chain([pki["leaf"], pki["inter"]], pki["trust"], NOW + 1, [bad])


def test_validity_window(pki):
    chain = [pki["leaf"], pki["inter"]]
    with pytest.raises(ExpiredCert):
        validate_chain(chain, pki["trust"], NOW - 1)
    with pytest.raises(ExpiredCert):
        validate_chain(chain, pki["trust"], pki["leaf"].not_after)


def test_untrusted_and_broken_chains(pki):
    other_root, other_keys = create_root("CN=Root", now=NOW)
    other_inter, other_inter_keys = _issue(other_root, other_keys, "Issuing", profile="intermediate",
                                           validity=365 * DAY)
    rogue_leaf, _ = _issue(other_inter, other_inter_keys, "amf1")
    with pytest.raises(SignatureInvalid):
        validate_chain([rogue_leaf, other_inter], pki["trust"], NOW + 1)
    with pytest.raises(UntrustedRoot):
        validate_chain([pki["leaf"], pki["inter"]], TrustStore(), NOW + 1)
    with pytest.raises(BrokenChain):
        validate_chain([pki["leaf"], pki["root"]], pki["trust"], NOW + 1)
    with pytest.raises(BrokenChain):
        validate_chain([], pki["trust"], NOW)
    with pytest.raises(BrokenChain):
        validate_chain([pki["leaf"], pki["leaf"]], pki["trust"], NOW + 1)


def test_tampered_tbs_rejected(pki):
    for change in ({"subject": "CN=udm1"}, {"not_after": pki["leaf"].not_after + DAY},
                   {"extensions": Extensions.end_entity(eku=[EKU_CLIENT])}):
        with pytest.raises(SignatureInvalid):
            validate_chain([replace(pki["leaf"], **change), pki["inter"]], pki["trust"], NOW + 1)


def _hand_signed(issuer, issuer_keys, subject, keys, ext):
    """Sign outside issue_certificate, as a CA key holder ignoring its constraints could."""
    cert = Certificate(bytes([1]) * 16, issuer.subject, subject, NOW, NOW + 30 * DAY, keys.spki, ext,
                       (SignatureEntry(issuer_keys.alg, b""),))
    return replace(cert, signatures=sign_bytes(issuer_keys, cert.tbs_bytes(), CERT_CONTEXT))


def test_path_length_enforced(pki):
    with pytest.raises(PathLengthExceeded):
        _issue(pki["inter"], pki["inter_keys"], "Sub", profile="intermediate", ext=Extensions.ca(None))
    sub_keys = generate_keypair("ML-DSA-65")
    sub = _hand_signed(pki["inter"], pki["inter_keys"], "CN=Sub", sub_keys, Extensions.ca(None))
    leaf, _ = _issue(sub, sub_keys, "deep")
    with pytest.raises(BrokenChain):
        validate_chain([leaf, sub, pki["inter"]], pki["trust"], NOW + 1)


def test_profile_limits(pki):
    with pytest.raises(ValidityExceedsProfile):
        _issue(pki["inter"], pki["inter_keys"], "long", validity=187 * DAY)
    with pytest.raises(AlgorithmNotInProfile):
        _issue(pki["inter"], pki["inter_keys"], "ed", alg="Ed25519")
    with pytest.raises(NotACa):
        _issue(pki["leaf"], pki["leaf_keys"], "child")
    with pytest.raises(ValidityExceedsProfile):
        _issue(pki["inter"], pki["inter_keys"], "ca-as-leaf", ext=Extensions.ca(0))


def test_renewal_keeps_key_and_subject(pki):
    renewed = renew_certificate(pki["leaf"], pki["inter"], pki["inter_keys"], "end-entity", NOW + 10 * DAY)
    assert renewed.spki == pki["leaf"].spki and renewed.subject == pki["leaf"].subject
    assert renewed.serial != pki["leaf"].serial
    validate_chain([renewed, pki["inter"]], pki["trust"], NOW + 95 * DAY)


def test_encoding_roundtrip_and_canonical_form(pki):
    leaf = pki["leaf"]
    assert Certificate.decode(leaf.encode()) == leaf
    assert certificates_from_pem(chain_to_pem([leaf, pki["inter"]])) == [leaf, pki["inter"]]
    with pytest.raises(MalformedCertificate):
        Certificate.decode(leaf.encode().replace(b'{"extensions"', b'{ "extensions"'))
    with pytest.raises(MalformedCertificate):
        Certificate.decode(b"not json")
    with pytest.raises(MalformedCertificate):
        Certificate.from_pem("-----BEGIN QORE CERTIFICATE-----\n!!!\n-----END QORE CERTIFICATE-----\n")


def test_trust_store_rejects_non_roots(pki):
    with pytest.raises(UntrustedRoot):
        TrustStore([pki["inter"]])
    holder = TrustStoreHolder(pki["trust"])
    old = holder.get()
    holder.swap(old.without_anchor("CN=Root"))
    assert len(old) == 1 and len(holder.get()) == 0
    with pytest.raises(UntrustedRoot):
        validate_chain([pki["leaf"], pki["inter"]], holder.get(), NOW + 1)


def test_seeded_issuance_is_reproducible():
    def make():
        rng = SeededDrbg(b"\x77" * 32)
        root, _ = create_root("CN=R", now=NOW, rng=rng)
        return root.encode()

    assert make() == make()
