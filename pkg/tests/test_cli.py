import json
import os
import stat

import pytest

from qore.cli import cli_reference, main

SEED = "5e" * 32


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_seeded_keygen_is_byte_identical(tmp_path, capsys):
    outputs = []
    for i in range(2):
        prefix = tmp_path / f"k{i}"
        code, out, _ = run(capsys, "--seed", SEED, "--format", "json", "keygen", "--alg", "ML-KEM-768",
                           "--out", prefix)
        assert code == 0
        report = json.loads(out)
        outputs.append((report["public_key_fingerprint"], (tmp_path / f"k{i}.key.bin").read_bytes()))
    assert outputs[0] == outputs[1]


def test_secret_files_are_private_and_hidden_by_default(tmp_path, capsys):
    prefix = tmp_path / "x"
    code, out, _ = run(capsys, "--seed", SEED, "keygen", "--alg", "X25519", "--out", prefix)
    assert code == 0
    secret = (tmp_path / "x.key.bin").read_bytes()
    assert secret.hex() not in out
    assert stat.S_IMODE(os.stat(tmp_path / "x.key.bin").st_mode) == 0o600
    _, shown, _ = run(capsys, "--seed", SEED, "keygen", "--alg", "X25519", "--out", prefix, "--insecure-show")
    assert secret.hex() in shown


def test_suci_roundtrip_and_tamper(tmp_path, capsys):
    hn = tmp_path / "hn"
    assert run(capsys, "--seed", SEED, "suci", "keygen", "--out", hn)[0] == 0
    code, out, _ = run(capsys, "--seed", SEED, "--format", "json", "suci", "conceal",
                       "--supi", "imsi-001010123456789", "--hn-pub", f"{hn}.pub.bin")
    assert code == 0
    suci = json.loads(out)["suci"]
    code, out, _ = run(capsys, "suci", "deconceal", "--suci", suci, "--hn-priv", f"{hn}.key.bin")
    assert (code, out.strip()) == (0, "imsi-001010123456789")
    bad = suci[:-2] + ("00" if suci[-2:] != "00" else "01")
    code, out, err = run(capsys, "--format", "json", "suci", "deconceal", "--suci", bad,
                         "--hn-priv", f"{hn}.key.bin")
    assert code == 1 and json.loads(out)["error"] == "mac-mismatch"
    assert "mac-mismatch" in err


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run(capsys, "--seed", "zz", "keygen", "--out", tmp_path / "k")[0] == 2
    assert run(capsys, "--seed", "00", "keygen", "--out", tmp_path / "k")[0] == 2
    assert run(capsys, "suci", "deconceal", "--hn-priv", "x")[0] == 2
    assert run(capsys)[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["keygen", "--alg", "RSA-2048", "--out", "k"])
    assert exc.value.code == 2


def test_missing_file_is_a_domain_error(tmp_path, capsys):
    code, _, err = run(capsys, "suci", "conceal", "--supi", "imsi-001010123456789",
                       "--hn-pub", tmp_path / "missing.bin")
    assert code == 1 and "io-error" in err


def test_token_lifecycle(tmp_path, capsys):
    jwks, key = tmp_path / "jwks.json", tmp_path / "nrf"
    common = ["--seed", SEED]
    assert run(capsys, *common, "token", "keygen", "--kid", "k1", "--out", key, "--jwks", jwks)[0] == 0
    code, token, _ = run(capsys, *common, "token", "issue", "--key", f"{key}.key.bin", "--kid", "k1",
                         "--iss", "nrf", "--sub", "amf1", "--aud", "UDM", "--scope", "nudm-sdm",
                         "--nf-type", "AMF")
    token = token.strip()
    assert code == 0
    verify = [*common, "--format", "json", "token", "verify", "--token", token, "--jwks", jwks, "--aud", "UDM"]
    code, out, _ = run(capsys, *verify)
    assert code == 0 and json.loads(out)["claims"]["sub"] == "amf1"
    code, out, _ = run(capsys, *verify[:-1], "SMF")
    assert code == 1 and json.loads(out)["error"] == "audience-mismatch"
    code, out, _ = run(capsys, "--now", "1767230000", "--format", "json", *verify[2:])
    assert code == 1 and json.loads(out)["error"] == "expired"
    revs = tmp_path / "revoked.json"
    assert run(capsys, *common, "token", "revoke", "--token", token, "--jwks", jwks, "--revocations", revs,
               "--key", f"{key}.key.bin", "--kid", "k1")[0] == 0
    code, out, _ = run(capsys, *verify, "--revocations", revs)
    assert code == 1 and json.loads(out)["error"] == "revoked"


def test_pki_issue_and_verify(tmp_path, capsys):
    common = ["--seed", SEED]
    root, inter, leaf = tmp_path / "root", tmp_path / "inter", tmp_path / "leaf"
    assert run(capsys, *common, "pki", "init-ca", "--subject", "CN=Root", "--out", root, "--path-len", 1)[0] == 0
    assert run(capsys, *common, "pki", "issue", "--ca-cert", f"{root}.qcrt", "--ca-key", f"{root}.key.bin",
               "--subject", "CN=CA", "--profile", "intermediate", "--path-len", 0,
               "--validity-days", 365, "--out", inter)[0] == 0
    assert run(capsys, *common, "pki", "issue", "--ca-cert", f"{inter}.qcrt", "--ca-key", f"{inter}.key.bin",
               "--subject", "CN=udm1", "--san", "udm1", "--eku", "server_auth", "--out", leaf)[0] == 0
    verify = [*common, "--format", "json", "pki", "verify", "--chain", f"{leaf}.qcrt", "--trust", f"{root}.qcrt"]
    code, out, _ = run(capsys, *verify)
    report = json.loads(out)
    assert code == 0 and report["subject"] == "CN=udm1" and report["chain_length"] == 2
    assert "QORE CERTIFICATE" in (tmp_path / "leaf.qcrt").read_text()
    smf_serial = json.loads(run(capsys, *common, "--format", "json", "pki", "issue", "--ca-cert",
                                 f"{inter}.qcrt", "--ca-key", f"{inter}.key.bin", "--subject", "CN=smf1",
                                 "--out", tmp_path / "smf")[1])["serial"]
    crl = tmp_path / "ca.qcrl"
    assert run(capsys, *common, "pki", "revoke", "--ca-cert", f"{inter}.qcrt", "--ca-key", f"{inter}.key.bin",
               "--serial", smf_serial, "--out", crl)[0] == 0
    code, out, _ = run(capsys, *common, "--format", "json", "pki", "verify", "--chain", tmp_path / "smf.qcrt",
                       "--trust", f"{root}.qcrt", "--crl", crl)
    assert code == 1 and json.loads(out)["error"] == "revoked-cert"
    assert run(capsys, *common, "pki", "issue", "--ca-cert", f"{inter}.qcrt", "--ca-key", f"{inter}.key.bin",
               "--subject", "CN=x", "--eku", "serverAuth", "--out", tmp_path / "x")[0] == 2


def test_ike_negotiate(tmp_path, capsys):
    store = tmp_path / "ppk.txt"
    store.write_text("a: " + "11" * 32 + "\nb: " + "22" * 32 + "\n")
    os.chmod(store, 0o600)
    code, out, _ = run(capsys, "--seed", SEED, "--format", "json", "ike", "negotiate", "--ppk-store", store,
                       "--initiator-ppk", "a", "--responder-ppk", "a")
    assert code == 0 and json.loads(out)["ppk_mixed"] is True
    code, out, _ = run(capsys, "--seed", SEED, "--format", "json", "ike", "negotiate", "--ppk-store", store,
                       "--initiator-ppk", "a", "--responder-ppk", "b")
    assert code == 1 and json.loads(out)["error"] == "ike-auth-failed"


def test_handshake_demo(capsys):
    code, out, _ = run(capsys, "--seed", SEED, "--format", "json", "handshake", "demo")
    report = json.loads(out)
    assert code == 0 and report["record_roundtrip"] is True
    assert report["client_identity"].startswith("CN=amf-demo")
    code, out, _ = run(capsys, "--seed", SEED, "--format", "json", "handshake", "demo", "--no-client-cert")
    assert code == 1 and json.loads(out)["error"] == "mtls-client-cert-missing"


def test_fixtures_verify(capsys):
    assert run(capsys, "fixtures", "verify")[0] == 0


def test_cli_reference_covers_every_command():
    ref = cli_reference()
    for path in ("qore keygen", "qore suci conceal", "qore token verify", "qore pki issue", "qore ike derive",
                 "qore handshake serve", "qore sba run", "qore bench", "qore fixtures verify"):
        assert f"## `{path}`" in ref


def test_committed_cli_reference_is_current():
    from pathlib import Path

    committed = Path(__file__).resolve().parents[1] / "docs" / "cli-reference.md"
    assert committed.read_text() == cli_reference() + "\n", "run python tools/gen_cli_reference.py"
