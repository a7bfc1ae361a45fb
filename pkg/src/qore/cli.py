"""``qore`` command-line entry point.

Exit status is 0 on success, 1 when the operation itself fails (a bad MAC,
an expired token, an invalid chain) and 2 on usage errors. ``--seed`` (or
``QORE_SEED``) swaps every random source for a seeded DRBG and pins the clock,
so repeated runs print identical bytes. Key material never reaches stdout
unless ``--insecure-show`` is given.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .crypto.entropy import EntropySource, SeededDrbg, SystemEntropy
from .crypto.kem import encapsulation_key_from_dk
from .crypto.params import KEM_PARAMS, SIG_PARAMS
from .errors import MalformedKey, QoreError

log = logging.getLogger("qore")

SEED_ENV = "QORE_SEED"
SEED_LEN = 32
# clock used when --seed is given without --now
SEEDED_EPOCH = 1767225600

KEYGEN_ALGS = (*KEM_PARAMS, *SIG_PARAMS, "X25519", "Ed25519", "X25519MLKEM768")


class UsageError(Exception):
    """Bad arguments discovered after parsing (missing files are domain errors, not this)."""


@dataclass
class Context:
    rng: EntropySource
    now: int
    fmt: str
    insecure_show: bool
    seeded: bool
    out: object = None

    def emit(self, data: dict, text: str | None = None) -> None:
        if self.fmt == "json":
            print(json.dumps(data, indent=2, sort_keys=True), file=self.out or sys.stdout)
        else:
            print(text if text is not None else _as_text(data), file=self.out or sys.stdout)

    def line(self, text: str) -> None:
        print(text, file=self.out or sys.stdout, flush=True)


def _as_text(data: dict, indent: str = "") -> str:
    lines = []
    for k, v in data.items():
        if isinstance(v, dict):
            lines.append(f"{indent}{k}:")
            lines.append(_as_text(v, indent + "  "))
        elif isinstance(v, (list, tuple)):
            lines.append(f"{indent}{k}: {', '.join(str(x) for x in v)}")
        else:
            lines.append(f"{indent}{k}: {v}")
    return "\n".join(lines)


def _fingerprint(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


def _write(path: str | Path, data: bytes | str, secret: bool = False) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    if isinstance(data, str):
        data = data.encode()
    if secret:
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
    else:
        path.write_bytes(data)
    return path


def _read_bytes(path: str | Path) -> bytes:
    return Path(path).read_bytes()


def _read_text(path: str | Path) -> str:
    return Path(path).read_text()


def _key_report(ctx: Context, alg: str, pub: bytes, sec: bytes, pub_path: Path, sec_path: Path) -> dict:
    report = {"alg": alg, "public_key_file": str(pub_path), "secret_key_file": str(sec_path),
              "public_key_len": len(pub), "secret_key_len": len(sec),
              "public_key_fingerprint": _fingerprint(pub)}
    if ctx.insecure_show:
        report["public_key_hex"] = pub.hex()
        report["secret_key_hex"] = sec.hex()
    return report


# keygen

def cmd_keygen(ctx: Context, args) -> int:
    from .crypto.ecdh import dh_keygen
    from .crypto.kem import kem_keygen
    from .crypto.sig import ed25519_keygen, sig_keygen
    from .hybrid import hybrid_keygen

    alg = args.alg
    if alg in KEM_PARAMS:
        pub, sec = kem_keygen(alg, ctx.rng)
    elif alg in SIG_PARAMS:
        pub, sec = sig_keygen(alg, ctx.rng)
    elif alg == "X25519":
        sec, pub = dh_keygen(ctx.rng)
    elif alg == "Ed25519":
        pub, sec = ed25519_keygen(ctx.rng)
    else:
        hpub, hpriv = hybrid_keygen(ctx.rng)
        pub, sec = hpub.encode(), hpriv.encode()
    pub_path = _write(f"{args.out}.pub.bin", pub)
    sec_path = _write(f"{args.out}.key.bin", sec, secret=True)
    ctx.emit(_key_report(ctx, alg, pub, sec, pub_path, sec_path))
    return 0


# suci

SUCI_SCHEMES = ("ML-KEM-768", "ML-KEM-512", "hybrid")


def _suci_record(key_id: int, key: bytes, private: bool):
    from .hybrid import PRIVATE_KEY_LEN, PUBLIC_KEY_LEN, HybridPrivateKey
    from .suci import SCHEME_HYBRID, HomeNetworkKeyRecord, scheme_for

    if private:
        if len(key) == PRIVATE_KEY_LEN:
            ek = HybridPrivateKey.decode(key).public_key().encode()
            return HomeNetworkKeyRecord(key_id, SCHEME_HYBRID, ek, key)
        for params in KEM_PARAMS.values():
            if len(key) == params.dk_len and params.name in SUCI_SCHEMES:
                ek = encapsulation_key_from_dk(params, key)
                return HomeNetworkKeyRecord(key_id, scheme_for(params), ek, key)
    else:
        if len(key) == PUBLIC_KEY_LEN:
            return HomeNetworkKeyRecord(key_id, SCHEME_HYBRID, key)
        for params in KEM_PARAMS.values():
            if len(key) == params.ek_len and params.name in SUCI_SCHEMES:
                return HomeNetworkKeyRecord(key_id, scheme_for(params), key)
    raise MalformedKey(f"{len(key)}-byte key matches no SUCI scheme")


def cmd_suci_keygen(ctx: Context, args) -> int:
    from .suci import SCHEME_NAMES, provision_home_network

    if args.scheme == "hybrid":
        record = provision_home_network(rng=ctx.rng, key_id=args.key_id, hybrid=True)
    else:
        record = provision_home_network(args.scheme, ctx.rng, args.key_id)
    pub_path = _write(f"{args.out}.pub.bin", record.ek)
    sec_path = _write(f"{args.out}.key.bin", record.dk, secret=True)
    report = _key_report(ctx, SCHEME_NAMES[record.scheme_id], record.ek, record.dk, pub_path, sec_path)
    report["key_id"] = record.key_id
    report["scheme_id"] = record.scheme_id
    ctx.emit(report)
    return 0


def cmd_suci_conceal(ctx: Context, args) -> int:
    from .suci import SupiIdentifier, conceal_supi, encode_suci

    record = _suci_record(args.key_id, _read_bytes(args.hn_pub), private=False)
    supi = SupiIdentifier.parse(args.supi, args.mnc_len)
    wire = encode_suci(conceal_supi(supi, record, args.routing_indicator, ctx.rng))
    if args.out:
        _write(args.out, wire)
    ctx.emit({"suci": wire.hex(), "scheme_id": record.scheme_id, "key_id": record.key_id,
              "length": len(wire)}, wire.hex())
    return 0


def cmd_suci_deconceal(ctx: Context, args) -> int:
    from .suci import HomeNetworkKeyStore, deconceal_suci, decode_suci

    if (args.suci is None) == (args.input is None):
        raise UsageError("give exactly one of --suci or --in")
    wire = bytes.fromhex(args.suci) if args.suci is not None else _read_bytes(args.input)
    record = _suci_record(args.key_id, _read_bytes(args.hn_priv), private=True)
    supi = deconceal_suci(decode_suci(wire), HomeNetworkKeyStore({record.key_id: record}))
    ctx.emit({"supi": str(supi)}, str(supi))
    return 0


# tokens

def _token_arg(args) -> str:
    if (args.token is None) == (args.input is None):
        raise UsageError("give exactly one of --token or --in")
    return args.token if args.token is not None else _read_text(args.input).strip()


def _load_keyset(path: str):
    from .tokens import KeySetDocument

    p = Path(path)
    return KeySetDocument.from_json(p.read_text()) if p.exists() else KeySetDocument()


def _load_signing_key(key_path: str, kid: str, jwks_path: str):
    from .tokens import SigningKey, alg_for_signing_key

    sk = _read_bytes(key_path)
    entry = _load_keyset(jwks_path).get(kid)
    if entry is None:
        from .tokens import UnknownKid

        raise UnknownKid(f"kid {kid!r} not in {jwks_path}")
    alg = alg_for_signing_key(sk)
    return SigningKey(kid, alg, sk, entry.vk)


def cmd_token_keygen(ctx: Context, args) -> int:
    from .tokens import generate_signing_key

    key = generate_signing_key(args.kid, args.alg, ctx.rng)
    sec_path = _write(f"{args.out}.key.bin", key.sk, secret=True)
    pub_path = _write(f"{args.out}.pub.bin", key.vk)
    keyset = _load_keyset(args.jwks).without_key(args.kid).with_key(key.entry())
    _write(args.jwks, keyset.to_json())
    report = _key_report(ctx, key.alg, key.vk, key.sk, pub_path, sec_path)
    report.update(kid=key.kid, jwks=args.jwks)
    ctx.emit(report)
    return 0


def cmd_token_issue(ctx: Context, args) -> int:
    from .tokens import issue_token, make_claims

    claims = make_claims(iss=args.iss, sub=args.sub, aud=args.aud, scope=args.scope.split(","),
                         nf_type=args.nf_type, now=ctx.now, lifetime=args.lifetime, rng=ctx.rng)
    token = issue_token(_read_bytes(args.key), args.kid, claims, ctx.now, rng=ctx.rng)
    if args.out:
        _write(args.out, token + "\n")
    ctx.emit({"token": token, "jti": claims.jti, "exp": claims.exp}, token)
    return 0


def cmd_token_verify(ctx: Context, args) -> int:
    from .tokens import RevocationSet, validate_token

    revocations = None
    if args.revocations and Path(args.revocations).exists():
        revocations = RevocationSet.from_json(_read_text(args.revocations))
    claims = validate_token(_token_arg(args), _load_keyset(args.jwks), args.aud, ctx.now, revocations,
                            required_scope=args.scope, expected_sub=args.sub)
    ctx.emit({"valid": True, "claims": claims.to_dict()})
    return 0


def cmd_token_revoke(ctx: Context, args) -> int:
    from .tokens import RevocationSet, parse_token, revoke

    jti = parse_token(_token_arg(args)).claims.jti
    path = Path(args.revocations)
    current = RevocationSet.from_json(path.read_text()) if path.exists() else None
    key = _load_signing_key(args.key, args.kid, args.jwks)
    updated = revoke(jti, current, key, ctx.now, ctx.rng)
    _write(path, updated.to_json())
    ctx.emit({"revoked": jti, "revocation_set": str(path), "entries": len(updated.revoked_token_ids)})
    return 0


# pki

def _load_ca(cert_path: str, key_path: str):
    from .pki import KeyPair, certificates_from_pem

    certs = certificates_from_pem(_read_text(cert_path))
    if not certs:
        from .pki import MalformedCertificate

        raise MalformedCertificate(f"no certificate in {cert_path}")
    ca = certs[0]
    keys = KeyPair(ca.spki.alg, ca.spki.key, _read_bytes(key_path))
    return ca, keys, certs


def _cert_summary(cert) -> dict:
    return {"subject": cert.subject, "issuer": cert.issuer, "serial": cert.serial.hex(),
            "not_before": cert.not_before, "not_after": cert.not_after, "alg": cert.spki.alg,
            "fingerprint": cert.fingerprint()[:32]}


def cmd_pki_init_ca(ctx: Context, args) -> int:
    from .pki import DAY, create_root

    cert, keys = create_root(args.subject, now=ctx.now, validity=args.validity_days * DAY,
                             path_len=args.path_len, rng=ctx.rng)
    _write(f"{args.out}.qcrt", cert.to_pem())
    _write(f"{args.out}.key.bin", keys.secret, secret=True)
    ctx.emit({"certificate": f"{args.out}.qcrt", "key": f"{args.out}.key.bin", **_cert_summary(cert)})
    return 0


def cmd_pki_issue(ctx: Context, args) -> int:
    from .pki import (
        DAY, EKU_CLIENT, EKU_SERVER, PROFILES, CertRequest, Extensions, chain_to_pem, generate_keypair, issue_certificate,
    )

    ca, ca_keys, ca_chain = _load_ca(args.ca_cert, args.ca_key)
    keys = generate_keypair(args.alg, ctx.rng)
    if args.profile == "intermediate":
        ext = Extensions.ca(args.path_len)
    else:
        eku = tuple(e.strip() for e in args.eku.split(",") if e.strip()) if args.eku else ()
        unknown = sorted(set(eku) - {EKU_SERVER, EKU_CLIENT})
        if unknown:
            raise UsageError(f"unknown --eku value {', '.join(unknown)} (use {EKU_SERVER} or {EKU_CLIENT})")
        ext = Extensions.end_entity(san=args.san, eku=eku)
    request = CertRequest(args.subject, keys.spki, ext, args.validity_days * DAY, ctx.now)
    cert = issue_certificate(ca, ca_keys, request, PROFILES[args.profile], ctx.now, ctx.rng)
    # leaf first, then the issuer's chain without the self-signed root
    chain = [cert] + [c for c in ca_chain if c.subject != c.issuer]
    _write(f"{args.out}.qcrt", chain_to_pem(chain))
    _write(f"{args.out}.key.bin", keys.secret, secret=True)
    ctx.emit({"certificate": f"{args.out}.qcrt", "key": f"{args.out}.key.bin", "chain_length": len(chain),
              **_cert_summary(cert)})
    return 0


def cmd_pki_verify(ctx: Context, args) -> int:
    from .pki import Crl, TrustStore, certificates_from_pem, validate_chain

    chain = certificates_from_pem(_read_text(args.chain))
    trust = TrustStore(tuple(certificates_from_pem(_read_text(args.trust))))
    crls = [Crl.from_pem(_read_text(p)) for p in args.crl]
    ident = validate_chain(chain, trust, ctx.now, crls, args.policy)
    ctx.emit({"valid": True, "subject": ident.subject, "alg": ident.spki.alg, "eku": list(ident.eku),
              "san": list(ident.san), "chain_length": len(chain)})
    return 0


def cmd_pki_revoke(ctx: Context, args) -> int:
    from .pki import DAY, Crl, RevokedEntry, sign_crl

    ca, ca_keys, _ = _load_ca(args.ca_cert, args.ca_key)
    entries: list[RevokedEntry] = []
    if args.crl and Path(args.crl).exists():
        entries.extend(Crl.from_pem(_read_text(args.crl)).revoked)
    for serial in args.serial:
        raw = bytes.fromhex(serial)
        if not any(e.serial == raw for e in entries):
            entries.append(RevokedEntry(raw, ctx.now))
    crl = sign_crl(ca, ca_keys, entries, ctx.now, args.validity_days * DAY, ctx.rng)
    _write(args.out, crl.to_pem())
    ctx.emit({"crl": args.out, "issuer": crl.issuer, "revoked": [e.serial.hex() for e in crl.revoked],
              "this_update": crl.this_update, "next_update": crl.next_update})
    return 0


# ike

def cmd_ike_derive(ctx: Context, args) -> int:
    from .ike import load_ppk_store, load_transcript, state_from_transcript, state_to_json

    store = load_ppk_store(args.ppk_store) if args.ppk_store else {}
    state = state_from_transcript(load_transcript(args.transcript), store)
    ctx.emit(state_to_json(state, show_keys=ctx.insecure_show))
    return 0


def cmd_ike_negotiate(ctx: Context, args) -> int:
    from .ike import load_ppk_store, negotiate, resolve_ppk

    store = load_ppk_store(args.ppk_store) if args.ppk_store else {}
    ppk_i = resolve_ppk(store, args.initiator_ppk) if args.initiator_ppk else None
    ppk_r = resolve_ppk(store, args.responder_ppk) if args.responder_ppk else None
    result = negotiate(ppk_i, ppk_r, ctx.rng)
    out = {"authenticated": True, "ppk_mixed": result.initiator.ppk_mixed,
           "exchanges": result.initiator.exchanges,
           "child_keymat_fingerprint": _fingerprint(result.child_keymat)}
    if ctx.insecure_show:
        out["child_keymat"] = result.child_keymat.hex()
    ctx.emit(out)
    return 0


# handshake

def _demo_pki(ctx: Context):
    from .sba.harness import Pki

    pki = Pki.create("Demo", ctx.now, ctx.rng)
    server = pki.issue_nf("udm-demo", "UDM", "00000000-0000-4000-8000-0000000000a1", ctx.now, ctx.rng)
    client = pki.issue_nf("amf-demo", "AMF", "00000000-0000-4000-8000-0000000000a2", ctx.now, ctx.rng)
    return pki, server, client


def cmd_handshake_demo(ctx: Context, args) -> int:
    from .handshake import HandshakeConfig, LossyLink, dtls_handshake, handshake_in_memory, suite

    pki, server, client = _demo_pki(ctx)
    trust = pki.trust()
    suites = (suite(args.suite),) if args.suite else None
    extra = {"suites": suites} if suites else {}
    scfg = HandshakeConfig("server", trust, server.chain, server.keys, require_client_cert=True,
                           clock=lambda: ctx.now, rng=ctx.rng, **extra)
    if args.no_client_cert:
        ccfg = HandshakeConfig("client", trust, (), None, clock=lambda: ctx.now, rng=ctx.rng, **extra)
    else:
        ccfg = HandshakeConfig("client", trust, client.chain, client.keys, clock=lambda: ctx.now,
                               rng=ctx.rng, **extra)
    out: dict = {"transport": "dtls" if args.dtls else "stream"}
    if args.dtls:
        link = LossyLink(loss=args.loss, seed=int.from_bytes(ctx.rng.random_bytes(4), "big"), reorder=True)
        csession, ssession, stats = dtls_handshake(ccfg, scfg, link)
        out.update(datagrams=stats.datagrams, retransmissions=stats.retransmissions,
                   max_datagram=stats.max_datagram, dropped=link.dropped)
    else:
        csession, ssession = handshake_in_memory(ccfg, scfg)
    record = csession.send(b"ping")
    echoed = ssession.receive(record) == b"ping"
    out.update(suite=csession.suite.name, transcript_hash=csession.transcript_hash.hex(),
               server_identity=csession.peer.subject,
               client_identity=ssession.peer.subject if ssession.peer else None,
               record_roundtrip=echoed, record_len=len(record))
    ctx.emit(out)
    return 0


def _endpoint_config(ctx: Context, role: str, args, require_client_cert: bool = False):
    from .handshake import HandshakeConfig
    from .pki import KeyPair, TrustStore, certificates_from_pem

    trust = TrustStore(tuple(certificates_from_pem(_read_text(args.trust))))
    chain, keys = (), None
    if args.chain:
        chain = certificates_from_pem(_read_text(args.chain))
        keys = KeyPair(chain[0].spki.alg, chain[0].spki.key, _read_bytes(args.key))
    return HandshakeConfig(role, trust, chain, keys, require_client_cert=require_client_cert,
                           clock=lambda: ctx.now, rng=ctx.rng)


def cmd_handshake_serve(ctx: Context, args) -> int:
    import socket

    from .handshake import run_server
    from .sba.transport import SecureConnection, SocketPipe

    cfg = _endpoint_config(ctx, "server", args, args.require_client_cert)
    with socket.create_server((args.host, args.port)) as srv:
        host, port = srv.getsockname()[:2]
        ctx.line(f"listening on {host}:{port}")
        srv.settimeout(args.timeout)
        conn_sock, _ = srv.accept()
    pipe = SocketPipe(conn_sock)
    try:
        session = run_server(pipe, cfg, args.timeout)
        conn = SecureConnection(pipe, session)
        message = conn.recv(args.timeout)
        conn.send(message)
    finally:
        pipe.close()
    ctx.emit({"peer": session.peer.subject if session.peer else None, "suite": session.suite.name,
              "echoed_bytes": len(message)})
    return 0


def cmd_handshake_connect(ctx: Context, args) -> int:
    from .handshake import run_client
    from .sba.transport import SecureConnection, SocketPipe

    cfg = _endpoint_config(ctx, "client", args)
    pipe = SocketPipe.connect(args.host, args.port, args.timeout)
    try:
        session = run_client(pipe, cfg, args.timeout)
        conn = SecureConnection(pipe, session)
        conn.send(args.message.encode())
        reply = conn.recv(args.timeout)
    finally:
        pipe.close()
    ctx.emit({"peer": session.peer.subject, "suite": session.suite.name,
              "reply": reply.decode("utf-8", "replace")})
    return 0


# sba

def cmd_sba_run(ctx: Context, args) -> int:
    from .sba.scenario import iter_scenario, load_scenario

    if args.scenario:
        doc = load_scenario(args.scenario)
    else:
        with resources.as_file(resources.files("qore.data.flows").joinpath("basic.toml")) as p:
            doc = load_scenario(p)
    if ctx.seeded and "now" not in doc.get("deployment", {}):
        doc.setdefault("deployment", {})["now"] = ctx.now
    sink = open(args.out, "w") if args.out else None
    passed = True
    try:
        for event in iter_scenario(doc, ctx.rng, args.transport):
            passed &= event.get("ok", True)
            line = json.dumps(event, sort_keys=True, separators=(",", ":"))
            if sink:
                sink.write(line + "\n")
            if ctx.fmt == "json":
                ctx.line(line)
            else:
                mark = {True: "ok  ", False: "FAIL"}.get(event.get("ok"), "    ")
                ctx.line(f"{mark} {event['step']!s:>8} {event['action']:<13} {event['outcome']}")
    finally:
        if sink:
            sink.close()
    return 0 if passed else 1


# bench

def cmd_bench(ctx: Context, args) -> int:
    from .bench import compare_report, run_suite

    if args.seconds < 0 or args.warmup < 0 or args.threads < 1:
        raise UsageError("--seconds and --warmup must be >= 0 and --threads >= 1")
    def show(row):
        ctx.line(f"{row.algorithm:<28} {row.operation:<15} {row.median_ops_per_sec:>14,.1f} ops/s"
                 f"  ({row.iterations} iterations, {row.wall_seconds:.2f} s)")

    progress = show if args.json != "-" and ctx.fmt == "text" else None
    # benchmarks always time the OS entropy path; --seed only affects key material
    report = run_suite(args.suite, args.seconds, SystemEntropy(), warmup=args.warmup,
                       threads=args.threads, progress=progress)
    comparison = compare_report(report)
    doc = report.to_dict()
    doc["comparison"] = comparison.to_dict()
    if args.json == "-":
        print(json.dumps(doc, indent=2, sort_keys=True), file=ctx.out or sys.stdout)
    else:
        if args.json:
            _write(args.json, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        if ctx.fmt == "json":
            (ctx.out or sys.stdout).write(report.jsonl())
        for o in comparison.orderings:
            state = {True: "pass", False: "FAIL", None: "skip"}[o.passed]
            kind = "hard" if o.hard else "soft"
            print(f"[{state}] ({kind}) {o.name}: {o.detail}", file=sys.stderr)
    return 1 if comparison.hard_failures else 0


# fixtures

def cmd_fixtures_verify(ctx: Context, args) -> int:
    from .fixtures import verify_fixtures

    results = verify_fixtures()
    ctx.emit({"fixtures": [{"name": r.name, "ok": r.ok, "problems": list(r.problems)} for r in results]},
             "\n".join(f"{'ok  ' if r.ok else 'FAIL'} {r.name}" + "".join(f"\n     {p}" for p in r.problems)
                       for r in results))
    return 0 if all(r.ok for r in results) else 1


# parser

def _common(p: argparse.ArgumentParser, top: bool) -> None:
    d = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", default=d(None), metavar="HEX",
                   help=f"{SEED_LEN}-byte hex seed: deterministic entropy and a pinned clock (env {SEED_ENV})")
    p.add_argument("--format", choices=("text", "json"), default=d("text"), help="output format")
    p.add_argument("--verbose", "-v", action="store_true", default=d(False), help="debug logging to stderr")
    p.add_argument("--now", type=int, default=d(None), metavar="UNIX",
                   help=f"clock in unix seconds (default: wall clock, or {SEEDED_EPOCH} with --seed)")
    p.add_argument("--insecure-show", action="store_true", default=d(False),
                   help="also print secret key material")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qore", description="Quantum-safe 5G core security toolkit.")
    parser.add_argument("--version", action="version", version=f"qore {__version__}")
    _common(parser, top=True)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(subparsers, name: str, handler: Callable | None, help_text: str) -> argparse.ArgumentParser:
        p = subparsers.add_parser(name, help=help_text, description=help_text)
        _common(p, top=False)
        p.set_defaults(handler=handler, parser=p)
        return p

    def group(name: str, help_text: str):
        p = add(sub, name, None, help_text)
        return p, p.add_subparsers(dest=f"{name}_command", metavar="ACTION")

    p = add(sub, "keygen", cmd_keygen, "generate a key pair into PREFIX.pub.bin / PREFIX.key.bin")
    p.add_argument("--alg", choices=KEYGEN_ALGS, default="ML-KEM-768")
    p.add_argument("--out", required=True, metavar="PREFIX")

    _, suci = group("suci", "SUPI concealment with ML-KEM or the hybrid KEM")
    p = add(suci, "keygen", cmd_suci_keygen, "provision a home network key pair")
    p.add_argument("--scheme", choices=SUCI_SCHEMES, default="ML-KEM-768")
    p.add_argument("--key-id", type=int, default=1)
    p.add_argument("--out", required=True, metavar="PREFIX")
    p = add(suci, "conceal", cmd_suci_conceal, "conceal a SUPI under a home network public key")
    p.add_argument("--supi", required=True, help="imsi-<MCC><MNC><MSIN>")
    p.add_argument("--hn-pub", required=True, metavar="FILE")
    p.add_argument("--key-id", type=int, default=1)
    p.add_argument("--routing-indicator", default="0")
    p.add_argument("--mnc-len", type=int, choices=(2, 3), default=2)
    p.add_argument("--out", metavar="FILE", help="also write the binary SUCI here")
    p = add(suci, "deconceal", cmd_suci_deconceal, "recover the SUPI from a SUCI")
    p.add_argument("--suci", metavar="HEX")
    p.add_argument("--in", dest="input", metavar="FILE")
    p.add_argument("--hn-priv", required=True, metavar="FILE")
    p.add_argument("--key-id", type=int, default=1)

    _, tok = group("token", "ML-DSA signed access tokens")
    p = add(tok, "keygen", cmd_token_keygen, "create a signing key and add it to a key set")
    p.add_argument("--kid", required=True)
    p.add_argument("--alg", choices=("ML-DSA-65", "ML-DSA-87"), default="ML-DSA-65")
    p.add_argument("--out", required=True, metavar="PREFIX")
    p.add_argument("--jwks", required=True, metavar="FILE", help="key set JSON, created or updated")
    p = add(tok, "issue", cmd_token_issue, "issue a compact token")
    p.add_argument("--key", required=True, metavar="FILE")
    p.add_argument("--kid", required=True)
    p.add_argument("--iss", required=True)
    p.add_argument("--sub", required=True)
    p.add_argument("--aud", required=True)
    p.add_argument("--scope", required=True, help="comma-separated")
    p.add_argument("--nf-type", required=True)
    p.add_argument("--lifetime", type=int, default=900)
    p.add_argument("--out", metavar="FILE.jwt")
    for name, handler, text in (("verify", cmd_token_verify, "validate a token"),
                                ("revoke", cmd_token_revoke, "add a token to the signed revocation set")):
        p = add(tok, name, handler, text)
        p.add_argument("--token", metavar="JWT")
        p.add_argument("--in", dest="input", metavar="FILE.jwt")
        p.add_argument("--jwks", required=True, metavar="FILE")
        p.add_argument("--revocations", required=name == "revoke", metavar="FILE")
        if name == "verify":
            p.add_argument("--aud", required=True)
            p.add_argument("--scope")
            p.add_argument("--sub")
        else:
            p.add_argument("--key", required=True, metavar="FILE")
            p.add_argument("--kid", required=True)

    _, pki = group("pki", "certificates, chains and CRLs")
    p = add(pki, "init-ca", cmd_pki_init_ca, "create a self-signed ML-DSA-87 root")
    p.add_argument("--subject", required=True)
    p.add_argument("--out", required=True, metavar="PREFIX")
    p.add_argument("--validity-days", type=int, default=3650)
    p.add_argument("--path-len", type=int)
    p = add(pki, "issue", cmd_pki_issue, "issue an intermediate or end-entity certificate")
    p.add_argument("--ca-cert", required=True, metavar="FILE")
    p.add_argument("--ca-key", required=True, metavar="FILE")
    p.add_argument("--subject", required=True)
    p.add_argument("--profile", choices=("intermediate", "end-entity"), default="end-entity")
    p.add_argument("--alg", choices=("ML-DSA-65", "ML-DSA-65+Ed25519"), default="ML-DSA-65")
    p.add_argument("--san", action="append", default=[])
    p.add_argument("--eku", default="server_auth,client_auth", help="comma-separated: server_auth, client_auth")
    p.add_argument("--path-len", type=int)
    p.add_argument("--validity-days", type=int, default=90)
    p.add_argument("--out", required=True, metavar="PREFIX")
    p = add(pki, "verify", cmd_pki_verify, "validate a leaf-first chain against trust anchors")
    p.add_argument("--chain", required=True, metavar="FILE")
    p.add_argument("--trust", required=True, metavar="FILE")
    p.add_argument("--crl", action="append", default=[], metavar="FILE")
    p.add_argument("--policy", choices=("and", "or"), default="and")
    p = add(pki, "revoke", cmd_pki_revoke, "sign a CRL listing the given serials")
    p.add_argument("--ca-cert", required=True, metavar="FILE")
    p.add_argument("--ca-key", required=True, metavar="FILE")
    p.add_argument("--serial", action="append", default=[], metavar="HEX")
    p.add_argument("--crl", metavar="FILE", help="existing CRL whose entries are carried over")
    p.add_argument("--validity-days", type=int, default=7)
    p.add_argument("--out", required=True, metavar="FILE.qcrl")

    _, ike = group("ike", "IKEv2 key schedule")
    p = add(ike, "derive", cmd_ike_derive, "derive SKEYSEED and the SK_* keys from a JSON transcript")
    p.add_argument("--transcript", required=True, metavar="FILE")
    p.add_argument("--ppk-store", metavar="FILE")
    p = add(ike, "negotiate", cmd_ike_negotiate, "run an in-process initiator/responder exchange")
    p.add_argument("--ppk-store", metavar="FILE")
    p.add_argument("--initiator-ppk", metavar="ID")
    p.add_argument("--responder-ppk", metavar="ID")

    _, hs = group("handshake", "hybrid mutually authenticated handshake")
    p = add(hs, "demo", cmd_handshake_demo, "run both sides in-process with a throwaway PKI")
    p.add_argument("--dtls", action="store_true", help="fragment over a lossy datagram link")
    p.add_argument("--loss", type=float, default=0.0)
    p.add_argument("--suite")
    p.add_argument("--no-client-cert", action="store_true")
    for name, handler, text in (("serve", cmd_handshake_serve, "accept one TCP connection and echo one record"),
                                ("connect", cmd_handshake_connect, "connect, send one record, print the reply")):
        p = add(hs, name, handler, text)
        p.add_argument("--host", default="127.0.0.1")
        p.add_argument("--port", type=int, required=name == "connect", default=0)
        p.add_argument("--chain", metavar="FILE", required=name == "serve")
        p.add_argument("--key", metavar="FILE", required=name == "serve")
        p.add_argument("--trust", required=True, metavar="FILE")
        p.add_argument("--timeout", type=float, default=30.0)
        if name == "serve":
            p.add_argument("--require-client-cert", action="store_true")
        else:
            p.add_argument("--message", default="hello")

    _, sba = group("sba", "service-based architecture scenarios")
    p = add(sba, "run", cmd_sba_run, "run a TOML scenario and print JSON-lines events")
    p.add_argument("--scenario", metavar="FILE.toml", help="default: the bundled basic flow")
    p.add_argument("--transport", choices=("loopback", "socket"))
    p.add_argument("--out", metavar="FILE.jsonl")

    p = add(sub, "bench", cmd_bench, "throughput benchmarks")
    p.add_argument("--suite", default="kem,sig,protocol",
                   help="comma-separated suites (kem, sig, protocol), algorithms or ALG:OP")
    p.add_argument("--seconds", type=float, default=2.0, help="timed seconds per row, over five batches")
    p.add_argument("--warmup", type=float, default=0.5)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", metavar="FILE", help="write the full report; '-' for stdout")

    _, fx = group("fixtures", "golden fixtures")
    add(fx, "verify", cmd_fixtures_verify, "re-derive every committed fixture")
    return parser


def _make_context(args) -> Context:
    seed_hex = args.seed or os.environ.get(SEED_ENV)
    if seed_hex:
        try:
            seed = bytes.fromhex(seed_hex)
        except ValueError:
            raise UsageError("--seed must be hex") from None
        if len(seed) != SEED_LEN:
            raise UsageError(f"--seed must be {SEED_LEN} bytes ({2 * SEED_LEN} hex digits)")
        rng: EntropySource = SeededDrbg(seed)
        now = args.now if args.now is not None else SEEDED_EPOCH
    else:
        rng = SystemEntropy()
        now = args.now if args.now is not None else int(time.time())
    return Context(rng, now, args.format, args.insecure_show, bool(seed_hex))


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = getattr(args, "handler", None)
    if handler is None:
        (getattr(args, "parser", None) or parser).print_help(sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        ctx = _make_context(args)
        return handler(ctx, args)
    except UsageError as exc:
        args.parser.print_usage(sys.stderr)
        print(f"qore: error: {exc}", file=sys.stderr)
        return 2
    except QoreError as exc:
        _report_error(args, exc.code, str(exc))
        return 1
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 1
    except OSError as exc:
        _report_error(args, "io-error", str(exc))
        return 1
    except ValueError as exc:
        _report_error(args, "invalid-input", str(exc))
        return 1


def _report_error(args, code: str, message: str) -> None:
    if args.format == "json":
        print(json.dumps({"error": code, "message": message}, sort_keys=True))
    print(f"error: {code}: {message}", file=sys.stderr)


def cli_reference() -> str:
    """Markdown flag reference for every subcommand."""
    parser = build_parser()
    sections = ["# qore command reference", "",
                "Generated from the argument parser by `python tools/gen_cli_reference.py`.", ""]

    def walk(p: argparse.ArgumentParser, path: str) -> None:
        sections.extend([f"## `{path}`", "", "```", p.format_help().rstrip(), "```", ""])
        for action in p._actions:
            if isinstance(action, argparse._SubParsersAction):
                for name, child in action.choices.items():
                    walk(child, f"{path} {name}")

    old = os.environ.get("COLUMNS")
    os.environ["COLUMNS"] = "100"
    try:
        walk(parser, "qore")
    finally:
        if old is None:
            del os.environ["COLUMNS"]
        else:
            os.environ["COLUMNS"] = old
    return "\n".join(sections)


if __name__ == "__main__":
    sys.exit(main())
