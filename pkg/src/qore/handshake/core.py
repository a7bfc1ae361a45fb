"""Mutually authenticated handshake over a hybrid X25519MLKEM768 exchange.

Flights::

    C -> S  ClientHello{random, suites, hybrid public key}
    S -> C  ServerHello{random, suite, hybrid ciphertext}
            [CertificateRequest] Certificate CertificateVerify Finished
    C -> S  [Certificate CertificateVerify] Finished

Key schedule, with ``th`` the transcript hash through ServerHello::

    hs   = HKDF-Extract(0, ss)
    c_hs = HKDF-Expand(hs, "c hs" | th)     s_hs  = HKDF-Expand(hs, "s hs" | th)
    c_fk = HKDF-Expand(hs, "c fin" | th)    s_fk  = HKDF-Expand(hs, "s fin" | th)
    key  = HKDF-Expand(x_hs, "key", key_len)   iv = HKDF-Expand(x_hs, "iv", 12)

CertificateVerify signs ``"QORE-CV-" | role | transcript hash`` and Finished
is ``HMAC(finished_key, transcript hash)``, each over the transcript up to
the preceding message.
"""

from __future__ import annotations

import hmac
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from ..crypto.entropy import EntropySource, resolve
from ..crypto.kdf import hash_len, hkdf_expand, hkdf_extract
from ..crypto.symmetric import AEAD_KEY_LEN, aead_open, aead_seal
from ..errors import LengthMismatch, MalformedKey, QoreError
from ..hybrid import HybridCiphertext, HybridPrivateKey, hybrid_decaps, hybrid_encaps, hybrid_keygen
from ..pki import (
    EKU_CLIENT, EKU_SERVER, Certificate, ChainError, Crl, KeyPair, TrustStore, ValidatedIdentity,
    sign_bytes, validate_chain, verify_signatures,
)
from .messages import (
    RANDOM_LEN, ClientHello, MsgType, ServerHello, Transcript, decode_certificate,
    decode_certificate_verify, encode_alert, encode_certificate, encode_certificate_verify, frame,
    split_frames,
)

CV_LABEL = b"QORE-CV-"
CV_CONTEXT = b"qore-cv"
NONCE_LEN = 12


class HandshakeError(QoreError):
    code = "handshake-error"


class ChainInvalid(HandshakeError):
    code = "chain-invalid"

    def __init__(self, message: str | None = None, reason: str | None = None):
        super().__init__(message)
        self.reason = reason


class CertificateVerifyFailed(HandshakeError):
    code = "signature-invalid"


class FinishedMismatch(HandshakeError):
    code = "finished-mismatch"


class ClientCertMissing(HandshakeError):
    code = "mtls-client-cert-missing"


class CipherMismatch(HandshakeError):
    code = "cipher-mismatch"


class UnexpectedMessage(HandshakeError):
    code = "unexpected-message"


class PeerAlert(HandshakeError):
    """The peer aborted; ``code`` is the peer's reason."""

    def __init__(self, code: str):
        super().__init__(f"peer aborted: {code}")
        self.code = code


class ReplayError(QoreError):
    code = "replay"


@dataclass(frozen=True)
class CipherSuite:
    code: int
    name: str
    aead: str
    hash: str

    @property
    def key_len(self) -> int:
        return AEAD_KEY_LEN[self.aead]

    @property
    def hash_len(self) -> int:
        return hash_len(self.hash)


AES_128_GCM_SHA256 = CipherSuite(0x1301, "AES-128-GCM+SHA-256", "AES-128-GCM", "sha256")
AES_256_GCM_SHA384 = CipherSuite(0x1302, "AES-256-GCM+SHA-384", "AES-256-GCM", "sha384")
CHACHA20_POLY1305_SHA256 = CipherSuite(0x1303, "CHACHA20-POLY1305+SHA-256", "CHACHA20-POLY1305", "sha256")
SUITES = {s.code: s for s in (AES_256_GCM_SHA384, AES_128_GCM_SHA256, CHACHA20_POLY1305_SHA256)}
SUITES_BY_NAME = {s.name: s for s in SUITES.values()}
DEFAULT_SUITES = (AES_256_GCM_SHA384, CHACHA20_POLY1305_SHA256, AES_128_GCM_SHA256)

# Allowed suites per NF type, most preferred first.
NF_CIPHER_POLICY: dict[str, tuple[CipherSuite, ...]] = {
    "NRF": (AES_256_GCM_SHA384, CHACHA20_POLY1305_SHA256),
    "AUSF": (AES_256_GCM_SHA384,),
    "UDM": (AES_256_GCM_SHA384,),
    "AMF": (AES_256_GCM_SHA384, CHACHA20_POLY1305_SHA256),
    "SMF": (AES_256_GCM_SHA384, CHACHA20_POLY1305_SHA256),
    "UPF": (AES_256_GCM_SHA384, AES_128_GCM_SHA256, CHACHA20_POLY1305_SHA256),
    "PCF": DEFAULT_SUITES,
    "NEF": DEFAULT_SUITES,
}


def suite(name_or_code: str | int | CipherSuite) -> CipherSuite:
    if isinstance(name_or_code, CipherSuite):
        return name_or_code
    table = SUITES if isinstance(name_or_code, int) else SUITES_BY_NAME
    try:
        return table[name_or_code]
    except KeyError:
        raise CipherMismatch(f"unknown cipher suite {name_or_code!r}") from None


def suites_for_nf(nf_type: str) -> tuple[CipherSuite, ...]:
    return NF_CIPHER_POLICY.get(nf_type, DEFAULT_SUITES)


@dataclass
class HandshakeConfig:
    role: str
    trust: TrustStore
    chain: Sequence[Certificate] = ()
    keys: KeyPair | None = None
    require_client_cert: bool = False
    suites: Sequence[CipherSuite] = DEFAULT_SUITES
    clock: Callable[[], int] = field(default=lambda: int(time.time()))
    crls: Sequence[Crl] = ()
    rng: EntropySource | None = None
    hybrid_policy: str = "and"

    def __post_init__(self):
        if self.role not in ("client", "server"):
            raise ValueError("role must be 'client' or 'server'")
        self.suites = tuple(suite(s) for s in self.suites)
        if not self.suites:
            raise CipherMismatch("no cipher suites configured")
        if self.chain and self.keys is None:
            raise MalformedKey("a certificate chain needs its signing keys")
        if self.chain and self.keys is not None and self.chain[0].spki != self.keys.spki:
            raise MalformedKey("signing keys do not match the leaf certificate")


@dataclass(frozen=True)
class DirectionKeys:
    key: bytes = field(repr=False)
    iv: bytes = field(repr=False)


@dataclass(frozen=True)
class SessionKeys:
    client_write: DirectionKeys
    server_write: DirectionKeys
    client_finished_key: bytes = field(repr=False)
    server_finished_key: bytes = field(repr=False)


def derive_session_keys(shared_secret: bytes, transcript_hash: bytes, cs: CipherSuite) -> SessionKeys:
    n = cs.hash_len
    hs = hkdf_extract(b"\x00" * n, shared_secret, cs.hash)

    def expand(secret: bytes, label: bytes, length: int) -> bytes:
        return hkdf_expand(secret, label, length, cs.hash)

    c_hs = expand(hs, b"c hs" + transcript_hash, n)
    s_hs = expand(hs, b"s hs" + transcript_hash, n)
    return SessionKeys(
        DirectionKeys(expand(c_hs, b"key", cs.key_len), expand(c_hs, b"iv", NONCE_LEN)),
        DirectionKeys(expand(s_hs, b"key", cs.key_len), expand(s_hs, b"iv", NONCE_LEN)),
        expand(hs, b"c fin" + transcript_hash, n),
        expand(hs, b"s fin" + transcript_hash, n),
    )


def finished_mac(finished_key: bytes, transcript_hash: bytes, cs: CipherSuite) -> bytes:
    return hmac.new(finished_key, transcript_hash, cs.hash).digest()


def _cv_content(role: str, transcript_hash: bytes) -> bytes:
    return CV_LABEL + role.encode("ascii") + transcript_hash


class Session:
    """Established channel state. ``seal``/``open`` are safe to call from
    several threads; each direction's counter is serialized by its own lock."""

    def __init__(self, role: str, cs: CipherSuite, keys: SessionKeys, transcript_hash: bytes,
                 peer: ValidatedIdentity | None):
        self.role = role
        self.suite = cs
        self.keys = keys
        self.transcript_hash = transcript_hash
        self.peer = peer
        self._seal_seq = {"client": 0, "server": 0}
        self._open_seq = {"client": 0, "server": 0}
        self._locks = {d: threading.Lock() for d in ("client", "server")}

    def _dir_keys(self, direction: str) -> DirectionKeys:
        if direction == "client":
            return self.keys.client_write
        if direction == "server":
            return self.keys.server_write
        raise ValueError("direction must be 'client' or 'server'")

    @staticmethod
    def _nonce(iv: bytes, seq: int) -> bytes:
        return bytes(a ^ b for a, b in zip(iv, seq.to_bytes(NONCE_LEN, "big")))

    def seal(self, direction: str, plaintext: bytes, aad: bytes = b"") -> bytes:
        keys = self._dir_keys(direction)
        with self._locks[direction]:
            seq = self._seal_seq[direction]
            if seq >= 1 << 64:
                raise ReplayError("sequence space exhausted")
            self._seal_seq[direction] = seq + 1
        header = seq.to_bytes(8, "big")
        return header + aead_seal(keys.key, self._nonce(keys.iv, seq), header + aad, plaintext,
                                  self.suite.aead)

    def open(self, direction: str, record: bytes, aad: bytes = b"") -> bytes:
        keys = self._dir_keys(direction)
        if len(record) < 8 + 16:
            raise LengthMismatch("record too short")
        seq = int.from_bytes(record[:8], "big")
        with self._locks[direction]:
            expected = self._open_seq[direction]
            if seq != expected:
                raise ReplayError(f"record {seq} out of sequence, expected {expected}")
            pt = aead_open(keys.key, self._nonce(keys.iv, seq), record[:8] + aad, record[8:],
                           self.suite.aead)
            self._open_seq[direction] = seq + 1
        return pt

    @property
    def outbound(self) -> str:
        return self.role

    @property
    def inbound(self) -> str:
        return "server" if self.role == "client" else "client"

    def send(self, plaintext: bytes, aad: bytes = b"") -> bytes:
        return self.seal(self.outbound, plaintext, aad)

    def receive(self, record: bytes, aad: bytes = b"") -> bytes:
        return self.open(self.inbound, record, aad)


# state machine

@dataclass
class ClientState:
    cfg: HandshakeConfig
    hello: ClientHello
    private: HybridPrivateKey = field(repr=False)
    raw_hello: bytes


@dataclass
class ServerState:
    cfg: HandshakeConfig
    suite: CipherSuite
    keys: SessionKeys
    transcript: Transcript
    sh_hash: bytes


def _validate_peer(cfg: HandshakeConfig, chain: Sequence[Certificate], needed_eku: str) -> ValidatedIdentity:
    try:
        ident = validate_chain(chain, cfg.trust, cfg.clock(), cfg.crls, cfg.hybrid_policy)
    except ChainError as exc:
        raise ChainInvalid(f"peer chain rejected: {exc}", exc.code) from exc
    if ident.eku and needed_eku not in ident.eku:
        raise ChainInvalid(f"peer certificate lacks {needed_eku}", "eku")
    return ident


def client_hello(cfg: HandshakeConfig, rng: EntropySource | None = None) -> tuple[bytes, ClientState]:
    rng = resolve(rng or cfg.rng)
    pub, priv = hybrid_keygen(rng)
    hello = ClientHello(rng.random_bytes(RANDOM_LEN), tuple(s.code for s in cfg.suites), pub.encode())
    raw = hello.encode()
    return raw, ClientState(cfg, hello, priv, raw)


def _expect_single(data: bytes, msg_type: MsgType):
    frames = split_frames(data)
    if len(frames) != 1 or frames[0][0] != msg_type:
        raise UnexpectedMessage(f"expected a single {msg_type.name}")
    return frames[0]


def _choose_suite(cfg: HandshakeConfig, offered: Sequence[int]) -> CipherSuite:
    for cs in cfg.suites:
        if cs.code in offered:
            return cs
    raise CipherMismatch("no cipher suite in common")


def server_respond(cfg: HandshakeConfig, hello_bytes: bytes,
                   rng: EntropySource | None = None) -> tuple[bytes, ServerState]:
    rng = resolve(rng or cfg.rng)
    if not cfg.chain or cfg.keys is None:
        raise MalformedKey("server needs a certificate chain and keys")
    _, body, raw = _expect_single(hello_bytes, MsgType.CLIENT_HELLO)
    hello = ClientHello.decode(body)
    cs = _choose_suite(cfg, hello.suites)
    ct, ss = hybrid_encaps(hello.key_share, rng)
    sh = ServerHello(rng.random_bytes(RANDOM_LEN), cs.code, ct.encode()).encode()

    transcript = Transcript(cs.hash, [raw, sh])
    sh_hash = transcript.digest()
    with ss:
        keys = derive_session_keys(ss.expose(), sh_hash, cs)

    flight = [sh]
    if cfg.require_client_cert:
        req = frame(MsgType.CERTIFICATE_REQUEST, b"")
        transcript.append(req)
        flight.append(req)
    cert = encode_certificate(cfg.chain)
    transcript.append(cert)
    sigs = sign_bytes(cfg.keys, _cv_content("server", transcript.digest()), CV_CONTEXT, rng)
    cv = encode_certificate_verify(sigs)
    transcript.append(cv)
    fin = frame(MsgType.FINISHED, finished_mac(keys.server_finished_key, transcript.digest(), cs))
    transcript.append(fin)
    flight += [cert, cv, fin]
    return b"".join(flight), ServerState(cfg, cs, keys, transcript, sh_hash)


def client_finish(state: ClientState, server_flight: bytes,
                  rng: EntropySource | None = None) -> tuple[bytes, Session]:
    cfg = state.cfg
    rng = resolve(rng or cfg.rng)
    frames = split_frames(server_flight)
    types = [t for t, _, _ in frames]
    if types and types[0] == MsgType.ALERT:
        raise PeerAlert(frames[0][1].decode("ascii", "replace"))
    cert_requested = MsgType.CERTIFICATE_REQUEST in types
    expected = [MsgType.SERVER_HELLO] + ([MsgType.CERTIFICATE_REQUEST] if cert_requested else []) + \
        [MsgType.CERTIFICATE, MsgType.CERTIFICATE_VERIFY, MsgType.FINISHED]
    if types != expected:
        raise UnexpectedMessage(f"unexpected server flight {types}")

    sh = ServerHello.decode(frames[0][1])
    if sh.suite not in state.hello.suites:
        raise CipherMismatch("server selected a suite that was not offered")
    cs = suite(sh.suite)
    transcript = Transcript(cs.hash, [state.raw_hello, frames[0][2]])
    sh_hash = transcript.digest()
    with hybrid_decaps(state.private, HybridCiphertext.decode(sh.ciphertext)) as ss:
        keys = derive_session_keys(ss.expose(), sh_hash, cs)

    idx = 1
    if cert_requested:
        transcript.append(frames[idx][2])
        idx += 1
    chain = decode_certificate(frames[idx][1])
    transcript.append(frames[idx][2])
    peer = _validate_peer(cfg, chain, EKU_SERVER)

    sigs = decode_certificate_verify(frames[idx + 1][1])
    if not verify_signatures(chain[0].spki, _cv_content("server", transcript.digest()), sigs,
                             CV_CONTEXT, cfg.hybrid_policy):
        raise CertificateVerifyFailed("server CertificateVerify does not verify")
    transcript.append(frames[idx + 1][2])

    expected_fin = finished_mac(keys.server_finished_key, transcript.digest(), cs)
    if not hmac.compare_digest(expected_fin, frames[idx + 2][1]):
        raise FinishedMismatch("server Finished does not match")
    transcript.append(frames[idx + 2][2])

    flight = []
    if cert_requested:
        chain_out = list(cfg.chain) if cfg.keys is not None else []
        cert = encode_certificate(chain_out)
        transcript.append(cert)
        flight.append(cert)
        if chain_out:
            cv = encode_certificate_verify(
                sign_bytes(cfg.keys, _cv_content("client", transcript.digest()), CV_CONTEXT, rng))
            transcript.append(cv)
            flight.append(cv)
    fin = frame(MsgType.FINISHED, finished_mac(keys.client_finished_key, transcript.digest(), cs))
    transcript.append(fin)
    flight.append(fin)
    return b"".join(flight), Session("client", cs, keys, sh_hash, peer)


def server_complete(state: ServerState, client_flight: bytes) -> Session:
    cfg, cs, transcript = state.cfg, state.suite, state.transcript
    frames = split_frames(client_flight)
    types = [t for t, _, _ in frames]
    if types and types[0] == MsgType.ALERT:
        raise PeerAlert(frames[0][1].decode("ascii", "replace"))
    peer = None
    idx = 0
    if cfg.require_client_cert:
        if not types or types[0] != MsgType.CERTIFICATE:
            raise ClientCertMissing("client sent no Certificate message")
        chain = decode_certificate(frames[0][1])
        if not chain:
            raise ClientCertMissing("client sent an empty certificate chain")
        transcript.append(frames[0][2])
        peer = _validate_peer(cfg, chain, EKU_CLIENT)
        if len(types) < 2 or types[1] != MsgType.CERTIFICATE_VERIFY:
            raise CertificateVerifyFailed("client CertificateVerify missing")
        sigs = decode_certificate_verify(frames[1][1])
        if not verify_signatures(chain[0].spki, _cv_content("client", transcript.digest()), sigs,
                                 CV_CONTEXT, cfg.hybrid_policy):
            raise CertificateVerifyFailed("client CertificateVerify does not verify")
        transcript.append(frames[1][2])
        idx = 2
    if types[idx:] != [MsgType.FINISHED]:
        raise UnexpectedMessage(f"unexpected client flight {types}")
    expected_fin = finished_mac(state.keys.client_finished_key, transcript.digest(), cs)
    if not hmac.compare_digest(expected_fin, frames[idx][1]):
        raise FinishedMismatch("client Finished does not match")
    transcript.append(frames[idx][2])
    return Session("server", cs, state.keys, state.sh_hash, peer)


# drivers over a message pipe

class MessagePipe(Protocol):
    def send(self, data: bytes) -> None: ...

    def recv(self, timeout: float | None = None) -> bytes: ...


def _abort(pipe: MessagePipe, exc: QoreError) -> None:
    if not isinstance(exc, PeerAlert):
        try:
            pipe.send(encode_alert(exc.code))
        except Exception:
            pass


def _check_alert(data: bytes) -> None:
    if data[:1] == bytes([MsgType.ALERT]):
        frames = split_frames(data)
        raise PeerAlert(frames[0][1].decode("ascii", "replace"))


def run_client(pipe: MessagePipe, cfg: HandshakeConfig, timeout: float | None = 10.0) -> Session:
    hello, state = client_hello(cfg)
    pipe.send(hello)
    try:
        flight = pipe.recv(timeout)
        _check_alert(flight)
        out, session = client_finish(state, flight)
    except QoreError as exc:
        _abort(pipe, exc)
        raise
    pipe.send(out)
    # The server acknowledges with an empty record or an alert.
    ack = pipe.recv(timeout)
    _check_alert(ack)
    return session


def run_server(pipe: MessagePipe, cfg: HandshakeConfig, timeout: float | None = 10.0) -> Session:
    try:
        hello = pipe.recv(timeout)
        flight, state = server_respond(cfg, hello)
    except QoreError as exc:
        _abort(pipe, exc)
        raise
    pipe.send(flight)
    try:
        reply = pipe.recv(timeout)
        _check_alert(reply)
        session = server_complete(state, reply)
    except QoreError as exc:
        _abort(pipe, exc)
        raise
    pipe.send(b"")
    return session


def handshake_in_memory(client_cfg: HandshakeConfig, server_cfg: HandshakeConfig,
                        tamper: Callable[[str, bytes], bytes] | None = None) -> tuple[Session, Session]:
    """Run both sides in-process. ``tamper(stage, data)`` may rewrite each flight in
    transit; stages are ``client_hello``, ``server_flight`` and ``client_flight``."""
    t = tamper or (lambda stage, data: data)
    hello, cstate = client_hello(client_cfg)
    flight, sstate = server_respond(server_cfg, t("client_hello", hello))
    out, csession = client_finish(cstate, t("server_flight", flight))
    ssession = server_complete(sstate, t("client_flight", out))
    return csession, ssession


def replace_frame(data: bytes, msg_type: MsgType, new_body: bytes) -> bytes:
    """Rewrite the body of the first frame of ``msg_type`` in a flight."""
    out, done = [], False
    for t, body, raw in split_frames(data):
        if t == msg_type and not done:
            out.append(frame(t, new_body))
            done = True
        else:
            out.append(raw)
    return b"".join(out)
