"""Network functions: the NRF (registry and token issuer), producers and consumers.

Every connection starts with a mutual-certificate handshake; service messages
then travel as JSON inside sealed records. A producer validates the bearer
token against its own NF type, the requested service and the peer's
certificate identity before its handler ever sees the payload.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from ..crypto.entropy import EntropySource, resolve
from ..crypto.sig import sig_verify
from ..errors import QoreError
from ..handshake.core import HandshakeConfig, HandshakeError, run_client, run_server, suites_for_nf
from ..pki import Certificate, KeyPair, TrustStore
from ..tokens import (
    DEFAULT_LIFETIME, KeySetDocument, RevocationSet, SigningKey, TokenError, generate_signing_key,
    issue_token, make_claims, parse_token, revoke, validate_token,
)
from .transport import (
    ScpRelay, SecureConnection, SocketPipe, SocketServer, TransportError, pipe_pair, serve_in_thread,
)

# validate_token error code -> wire status
WIRE_CODES = {
    "malformed-token": "401-malformed-token",
    "unknown-kid": "401-unknown-kid",
    "bad-signature": "401-bad-signature",
    "expired": "401-expired",
    "revocation-set-invalid": "401-revocation-set-invalid",
    "revoked": "403-revoked",
    "audience-mismatch": "403-audience",
    "scope-mismatch": "403-scope",
    "subject-mismatch": "403-subject",
}
MISSING_TOKEN = "401-missing-token"

DEFAULT_POLICY: dict[str, dict[str, tuple[str, ...]]] = {
    "AMF": {"UDM": ("nudm-sdm", "nudm-uecm"), "AUSF": ("nausf-auth",), "SMF": ("nsmf-pdusession",)},
    "SMF": {"UDM": ("nudm-sdm",), "PCF": ("npcf-smpolicycontrol",), "UPF": ("nupf-session",)},
    "AUSF": {"UDM": ("nudm-ueau",)},
    "NEF": {"UDM": ("nudm-sdm",), "PCF": ("npcf-policyauthorization",)},
}


class SbaError(QoreError):
    code = "sba-error"


class ServiceError(SbaError):
    """An error response from a peer; ``code`` is the wire code it sent."""

    def __init__(self, code: str, message: str | None = None):
        super().__init__(message or code)
        self.code = code


class Clock:
    """Shared simulated clock in unix seconds."""

    def __init__(self, now: int):
        self._now = int(now)
        self._lock = threading.Lock()

    def __call__(self) -> int:
        return self._now

    def advance(self, seconds: int) -> int:
        with self._lock:
            self._now += int(seconds)
            return self._now


@dataclass
class NfIdentity:
    name: str
    nf_type: str
    instance_id: str
    chain: Sequence[Certificate]
    keys: KeyPair | None = field(repr=False)


@dataclass(frozen=True)
class NfProfile:
    nf_instance_id: str
    nf_type: str
    services: tuple[str, ...]
    subject: str
    endpoint: str

    def to_dict(self) -> dict:
        return {"nf_instance_id": self.nf_instance_id, "nf_type": self.nf_type,
                "services": list(self.services), "subject": self.subject, "endpoint": self.endpoint}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NfProfile":
        return cls(d["nf_instance_id"], d["nf_type"], tuple(d["services"]), d["subject"], d["endpoint"])


def instance_id_from_san(san: Iterable[str]) -> str | None:
    for name in san:
        if name.startswith("urn:uuid:"):
            return name[len("urn:uuid:"):]
    return None


def new_instance_id(rng: EntropySource | None = None) -> str:
    return str(uuid.UUID(bytes=resolve(rng).random_bytes(16), version=4))


def encode_msg(kind: str, corr: int, **fields) -> bytes:
    return json.dumps({"kind": kind, "corr": corr, **fields}, sort_keys=True,
                      separators=(",", ":")).encode()


def decode_msg(data: bytes) -> dict:
    msg = json.loads(data)
    if not isinstance(msg, dict) or "kind" not in msg:
        raise SbaError("malformed service message")
    return msg


class Endpoint:
    """Server side shared by the NRF and producers."""

    def __init__(self, identity: NfIdentity, trust: TrustStore, clock: Clock,
                 rng: EntropySource | None = None):
        self.identity = identity
        self.trust = trust
        self.clock = clock
        self.rng = resolve(rng)
        self.events: list[dict] = []
        self._lock = threading.Lock()

    def server_config(self) -> HandshakeConfig:
        return HandshakeConfig("server", self.trust, self.identity.chain, self.identity.keys,
                               require_client_cert=True, suites=suites_for_nf(self.identity.nf_type),
                               clock=self.clock, rng=self.rng)

    def _event(self, **fields) -> None:
        with self._lock:
            self.events.append({"nf": self.identity.name, **fields})

    def serve_connection(self, pipe) -> None:
        try:
            session = run_server(pipe, self.server_config())
        except (QoreError, TransportError) as exc:
            self._event(event="handshake-rejected", code=exc.code)
            pipe.close()
            return
        conn = SecureConnection(pipe, session)
        peer_id = instance_id_from_san(session.peer.san) if session.peer else None
        while True:
            try:
                msg = decode_msg(conn.recv(timeout=30.0))
            except TransportError:
                break
            except QoreError as exc:
                self._event(event="record-rejected", code=exc.code)
                break
            try:
                reply = self.handle(session, peer_id, msg)
            except QoreError as exc:
                reply = encode_msg("error", msg.get("corr", 0), code=exc.code)
            conn.send(reply)
        pipe.close()

    def handle(self, session, peer_id: str | None, msg: dict) -> bytes:
        raise NotImplementedError


class Nrf(Endpoint):
    def __init__(self, identity: NfIdentity, trust: TrustStore, clock: Clock,
                 signing_key: SigningKey, rng: EntropySource | None = None,
                 policy: Mapping[str, Mapping[str, Sequence[str]]] | None = None,
                 token_lifetime: int = DEFAULT_LIFETIME):
        super().__init__(identity, trust, clock, rng)
        self.signing_key = signing_key
        self.policy = {c: {t: tuple(s) for t, s in targets.items()}
                       for c, targets in (policy or DEFAULT_POLICY).items()}
        self.token_lifetime = token_lifetime
        self._registry: dict[str, NfProfile] = {}
        self._keyset = KeySetDocument((signing_key.entry(),))
        self._revocations: RevocationSet | None = None
        self.issued: list[str] = []
        self._key_counter = 1

    # snapshots
    def jwks(self) -> KeySetDocument:
        return self._keyset

    def revocations(self) -> RevocationSet | None:
        return self._revocations

    def registry(self) -> dict[str, NfProfile]:
        return dict(self._registry)

    def register(self, profile: NfProfile) -> None:
        with self._lock:
            existing = self._registry.get(profile.nf_instance_id)
            if existing is not None and existing.subject != profile.subject:
                raise SbaError(f"instance id {profile.nf_instance_id} already registered")
            updated = dict(self._registry)
            updated[profile.nf_instance_id] = profile
            self._registry = updated

    def issue_for(self, consumer: NfProfile, target: str, scope: Sequence[str]) -> str:
        allowed = self.policy.get(consumer.nf_type, {}).get(target, ())
        if not scope or not set(scope) <= set(allowed):
            raise ServiceError("scope-denied", f"{consumer.nf_type} may not request {list(scope)} from {target}")
        now = self.clock()
        claims = make_claims(iss=self.identity.instance_id, sub=consumer.nf_instance_id, aud=target,
                             scope=scope, nf_type=consumer.nf_type, now=now,
                             lifetime=self.token_lifetime, rng=self.rng)
        token = issue_token(self.signing_key, None, claims, now, rng=self.rng)
        with self._lock:
            self.issued.append(token)
        return token

    def rotate_key(self, retire_old: bool = False, alg: str | None = None) -> SigningKey:
        self._key_counter += 1
        new = generate_signing_key(f"nrf-key-{self._key_counter}", alg or self.signing_key.alg, self.rng)
        keyset = self._keyset.without_key(self.signing_key.kid) if retire_old else self._keyset
        with self._lock:
            self._keyset = keyset.with_key(new.entry())
            self.signing_key = new
        return new

    def revoke_token(self, jti: str) -> RevocationSet:
        rset = revoke(jti, self._revocations, self.signing_key, self.clock(), self.rng)
        with self._lock:
            self._revocations = rset
        return rset

    def audit(self, keyset: KeySetDocument | None = None) -> list[str]:
        """jti of every issued token whose signature fails under ``keyset``."""
        keyset = keyset or self._keyset
        failures = []
        for token in self.issued:
            parsed = parse_token(token)
            entry = keyset.get(parsed.header["kid"])
            if entry is None or not sig_verify(entry.alg, entry.vk, parsed.signing_input,
                                               parsed.signature, b""):
                failures.append(parsed.claims.jti)
        return failures

    def handle(self, session, peer_id, msg):
        corr = msg.get("corr", 0)
        kind = msg["kind"]
        if kind == "register":
            profile = NfProfile.from_dict(msg["profile"])
            if profile.nf_instance_id != peer_id or profile.subject != session.peer.subject:
                raise ServiceError("identity-mismatch", "profile does not match the mTLS identity")
            self.register(profile)
            self._event(event="registered", instance=profile.nf_instance_id, nf_type=profile.nf_type)
            return encode_msg("service_response", corr, status=201)
        if kind == "token_request":
            consumer = self._registry.get(peer_id or "")
            if consumer is None or consumer.subject != session.peer.subject:
                raise ServiceError("unregistered-consumer", "consumer is not registered")
            token = self.issue_for(consumer, msg["target"], tuple(msg["scope"]))
            self._event(event="token-issued", sub=consumer.nf_instance_id, aud=msg["target"])
            return encode_msg("token_response", corr, token=token)
        if kind == "keyset_request":
            return encode_msg("keyset_response", corr, keyset=json.loads(self._keyset.to_json()))
        raise ServiceError("unsupported-message", kind)


class Producer(Endpoint):
    def __init__(self, identity: NfIdentity, trust: TrustStore, clock: Clock, services: Sequence[str],
                 rng: EntropySource | None = None,
                 handler: Callable[[str, dict], dict] | None = None):
        super().__init__(identity, trust, clock, rng)
        self.services = tuple(services)
        self.handler = handler or (lambda service, payload: {"echo": payload, "service": service})
        self.keyset = KeySetDocument()
        self.revocations: RevocationSet | None = None
        self.handled = 0

    def refresh(self, keyset: KeySetDocument, revocations: RevocationSet | None) -> None:
        self.keyset, self.revocations = keyset, revocations

    def handle(self, session, peer_id, msg):
        corr = msg.get("corr", 0)
        if msg["kind"] != "service_request":
            raise ServiceError("unsupported-message", msg["kind"])
        service = msg.get("service", "")
        if service not in self.services:
            raise ServiceError("404-service", f"{self.identity.name} does not offer {service}")
        token = msg.get("token")
        if not token:
            self._event(event="request-rejected", code=MISSING_TOKEN)
            raise ServiceError(MISSING_TOKEN)
        try:
            claims = validate_token(token, self.keyset, self.identity.nf_type, self.clock(),
                                    self.revocations, required_scope=service, expected_sub=peer_id)
        except TokenError as exc:
            code = WIRE_CODES.get(exc.code, "401-" + exc.code)
            self._event(event="request-rejected", code=code)
            raise ServiceError(code, str(exc)) from exc
        with self._lock:
            self.handled += 1
        self._event(event="request-served", sub=claims.sub, service=service)
        return encode_msg("service_response", corr, status=200,
                          payload=self.handler(service, msg.get("payload", {})))


class Network:
    """Address book of endpoints.

    ``connect`` opens a pipe to the endpoint, serves the far end in its own
    thread and runs the client handshake. The default transport is an
    in-process loopback; ``sockets=True`` puts each endpoint behind a TCP
    listener on localhost. With ``relay=True`` every loopback connection
    passes through an ``ScpRelay``.
    """

    def __init__(self, relay: bool = False, sockets: bool = False):
        if relay and sockets:
            raise ValueError("the SCP relay is only modelled on the loopback transport")
        self.endpoints: dict[str, Endpoint] = {}
        self.relay = relay
        self.sockets = sockets
        self.relays: list[ScpRelay] = []
        self.servers: dict[str, SocketServer] = {}

    def add(self, address: str, endpoint: Endpoint) -> None:
        self.endpoints[address] = endpoint
        if self.sockets:
            self.servers[address] = SocketServer(endpoint.serve_connection).start()

    def open_pipe(self, address: str):
        try:
            endpoint = self.endpoints[address]
        except KeyError:
            raise SbaError(f"no endpoint at {address}") from None
        if self.sockets:
            return SocketPipe.connect(*self.servers[address].address)
        client, server = pipe_pair(address)
        if self.relay:
            scp_in, scp_out = pipe_pair(address + "/scp")
            self.relays.append(ScpRelay(server, scp_in).start())
            server = scp_out
        serve_in_thread(endpoint.serve_connection, server)
        return client

    def connect(self, address: str, cfg: HandshakeConfig) -> SecureConnection:
        pipe = self.open_pipe(address)
        try:
            session = run_client(pipe, cfg)
        except (QoreError, TransportError):
            pipe.close()
            raise
        return SecureConnection(pipe, session)

    def close(self) -> None:
        for server in self.servers.values():
            server.stop()
        self.servers.clear()


class Consumer:
    def __init__(self, identity: NfIdentity, trust: TrustStore, clock: Clock,
                 rng: EntropySource | None = None):
        self.identity = identity
        self.trust = trust
        self.clock = clock
        self.rng = resolve(rng)
        self._corr = 0

    def client_config(self, chain: Sequence[Certificate] | None = None,
                      keys: KeyPair | None = None) -> HandshakeConfig:
        chain = self.identity.chain if chain is None else chain
        keys = self.identity.keys if keys is None and chain else keys
        return HandshakeConfig("client", self.trust, chain, keys,
                               suites=suites_for_nf(self.identity.nf_type), clock=self.clock, rng=self.rng)

    def _next(self) -> int:
        self._corr += 1
        return self._corr

    def request(self, conn: SecureConnection, kind: str, **fields) -> dict:
        corr = self._next()
        conn.send(encode_msg(kind, corr, **fields))
        reply = decode_msg(conn.recv())
        if reply.get("corr") != corr:
            raise SbaError("correlation id mismatch")
        if reply["kind"] == "error":
            raise ServiceError(reply["code"])
        return reply

    def register(self, conn: SecureConnection, services: Sequence[str] = (), endpoint: str = "") -> None:
        profile = NfProfile(self.identity.instance_id, self.identity.nf_type, tuple(services),
                            self.identity.chain[0].subject if self.identity.chain else "",
                            endpoint or self.identity.name)
        self.request(conn, "register", profile=profile.to_dict())

    def get_token(self, conn: SecureConnection, target: str, scope: Sequence[str]) -> str:
        return self.request(conn, "token_request", target=target, scope=list(scope))["token"]

    def call(self, conn: SecureConnection, service: str, token: str | None, payload: dict) -> dict:
        return self.request(conn, "service_request", service=service, token=token, payload=payload)


__all__ = [
    "Clock", "Consumer", "Endpoint", "HandshakeError", "MISSING_TOKEN", "Network", "NfIdentity",
    "NfProfile", "Nrf", "Producer", "SbaError", "ServiceError", "WIRE_CODES", "instance_id_from_san",
    "new_instance_id",
]
