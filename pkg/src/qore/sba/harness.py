"""A small service-based core: one NRF plus any number of NFs sharing a PKI.

``Deployment`` owns the PKI, the shared clock, the network and every NF. Each
action method returns an outcome string: ``"ok"``, ``"200"``, or the error
code that stopped the action (a wire code such as ``403-audience`` or a
handshake alert such as ``chain-invalid``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from ..crypto.entropy import EntropySource, resolve
from ..crypto.params import ML_DSA_65
from ..errors import QoreError
from ..pki import (
    DAY, END_ENTITY_PROFILE, INTERMEDIATE_PROFILE, CertRequest, Certificate, Extensions, KeyPair,
    TrustStore, create_root, generate_keypair, issue_certificate,
)
from ..tokens import generate_signing_key, parse_token
from .nf import Clock, Consumer, Network, NfIdentity, Nrf, Producer, SbaError, new_instance_id
from .transport import SecureConnection, TransportError

NRF_ADDRESS = "nrf"
CERT_MODES = ("valid", "none", "rogue")


@dataclass
class Pki:
    root: Certificate
    root_keys: KeyPair = field(repr=False)
    intermediate: Certificate
    intermediate_keys: KeyPair = field(repr=False)

    @classmethod
    def create(cls, org: str, now: int, rng: EntropySource) -> "Pki":
        root, root_keys = create_root(f"CN={org} Root CA", now=now, path_len=1, rng=rng)
        inter_keys = generate_keypair(ML_DSA_65.name, rng)
        inter = issue_certificate(
            root, root_keys,
            CertRequest(f"CN={org} SBA CA", inter_keys.spki, Extensions.ca(0), 365 * DAY, now),
            INTERMEDIATE_PROFILE, now, rng)
        return cls(root, root_keys, inter, inter_keys)

    def trust(self) -> TrustStore:
        return TrustStore((self.root,))

    def issue_nf(self, name: str, nf_type: str, instance_id: str, now: int,
                 rng: EntropySource) -> NfIdentity:
        keys = generate_keypair(ML_DSA_65.name, rng)
        request = CertRequest(f"CN={name},OU={nf_type}", keys.spki,
                              Extensions.end_entity(san=(f"urn:uuid:{instance_id}", f"{name}.sba.local")),
                              90 * DAY, now)
        leaf = issue_certificate(self.intermediate, self.intermediate_keys, request,
                                 END_ENTITY_PROFILE, now, rng)
        return NfIdentity(name, nf_type, instance_id, (leaf, self.intermediate), keys)


@dataclass
class NetworkFunction:
    identity: NfIdentity
    consumer: Consumer
    producer: Producer | None
    rogue: NfIdentity
    services: tuple[str, ...]


class Deployment:
    def __init__(self, now: int, rng: EntropySource | None = None, *, sockets: bool = False,
                 relay: bool = False, token_lifetime: int = 900, nrf_alg: str = ML_DSA_65.name):
        self.rng = resolve(rng)
        self.clock = Clock(now)
        self.pki = Pki.create("Operator", now, self.rng)
        # same subjects and SANs, different root: the "bad certificate" case
        self.rogue_pki = Pki.create("Operator", now, self.rng)
        self.trust = self.pki.trust()
        self.network = Network(relay=relay, sockets=sockets)
        nrf_identity = self.pki.issue_nf("nrf", "NRF", new_instance_id(self.rng), now, self.rng)
        signing_key = generate_signing_key("nrf-key-1", nrf_alg, self.rng)
        self.nrf = Nrf(nrf_identity, self.trust, self.clock, signing_key, self.rng,
                       token_lifetime=token_lifetime)
        self.network.add(NRF_ADDRESS, self.nrf)
        self.nfs: dict[str, NetworkFunction] = {}
        self.tokens: dict[str, str] = {}
        self._connections: dict[tuple[str, str], SecureConnection] = {}

    def add_nf(self, name: str, nf_type: str, services: Sequence[str] = ()) -> NetworkFunction:
        if name in self.nfs or name == NRF_ADDRESS:
            raise SbaError(f"duplicate NF name {name}")
        now = self.clock()
        instance_id = new_instance_id(self.rng)
        identity = self.pki.issue_nf(name, nf_type, instance_id, now, self.rng)
        rogue = self.rogue_pki.issue_nf(name, nf_type, instance_id, now, self.rng)
        producer = None
        if services:
            producer = Producer(identity, self.trust, self.clock, services, self.rng)
            producer.refresh(self.nrf.jwks(), self.nrf.revocations())
            self.network.add(name, producer)
        nf = NetworkFunction(identity, Consumer(identity, self.trust, self.clock, self.rng),
                             producer, rogue, tuple(services))
        self.nfs[name] = nf
        return nf

    def _nf(self, name: str) -> NetworkFunction:
        try:
            return self.nfs[name]
        except KeyError:
            raise SbaError(f"unknown NF {name}") from None

    def connection(self, name: str, address: str, cert: str = "valid") -> SecureConnection:
        """Open (or reuse, for valid certificates) a secure channel from ``name`` to ``address``."""
        if cert not in CERT_MODES:
            raise ValueError(f"cert must be one of {CERT_MODES}")
        nf = self._nf(name)
        key = (name, address)
        if cert == "valid" and key in self._connections:
            return self._connections[key]
        if cert == "valid":
            cfg = nf.consumer.client_config()
        elif cert == "rogue":
            cfg = nf.consumer.client_config(nf.rogue.chain, nf.rogue.keys)
        else:
            cfg = nf.consumer.client_config(chain=())
        conn = self.network.connect(address, cfg)
        if cert == "valid":
            self._connections[key] = conn
        return conn

    @staticmethod
    def _outcome(exc: Exception) -> str:
        return getattr(exc, "code", type(exc).__name__)

    def register(self, name: str, cert: str = "valid") -> str:
        nf = self._nf(name)
        try:
            conn = self.connection(name, NRF_ADDRESS, cert)
            nf.consumer.register(conn, nf.services, name)
        except (QoreError, TransportError) as exc:
            return self._outcome(exc)
        return "ok"

    def get_token(self, name: str, target: str, scope: Sequence[str], save: str | None = None,
                  cert: str = "valid") -> tuple[str, str | None]:
        nf = self._nf(name)
        try:
            conn = self.connection(name, NRF_ADDRESS, cert)
            token = nf.consumer.get_token(conn, target, scope)
        except (QoreError, TransportError) as exc:
            return self._outcome(exc), None
        if save:
            self.tokens[save] = token
        return "ok", token

    def call(self, name: str, producer: str, service: str, token: str | None,
             payload: dict | None = None, cert: str = "valid") -> tuple[str, dict | None]:
        """``token`` is a saved token name, a compact token, or None for no token."""
        nf = self._nf(name)
        token = self.tokens.get(token, token) if token else None
        try:
            conn = self.connection(name, producer, cert)
            reply = nf.consumer.call(conn, service, token, payload or {})
        except (QoreError, TransportError) as exc:
            return self._outcome(exc), None
        return str(reply["status"]), reply.get("payload")

    def advance_clock(self, seconds: int) -> int:
        return self.clock.advance(seconds)

    def revoke(self, token: str) -> str:
        """Revoke a saved token and publish the new revocation set to every producer."""
        jti = parse_token(self.tokens.get(token, token)).claims.jti
        rset = self.nrf.revoke_token(jti)
        for nf in self.nfs.values():
            if nf.producer is not None:
                nf.producer.refresh(nf.producer.keyset, rset)
        return jti

    def rotate_key(self, retire_old: bool = False) -> str:
        return self.nrf.rotate_key(retire_old).kid

    def refresh(self, name: str) -> list[str]:
        """Producer ``name`` pulls the NRF's current key set and revocation set."""
        producer = self._nf(name).producer
        if producer is None:
            raise SbaError(f"{name} is not a producer")
        producer.refresh(self.nrf.jwks(), self.nrf.revocations())
        return [k.kid for k in producer.keyset.keys]

    def audit(self) -> list[str]:
        return self.nrf.audit()

    def handled(self) -> dict[str, int]:
        return {name: nf.producer.handled for name, nf in self.nfs.items() if nf.producer}

    def endpoint_events(self) -> list[dict]:
        events = list(self.nrf.events)
        for nf in self.nfs.values():
            if nf.producer:
                events.extend(nf.producer.events)
        return events

    def close(self) -> list[str]:
        """Close every channel and return the teardown audit (jti values that fail)."""
        for conn in self._connections.values():
            conn.close()
        self._connections.clear()
        self.network.close()
        return self.audit()

    def __enter__(self) -> "Deployment":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def dumps_event(event: dict) -> str:
    return json.dumps(event, sort_keys=True, separators=(",", ":"))
