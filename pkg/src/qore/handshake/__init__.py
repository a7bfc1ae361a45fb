"""Hybrid-KEM mutual-authentication handshake and its record channel."""

from .core import (
    AES_128_GCM_SHA256, AES_256_GCM_SHA384, CHACHA20_POLY1305_SHA256, SUITES,
    CertificateVerifyFailed, ChainInvalid, CipherMismatch, CipherSuite, ClientCertMissing,
    FinishedMismatch, HandshakeConfig, HandshakeError, PeerAlert, ReplayError, Session,
    client_finish, client_hello, handshake_in_memory, run_client, run_server, server_complete,
    server_respond, suite, suites_for_nf,
)
from .dtls import LossyLink, dtls_handshake
from .messages import DecodeError, MsgType

__all__ = [
    "AES_128_GCM_SHA256", "AES_256_GCM_SHA384", "CHACHA20_POLY1305_SHA256", "SUITES",
    "CertificateVerifyFailed", "ChainInvalid", "CipherMismatch", "CipherSuite", "ClientCertMissing",
    "DecodeError", "FinishedMismatch", "HandshakeConfig", "HandshakeError", "MsgType", "PeerAlert",
    "ReplayError", "Session", "LossyLink",
    "client_finish", "client_hello", "dtls_handshake", "handshake_in_memory", "run_client",
    "run_server", "server_complete", "server_respond", "suite", "suites_for_nf",
]
