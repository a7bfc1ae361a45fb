"""Simulated service-based core: NRF, producers and consumers over mutual-certificate channels."""

from .harness import Deployment, NetworkFunction, Pki
from .nf import (
    WIRE_CODES, Clock, Consumer, Network, NfIdentity, NfProfile, Nrf, Producer, SbaError, ServiceError,
)
from .scenario import ScenarioError, ScenarioResult, iter_scenario, load_scenario, run_scenario
from .transport import ScpRelay, SocketPipe, TransportError, pipe_pair

__all__ = [
    "Clock", "Consumer", "Deployment", "Network", "NetworkFunction", "NfIdentity", "NfProfile", "Nrf",
    "Pki", "Producer", "SbaError", "ScenarioError", "ScenarioResult", "ScpRelay", "ServiceError",
    "SocketPipe", "TransportError", "WIRE_CODES", "iter_scenario", "load_scenario", "pipe_pair",
    "run_scenario",
]
