"""TOML-scripted SBA scenarios.

A scenario file holds a ``[deployment]`` table, one ``[[nf]]`` table per
network function and an ordered ``[[step]]`` script::

    [deployment]
    now = 1767225600
    transport = "loopback"   # or "socket"
    scp = false              # loopback only

    [[nf]]
    name = "udm1"
    type = "UDM"
    services = ["nudm-sdm"]

    [[step]]
    action = "call"
    nf = "amf1"
    producer = "udm1"
    service = "nudm-sdm"
    token = "t1"
    expect = "200"

Each step yields one event dict. A step with ``expect`` passes when its
outcome equals the expectation.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..crypto.entropy import EntropySource
from .harness import Deployment, dumps_event
from .nf import SbaError


class ScenarioError(SbaError):
    code = "scenario-invalid"


@dataclass
class ScenarioResult:
    events: list[dict] = field(default_factory=list)
    audit_failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.audit_failures and all(e.get("ok", True) for e in self.events)

    def jsonl(self) -> str:
        return "".join(dumps_event(e) + "\n" for e in self.events)


def load_scenario(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    if not isinstance(doc.get("step"), list):
        raise ScenarioError(f"{path}: no [[step]] entries")
    return doc


def _step_register(dep: Deployment, step: dict) -> dict:
    return {"outcome": dep.register(step["nf"], step.get("cert", "valid"))}


def _step_get_token(dep: Deployment, step: dict) -> dict:
    outcome, _ = dep.get_token(step["nf"], step["target"], step["scope"], step.get("save"),
                               step.get("cert", "valid"))
    return {"outcome": outcome}


def _step_call(dep: Deployment, step: dict) -> dict:
    token = step.get("token")
    if token == "none":
        token = None
    status, payload = dep.call(step["nf"], step["producer"], step["service"], token,
                               step.get("payload"), step.get("cert", "valid"))
    out = {"outcome": status}
    if payload is not None:
        out["payload"] = payload
    return out


def _step_advance_clock(dep: Deployment, step: dict) -> dict:
    return {"outcome": "ok", "now": dep.advance_clock(step["seconds"])}


def _step_revoke(dep: Deployment, step: dict) -> dict:
    return {"outcome": "ok", "jti": dep.revoke(step["token"])}


def _step_rotate_key(dep: Deployment, step: dict) -> dict:
    return {"outcome": "ok", "kid": dep.rotate_key(step.get("retire_old", False))}


def _step_refresh(dep: Deployment, step: dict) -> dict:
    return {"outcome": "ok", "kids": dep.refresh(step["nf"])}


def _step_audit(dep: Deployment, step: dict) -> dict:
    failures = dep.audit()
    return {"outcome": "ok" if not failures else "audit-failed", "failures": failures}


ACTIONS: dict[str, Callable[[Deployment, dict], dict]] = {
    "register": _step_register,
    "get_token": _step_get_token,
    "call": _step_call,
    "advance_clock": _step_advance_clock,
    "revoke": _step_revoke,
    "rotate_key": _step_rotate_key,
    "refresh": _step_refresh,
    "audit": _step_audit,
}


def iter_scenario(doc: dict, rng: EntropySource | None = None,
                  transport: str | None = None) -> Iterator[dict]:
    """Run ``doc`` step by step, yielding events; the last event is the teardown audit."""
    cfg = doc.get("deployment", {})
    transport = transport or cfg.get("transport", "loopback")
    if transport not in ("loopback", "socket"):
        raise ScenarioError(f"unknown transport {transport!r}")
    dep = Deployment(int(cfg.get("now", 1767225600)), rng, sockets=transport == "socket",
                     relay=bool(cfg.get("scp", False)) and transport == "loopback",
                     token_lifetime=int(cfg.get("token_lifetime", 900)))
    try:
        for nf in doc.get("nf", []):
            dep.add_nf(nf["name"], nf["type"], nf.get("services", ()))
        for i, step in enumerate(doc["step"]):
            action = step.get("action")
            if action not in ACTIONS:
                raise ScenarioError(f"step {i}: unknown action {action!r}")
            try:
                event = ACTIONS[action](dep, step)
            except KeyError as exc:
                raise ScenarioError(f"step {i} ({action}): missing field {exc}") from None
            event = {"step": i, "action": action, "t": dep.clock(),
                     **{k: step[k] for k in ("nf", "producer", "service", "target") if k in step},
                     **event}
            if "expect" in step:
                event["expect"] = str(step["expect"])
                event["ok"] = event["outcome"] == event["expect"]
            yield event
    finally:
        failures = dep.close()
    yield {"step": "teardown", "action": "audit", "outcome": "ok" if not failures else "audit-failed",
           "issued": len(dep.nrf.issued), "failures": failures, "handled": dep.handled(),
           "ok": not failures}


def run_scenario(path_or_doc: str | Path | dict, rng: EntropySource | None = None,
                 transport: str | None = None) -> ScenarioResult:
    doc = path_or_doc if isinstance(path_or_doc, dict) else load_scenario(path_or_doc)
    result = ScenarioResult()
    for event in iter_scenario(doc, rng, transport):
        result.events.append(event)
    result.audit_failures = result.events[-1]["failures"]
    return result
