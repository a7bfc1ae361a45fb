"""Golden fixtures: committed expected bytes re-derived from the live code.

File format: ``#`` header lines, then ``field = hex`` lines. Blank lines
separate stanzas when a file holds more than one case. The header must carry
a ``# source:`` line saying where the expected bytes came from.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Callable

from .crypto.entropy import SeededDrbg
from .crypto.kat import manifest, run_kat, verify_checksums
from .crypto.kdf import hkdf_expand, hkdf_extract
from .suci import (
    HomeNetworkKeyStore, conceal_supi, deconceal_suci, decode_suci, encode_suci, provision_home_network,
)

FIXTURE_PACKAGE = "qore.data.fixtures"


class FixtureFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GoldenFixture:
    name: str
    header: tuple[str, ...]
    stanzas: tuple[dict[str, bytes], ...]

    @property
    def source(self) -> str:
        for line in self.header:
            if line.startswith("source:"):
                return line.split(":", 1)[1].strip()
        return ""


def parse_fixture(name: str, text: str) -> GoldenFixture:
    header: list[str] = []
    stanzas: list[dict[str, bytes]] = []
    current: dict[str, bytes] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("#"):
            if stanzas or current:
                raise FixtureFormatError(f"{name}:{lineno}: comment after the header")
            header.append(line.lstrip("#").strip())
        elif not line:
            if current:
                stanzas.append(current)
                current = {}
        else:
            field, sep, value = line.partition("=")
            if not sep:
                raise FixtureFormatError(f"{name}:{lineno}: expected 'field = hex'")
            field = field.strip()
            if field in current:
                raise FixtureFormatError(f"{name}:{lineno}: duplicate field {field}")
            try:
                current[field] = bytes.fromhex(value.strip())
            except ValueError:
                raise FixtureFormatError(f"{name}:{lineno}: value is not hex") from None
    if current:
        stanzas.append(current)
    if not any(h.startswith("source:") for h in header):
        raise FixtureFormatError(f"{name}: header has no 'source:' line")
    return GoldenFixture(name, tuple(header), tuple(stanzas))


def format_fixture(header: list[str], stanzas: list[dict[str, bytes]]) -> str:
    lines = [f"# {h}" for h in header]
    for i, stanza in enumerate(stanzas):
        if i:
            lines.append("")
        lines.extend(f"{k} = {v.hex()}" for k, v in stanza.items())
    return "\n".join(lines) + "\n"


def load_fixture(name: str) -> GoldenFixture:
    text = resources.files(FIXTURE_PACKAGE).joinpath(name).read_text()
    return parse_fixture(name, text)


def list_fixtures() -> list[str]:
    return sorted(p.name for p in resources.files(FIXTURE_PACKAGE).iterdir() if p.name.endswith(".txt"))


# checks: each returns a list of failure messages (empty when the fixture holds)

def check_hkdf(fx: GoldenFixture) -> list[str]:
    problems = []
    for i, s in enumerate(fx.stanzas):
        prk = hkdf_extract(s["salt"], s["ikm"])
        if prk != s["prk"]:
            problems.append(f"case {i}: PRK differs")
        if hkdf_expand(prk, s["info"], int.from_bytes(s["length"], "big")) != s["okm"]:
            problems.append(f"case {i}: OKM differs")
    return problems


def suci_case(seed: bytes, supi: str, routing_indicator: str, key_id: int, scheme: str) -> tuple[bytes, object]:
    """Re-create a concealment from ``seed``: provision the home network key, then conceal."""
    rng = SeededDrbg(seed)
    if scheme == "hybrid":
        record = provision_home_network(rng=rng, key_id=key_id, hybrid=True)
    else:
        record = provision_home_network(scheme, rng, key_id)
    env = conceal_supi(supi, record.public_view(), routing_indicator, rng)
    return encode_suci(env), record


def check_suci(fx: GoldenFixture) -> list[str]:
    problems = []
    for i, s in enumerate(fx.stanzas):
        supi = s["supi"].decode("ascii")
        wire, record = suci_case(s["seed"], supi, s["routing_indicator"].decode("ascii"),
                                 s["key_id"][0], s["scheme"].decode("ascii"))
        if wire != s["suci"]:
            problems.append(f"case {i}: re-encoded SUCI differs")
        recovered = deconceal_suci(decode_suci(s["suci"]), HomeNetworkKeyStore({record.key_id: record}))
        if str(recovered) != supi:
            problems.append(f"case {i}: deconcealed {recovered} instead of {supi}")
        if encode_suci(decode_suci(s["suci"])) != s["suci"]:
            problems.append(f"case {i}: decode/encode is not the identity")
    return problems


def check_kat_manifest(fx: GoldenFixture) -> list[str]:
    problems = []
    expected = {k: v.hex() for s in fx.stanzas for k, v in s.items() if k.endswith(".rsp")}
    actual = manifest()
    for name, digest in expected.items():
        if actual.get(name) != digest:
            problems.append(f"{name}: checksum differs from the manifest")
    problems.extend(f"{name}: file contents do not match SHA256SUMS" for name, ok in verify_checksums() if not ok)
    for s in fx.stanzas:
        if "vectors" not in s:
            continue
        for alg in s["algorithms"].decode("ascii").split(","):
            results = run_kat(alg, int.from_bytes(s["vectors"], "big"))
            bad = [r.count for r in results if not r.ok]
            if bad or not results:
                problems.append(f"{alg}: vectors {bad or 'none loaded'} failed")
    return problems


CHECKS: dict[str, Callable[[GoldenFixture], list[str]]] = {
    "hkdf_sha256_case1.txt": check_hkdf,
    "suci_envelopes.txt": check_suci,
    "kat_manifest.txt": check_kat_manifest,
}


@dataclass(frozen=True)
class FixtureResult:
    name: str
    ok: bool
    problems: tuple[str, ...]


def verify_fixtures() -> list[FixtureResult]:
    """Re-run every committed fixture through the live code."""
    results = []
    names = list_fixtures()
    for name in names:
        check = CHECKS.get(name)
        if check is None:
            results.append(FixtureResult(name, False, ("no check registered",)))
            continue
        try:
            problems = check(load_fixture(name))
        except Exception as exc:  # a fixture that crashes the check is a failed fixture
            problems = [f"{type(exc).__name__}: {exc}"]
        results.append(FixtureResult(name, not problems, tuple(problems)))
    for name in sorted(set(CHECKS) - set(names)):
        results.append(FixtureResult(name, False, ("fixture file missing",)))
    return results
