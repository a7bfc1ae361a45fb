"""Throughput benchmarks.

Every row warms up, then times five batches on the monotonic clock. A row
reports the total iterations and wall time over those batches together with
the median batch rate, which is what the ordering checks compare.
"""

from __future__ import annotations

import json
import os
import platform
import statistics
import threading
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Callable, Iterable

from .crypto.ecdh import dh_agree, dh_keygen
from .crypto.entropy import EntropySource, SystemEntropy
from .crypto.kem import kem_decaps, kem_encaps, kem_keygen
from .crypto.params import KEM_PARAMS, SIG_PARAMS
from .crypto.sig import ed25519_keygen, ed25519_sign, ed25519_verify, sig_keygen, sig_sign, sig_verify
from .errors import QoreError

BATCHES = 5
WARMUP_SECONDS = 0.5
DEFAULT_ROW_SECONDS = 2.0
MIN_ITERATIONS = 1000

SUITES = ("kem", "sig", "protocol")


class UnknownAlgorithm(QoreError):
    code = "unknown-algorithm"


@dataclass(frozen=True)
class BenchRow:
    algorithm: str
    operation: str
    ops_per_sec: float
    iterations: int
    wall_seconds: float
    median_ops_per_sec: float
    batch_ops_per_sec: tuple[float, ...]
    threads: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["batch_ops_per_sec"] = list(self.batch_ops_per_sec)
        return d


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    cpu_model: str = ""
    python: str = ""
    row_seconds: float = DEFAULT_ROW_SECONDS

    def row(self, algorithm: str, operation: str) -> BenchRow | None:
        for r in self.rows:
            if r.algorithm == algorithm and r.operation == operation:
                return r
        return None

    def to_dict(self) -> dict:
        return {"cpu_model": self.cpu_model, "python": self.python, "row_seconds": self.row_seconds,
                "rows": [dict(r.to_dict(), cpu_model=self.cpu_model) for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def jsonl(self) -> str:
        return "".join(json.dumps(dict(r.to_dict(), cpu_model=self.cpu_model), sort_keys=True) + "\n"
                       for r in self.rows)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchReport":
        rows = []
        for r in d["rows"]:
            r = {k: v for k, v in r.items() if k != "cpu_model"}
            r["batch_ops_per_sec"] = tuple(r["batch_ops_per_sec"])
            rows.append(BenchRow(**r))
        return cls(rows, d.get("cpu_model", ""), d.get("python", ""), d.get("row_seconds", DEFAULT_ROW_SECONDS))


def cpu_model() -> str:
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


# A case is (algorithm, operation, setup). setup() returns the zero-argument
# callable to time; it runs once per thread so threads share no state.
Case = tuple[str, str, Callable[[], Callable[[], object]]]


def _kem_cases(name: str, rng: EntropySource) -> list[Case]:
    def keygen():
        return lambda: kem_keygen(name, rng)

    def encaps():
        ek, _ = kem_keygen(name, rng)
        return lambda: kem_encaps(name, ek, rng)

    def decaps():
        ek, dk = kem_keygen(name, rng)
        ct, _ = kem_encaps(name, ek, rng)
        return lambda: kem_decaps(name, dk, ct)

    return [(name, "keygen", keygen), (name, "encaps", encaps), (name, "decaps", decaps)]


def _x25519_cases(rng: EntropySource) -> list[Case]:
    # encaps: fresh ephemeral plus one agreement; decaps: one agreement
    def encaps():
        _, peer = dh_keygen(rng)

        def run():
            sk, _ = dh_keygen(rng)
            return dh_agree(sk, peer)
        return run

    def decaps():
        sk, _ = dh_keygen(rng)
        _, peer = dh_keygen(rng)
        return lambda: dh_agree(sk, peer)

    return [("X25519", "keygen", lambda: (lambda: dh_keygen(rng))),
            ("X25519", "encaps", encaps), ("X25519", "decaps", decaps)]


def _sig_cases(name: str, rng: EntropySource) -> list[Case]:
    msg = b"\x00" * 64

    def sign():
        _, sk = sig_keygen(name, rng)
        return lambda: sig_sign(name, sk, msg, b"", rng)

    def verify():
        vk, sk = sig_keygen(name, rng)
        sig = sig_sign(name, sk, msg, b"", rng)
        return lambda: sig_verify(name, vk, msg, sig, b"")

    return [(name, "keygen", lambda: (lambda: sig_keygen(name, rng))),
            (name, "sign", sign), (name, "verify", verify)]


def _ed25519_cases(rng: EntropySource) -> list[Case]:
    msg = b"\x00" * 64

    def sign():
        _, sk = ed25519_keygen(rng)
        return lambda: ed25519_sign(sk, msg)

    def verify():
        pk, sk = ed25519_keygen(rng)
        sig = ed25519_sign(sk, msg)
        return lambda: ed25519_verify(pk, msg, sig)

    return [("Ed25519", "keygen", lambda: (lambda: ed25519_keygen(rng))),
            ("Ed25519", "sign", sign), ("Ed25519", "verify", verify)]


def _protocol_cases(rng: EntropySource) -> list[Case]:
    from .handshake.core import HandshakeConfig, handshake_in_memory
    from .sba.harness import Pki
    from .suci import HomeNetworkKeyStore, conceal_supi, deconceal_suci, provision_home_network
    from .tokens import KeySetDocument, generate_signing_key, issue_token, make_claims, validate_token

    now = int(time.time())

    def handshake():
        pki = Pki.create("Bench", now, rng)
        server = pki.issue_nf("server", "UDM", "00000000-0000-4000-8000-000000000001", now, rng)
        client = pki.issue_nf("client", "AMF", "00000000-0000-4000-8000-000000000002", now, rng)
        trust = pki.trust()
        scfg = HandshakeConfig("server", trust, server.chain, server.keys, require_client_cert=True,
                               clock=lambda: now, rng=rng)
        ccfg = HandshakeConfig("client", trust, client.chain, client.keys, clock=lambda: now, rng=rng)
        return lambda: handshake_in_memory(ccfg, scfg)

    supi = "imsi-001010123456789"

    def conceal():
        record = provision_home_network("ML-KEM-768", rng)
        return lambda: conceal_supi(supi, record.public_view(), rng=rng)

    def deconceal():
        record = provision_home_network("ML-KEM-768", rng)
        store = HomeNetworkKeyStore({record.key_id: record})
        env = conceal_supi(supi, record.public_view(), rng=rng)
        return lambda: deconceal_suci(env, store)

    def _claims():
        return make_claims(iss="nrf", sub="amf-1", aud="UDM", scope=["nudm-sdm"], nf_type="AMF",
                           now=now, rng=rng)

    def token_issue():
        key = generate_signing_key("k1", "ML-DSA-65", rng)
        claims = _claims()
        return lambda: issue_token(key, None, claims, now, rng=rng)

    def token_verify():
        key = generate_signing_key("k1", "ML-DSA-65", rng)
        keyset = KeySetDocument((key.entry(),))
        token = issue_token(key, None, _claims(), now, rng=rng)
        return lambda: validate_token(token, keyset, "UDM", now)

    return [("X25519MLKEM768+ML-DSA-65", "handshake", handshake),
            ("ML-KEM-768", "suci_conceal", conceal), ("ML-KEM-768", "suci_deconceal", deconceal),
            ("ML-DSA-65", "token_issue", token_issue), ("ML-DSA-65", "token_verify", token_verify)]


def all_cases(rng: EntropySource | None = None) -> dict[str, list[Case]]:
    rng = rng or SystemEntropy()
    kem = [c for name in KEM_PARAMS for c in _kem_cases(name, rng)] + _x25519_cases(rng)
    sig = [c for name in SIG_PARAMS for c in _sig_cases(name, rng)] + _ed25519_cases(rng)
    return {"kem": kem, "sig": sig, "protocol": _protocol_cases(rng)}


def select_cases(selection: Iterable[str] | str, rng: EntropySource | None = None) -> list[Case]:
    """``selection`` holds suite names, algorithm names or ``algorithm:operation`` pairs.

    A bare algorithm name selects its primitive rows only; protocol rows need
    the ``protocol`` suite or an explicit operation.
    """
    if isinstance(selection, str):
        selection = [s for s in selection.split(",") if s.strip()]
    by_suite = all_cases(rng)
    every = [c for s in SUITES for c in by_suite[s]]
    chosen: list[Case] = []
    for item in (s.strip() for s in selection):
        if item in by_suite:
            matched = by_suite[item]
        else:
            alg, _, op = item.partition(":")
            pool = every if op else by_suite["kem"] + by_suite["sig"]
            matched = [c for c in pool if c[0] == alg and (not op or c[1] == op)]
            if not matched:
                raise UnknownAlgorithm(f"no benchmark named {item!r}")
        chosen.extend(c for c in matched if c not in chosen)
    return chosen


def _time_batch(fn: Callable[[], object], seconds: float) -> tuple[int, float]:
    n = 0
    start = time.perf_counter()
    deadline = start + seconds
    while True:
        fn()
        n += 1
        now = time.perf_counter()
        if now >= deadline:
            return n, now - start


def measure(fn: Callable[[], object], row_seconds: float, warmup: float = WARMUP_SECONDS,
            batches: int = BATCHES) -> list[tuple[int, float]]:
    """Warm up, then time ``batches`` batches of ``row_seconds / batches`` each.

    A batch always runs at least one iteration, so a zero duration still measures something.
    """
    if warmup > 0:
        _time_batch(fn, warmup)
    return [_time_batch(fn, max(row_seconds, 0.0) / batches) for _ in range(batches)]


def _run_case(case: Case, row_seconds: float, warmup: float, threads: int) -> BenchRow:
    algorithm, operation, setup = case
    if threads <= 1:
        batches = measure(setup(), row_seconds, warmup)
    else:
        fns = [setup() for _ in range(threads)]
        results: list[list[tuple[int, float]]] = [[] for _ in range(threads)]
        barrier = threading.Barrier(threads)

        def worker(i: int) -> None:
            barrier.wait()
            results[i] = measure(fns[i], row_seconds, warmup)

        pool = [threading.Thread(target=worker, args=(i,)) for i in range(threads)]
        for t in pool:
            t.start()
        for t in pool:
            t.join()
        # aggregate per batch index: summed iterations over the slowest thread's wall time
        batches = [(sum(r[b][0] for r in results), max(r[b][1] for r in results)) for b in range(BATCHES)]
    rates = [n / wall for n, wall in batches]
    iterations = sum(n for n, _ in batches)
    wall = sum(w for _, w in batches)
    return BenchRow(algorithm, operation, iterations / wall, iterations, wall,
                    statistics.median(rates), tuple(rates), threads)


def run_suite(selection: Iterable[str] | str = SUITES, row_seconds: float = DEFAULT_ROW_SECONDS,
              rng: EntropySource | None = None, *, warmup: float = WARMUP_SECONDS, threads: int = 1,
              progress: Callable[[BenchRow], None] | None = None) -> BenchReport:
    report = BenchReport(cpu_model=cpu_model(), python=platform.python_version(), row_seconds=row_seconds)
    for case in select_cases(selection, rng):
        row = _run_case(case, row_seconds, warmup, threads)
        report.rows.append(row)
        if progress:
            progress(row)
    return report


def load_reference() -> dict:
    return json.loads(resources.files("qore.data").joinpath("reference_throughput.json").read_text())


@dataclass(frozen=True)
class OrderingResult:
    name: str
    hard: bool
    passed: bool | None
    detail: str


@dataclass
class Comparison:
    ratios: list[dict]
    orderings: list[OrderingResult]

    @property
    def hard_failures(self) -> list[OrderingResult]:
        return [o for o in self.orderings if o.hard and o.passed is False]

    def to_dict(self) -> dict:
        return {"ratios": self.ratios, "orderings": [asdict(o) for o in self.orderings]}


def _rate(report: BenchReport, alg: str, op: str) -> float | None:
    row = report.row(alg, op)
    return row.median_ops_per_sec if row else None


def _check(report: BenchReport, spec: dict) -> list[OrderingResult]:
    kind, name, hard = spec["kind"], spec["name"], spec.get("hard", False)
    if kind == "ratio_above":
        out = []
        for alg in spec["algorithms"]:
            fast, slow = _rate(report, alg, spec["fast"]), _rate(report, alg, spec["slow"])
            if fast is None or slow is None:
                out.append(OrderingResult(f"{name}[{alg}]", hard, None, "rows missing"))
                continue
            ratio = fast / slow
            out.append(OrderingResult(f"{name}[{alg}]", hard, ratio > spec["min_ratio"],
                                      f"{spec['fast']}/{spec['slow']} = {ratio:.2f} (need > {spec['min_ratio']})"))
        return out
    if kind == "within_factor":
        rates = [_rate(report, spec["algorithm"], op) for op in spec["operations"]]
        if any(r is None for r in rates):
            return [OrderingResult(name, hard, None, "rows missing")]
        spread = max(rates) / min(rates)
        return [OrderingResult(name, hard, spread <= spec["factor"],
                               f"max/min = {spread:.2f} (need <= {spec['factor']})")]
    if kind == "greater":
        left, right = _rate(report, *spec["left"]), _rate(report, *spec["right"])
        if left is None or right is None:
            return [OrderingResult(name, hard, None, "rows missing")]
        return [OrderingResult(name, hard, left > right, f"{left:.0f} vs {right:.0f} ops/s")]
    raise ValueError(f"unknown ordering kind {kind!r}")


def compare_report(report: BenchReport, reference: dict | BenchReport | None = None) -> Comparison:
    """Ratios of measured median rates to the reference, plus the declared ordering checks.

    Absolute numbers never decide anything; only the orderings carry pass/fail.
    ``reference`` may be another report, in which case every ratio is measured/other.
    """
    reference = load_reference() if reference is None else reference
    ratios = []
    if isinstance(reference, BenchReport):
        for row in report.rows:
            other = reference.row(row.algorithm, row.operation)
            if other:
                ratios.append({"algorithm": row.algorithm, "operation": row.operation,
                               "ratio": row.median_ops_per_sec / other.median_ops_per_sec})
        orderings_spec = load_reference()["orderings"]
    else:
        for ref in reference["rows"]:
            if not ref.get("measured_here"):
                continue
            for op in ("keygen", "encaps", "decaps", "sign", "verify"):
                row = report.row(ref["algorithm"], op)
                if row and op in ref:
                    ratios.append({"algorithm": ref["algorithm"], "operation": op,
                                   "ratio": row.median_ops_per_sec / ref[op]})
        orderings_spec = reference.get("orderings", [])
    orderings = [r for spec in orderings_spec for r in _check(report, spec)]
    return Comparison(ratios, orderings)


def repeatability(a: BenchReport, b: BenchReport, tolerance: float = 0.25) -> list[dict]:
    """Rows whose median rates differ by more than ``tolerance``. Advisory only."""
    flagged = []
    for row in a.rows:
        other = b.row(row.algorithm, row.operation)
        if other is None:
            continue
        hi = max(row.median_ops_per_sec, other.median_ops_per_sec)
        lo = min(row.median_ops_per_sec, other.median_ops_per_sec)
        if hi / lo - 1 > tolerance:
            flagged.append({"algorithm": row.algorithm, "operation": row.operation, "spread": hi / lo - 1})
    return flagged


def default_threads() -> int:
    return os.cpu_count() or 1


__all__ = [
    "BenchReport", "BenchRow", "Comparison", "OrderingResult", "SUITES", "UnknownAlgorithm",
    "all_cases", "compare_report", "load_reference", "measure", "repeatability", "run_suite",
    "select_cases",
]
