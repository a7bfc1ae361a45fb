import json

import pytest

from qore.bench import (
    BenchReport, BenchRow, UnknownAlgorithm, compare_report, load_reference, measure, repeatability,
    run_suite, select_cases,
)

ROW_FIELDS = {"algorithm", "operation", "ops_per_sec", "iterations", "wall_seconds", "median_ops_per_sec",
              "batch_ops_per_sec", "threads", "cpu_model"}


def _row(alg, op, rate):
    return BenchRow(alg, op, rate, int(rate), 1.0, rate, (rate,) * 5)


def test_zero_duration_still_measures():
    calls = []
    batches = measure(lambda: calls.append(1), 0.0, warmup=0.0)
    assert len(batches) == 5 and all(n >= 1 for n, _ in batches)
    assert len(calls) == sum(n for n, _ in batches)


def test_selection_order_and_errors():
    names = [(a, o) for a, o, _ in select_cases("ML-KEM-768")]
    assert names == [("ML-KEM-768", "keygen"), ("ML-KEM-768", "encaps"), ("ML-KEM-768", "decaps")]
    assert [(a, o) for a, o, _ in select_cases("ML-DSA-44:verify")] == [("ML-DSA-44", "verify")]
    kem = select_cases("kem")
    assert len(select_cases("kem,ML-KEM-512")) == len(kem)
    assert [c[:2] for c in select_cases("kem")] == [c[:2] for c in kem]
    ops = {o for _, o, _ in select_cases("protocol")}
    assert ops == {"handshake", "suci_conceal", "suci_deconceal", "token_issue", "token_verify"}
    with pytest.raises(UnknownAlgorithm):
        select_cases("RSA-2048")
    with pytest.raises(UnknownAlgorithm):
        select_cases("ML-KEM-768:sign")


def test_report_schema_and_roundtrip():
    report = run_suite("ML-KEM-768,X25519:keygen", 0.05, warmup=0.0)
    assert [(r.algorithm, r.operation) for r in report.rows] == [
        ("ML-KEM-768", "keygen"), ("ML-KEM-768", "encaps"), ("ML-KEM-768", "decaps"), ("X25519", "keygen")]
    doc = json.loads(report.to_json())
    for row in doc["rows"]:
        assert set(row) == ROW_FIELDS
        assert row["ops_per_sec"] == pytest.approx(row["iterations"] / row["wall_seconds"])
        assert len(row["batch_ops_per_sec"]) == 5
    assert BenchReport.from_dict(doc) == report
    lines = report.jsonl().splitlines()
    assert len(lines) == 4 and json.loads(lines[0])["cpu_model"] == report.cpu_model


def test_threaded_rows_aggregate():
    row = run_suite("Ed25519:verify", 0.05, warmup=0.0, threads=2).rows[0]
    assert row.threads == 2 and row.iterations >= 10


def test_orderings_decide_pass_fail():
    good = BenchReport([_row("ML-DSA-44", "sign", 100), _row("ML-DSA-44", "verify", 400),
                        _row("ML-KEM-768", "keygen", 1000), _row("ML-KEM-768", "encaps", 900),
                        _row("ML-KEM-768", "decaps", 1200)])
    result = {o.name: o.passed for o in compare_report(good).orderings}
    assert result["ml-dsa-verify-faster-than-sign[ML-DSA-44]"] is True
    assert result["ml-dsa-verify-faster-than-sign[ML-DSA-65]"] is None
    assert result["ml-kem-768-ops-near-parity"] is True
    assert compare_report(good).hard_failures == []

    bad = BenchReport([_row("ML-DSA-44", "sign", 100), _row("ML-DSA-44", "verify", 140),
                       _row("ML-KEM-768", "keygen", 100), _row("ML-KEM-768", "encaps", 900),
                       _row("ML-KEM-768", "decaps", 1200)])
    failed = {o.name for o in compare_report(bad).hard_failures}
    assert failed == {"ml-dsa-verify-faster-than-sign[ML-DSA-44]", "ml-kem-768-ops-near-parity"}


def test_ratios_against_reference_and_other_report():
    ref = load_reference()
    report = BenchReport([_row("ML-KEM-768", "keygen", 236076.3 / 2), _row("FrodoKEM-976-AES", "keygen", 1.0)])
    ratios = compare_report(report, ref).ratios
    assert ratios == [{"algorithm": "ML-KEM-768", "operation": "keygen", "ratio": pytest.approx(0.5)}]
    other = BenchReport([_row("ML-KEM-768", "keygen", 236076.3)])
    assert compare_report(report, other).ratios[0]["ratio"] == pytest.approx(0.5)


def test_repeatability_flags_large_spread():
    a = BenchReport([_row("X25519", "keygen", 1000), _row("Ed25519", "sign", 1000)])
    b = BenchReport([_row("X25519", "keygen", 1100), _row("Ed25519", "sign", 2000)])
    flagged = repeatability(a, b)
    assert [(f["algorithm"], f["operation"]) for f in flagged] == [("Ed25519", "sign")]
