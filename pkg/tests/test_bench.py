import json

import pytest

from sigdoor.bench import BenchReport, extraction_times, run_bench, run_suite, scheme_extraction_times
from sigdoor.exceptions import UnsupportedConfig


def test_ed25519_small_report():
    row = run_bench("ed25519", (32, 32), "stub", iterations=10)
    assert row.payload_bits == 8 * (13 + 64)
    assert row.composed.median >= row.classify.median
    report = BenchReport([row])
    data = json.loads(report.to_json())
    assert data["rows"][0]["scheme"] == "ed25519"
    assert "stub" in report.table()


def test_dilithium_small_unsupported():
    with pytest.raises(UnsupportedConfig):
        run_bench("dilithium2", (32, 32), iterations=10)


def test_too_few_iterations():
    with pytest.raises(UnsupportedConfig):
        run_bench("ed25519", 32, iterations=3)


def test_toy_classifier_bench():
    row = run_bench("ed25519", (32, 32), "toy", iterations=10)
    assert row.classifier == "toy"


def test_suite_skips_unsupported():
    report = run_suite([("ed25519", (32, 32), "stub"), ("dilithium2", (32, 32), "stub")], iterations=10)
    assert [r.scheme for r in report.rows] == ["ed25519"]


def test_zero_payload_control_is_cheap():
    t = extraction_times(payload_bits=(0,), iterations=10)
    row = run_bench("ed25519", (224, 224), "stub", iterations=10)
    assert t[0] < row.composed.median


def test_scheme_extraction_times_rejects_oversized():
    with pytest.raises(UnsupportedConfig):
        scheme_extraction_times(("dilithium2",), (32, 32), iterations=10, inner=1)


def test_scheme_extraction_times_keys():
    t = scheme_extraction_times(("ed25519",), (32, 32), iterations=10, inner=2)
    assert set(t) == {"ed25519"} and t["ed25519"] > 0
