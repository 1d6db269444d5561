import json
import math

import pytest

from battery import BatteryConfig, BatteryReport, TestResult, run_battery
from qkd_sim import PHASES, ChannelConfig, ReconConfig, run_pipeline
from report import (
    ATTRITION_HEADER, BATTERY_HEADER, AttritionRow, ReportDocument, build_report, emit_report,
    phase_order_ok, read_csv_report, render_csv, render_json,
)

from conftest import random_bits


@pytest.fixture(scope="module")
def small_doc() -> ReportDocument:
    pipeline = run_pipeline(2, 4000, ChannelConfig(flip_prob=0.03), ReconConfig(), master_seed=7)
    cfg = BatteryConfig(tests=["frequency", "runs", "serial", "rank"])
    batteries = [
        run_battery(r.alice_key, cfg, {"source": "pipeline", "round": r.round_index, "series": 1})
        for r in pipeline.rounds
    ]
    return build_report({"photons": 4000, "rounds": 2}, [pipeline], batteries)


def test_empty_report_is_valid_json():
    data = json.loads(render_json(build_report({})))
    assert data["attrition"] == []
    assert data["battery"] == []
    assert data["rounds"] == []
    assert data["tool"] == "qkdrand"


def test_empty_report_csv_has_both_headers():
    assert render_csv(ReportDocument()) == "round,phase,bits\n\nround,test,pvalue_index,pvalue,verdict\n"


def test_attrition_row_serialization():
    doc = ReportDocument(attrition=[AttritionRow(round=1, phase="after_pa", bits=41000)])
    assert render_csv(doc).splitlines()[1] == "1,after_pa,41000"


def test_report_has_every_phase_per_round(small_doc):
    assert len(small_doc.attrition) == 2 * len(PHASES)
    assert [row.phase for row in small_doc.attrition[: len(PHASES)]] == list(PHASES)
    assert phase_order_ok(small_doc)


def test_phase_order_violation_detected():
    doc = ReportDocument(attrition=[
        AttritionRow(round=1, phase="pumped", bits=100),
        AttritionRow(round=1, phase="received", bits=120),
    ])
    assert not phase_order_ok(doc)


def test_rendering_is_deterministic(small_doc):
    assert render_json(small_doc) == render_json(small_doc.model_copy(deep=True))
    assert render_csv(small_doc) == render_csv(small_doc.model_copy(deep=True))


def test_json_and_csv_agree(small_doc, tmp_path):
    path = tmp_path / "report.csv"
    emit_report(small_doc, "csv", path)
    attrition, battery = read_csv_report(path)
    data = json.loads(render_json(small_doc))

    assert attrition == [(row["round"], row["phase"], row["bits"]) for row in data["attrition"]]
    expected = []
    for entry in data["battery"]:
        if not entry["p_values"]:
            expected.append((entry["round"], entry["test"], None, None, entry["verdict"]))
        for i, p in enumerate(entry["p_values"]):
            expected.append((entry["round"], entry["test"], i, p, entry["verdict"]))
    assert len(battery) == len(expected)
    for got, want in zip(battery, expected):
        assert got[:3] == want[:3] and got[4] == want[4]
        if want[3] is None:
            assert got[3] is None
        else:
            assert got[3] == pytest.approx(want[3], abs=1e-6)


def test_non_finite_values_become_null():
    result = TestResult("frequency", {}, {"S_obs": math.nan, "z": math.inf}, [0.5])
    doc = build_report({}, batteries=[BatteryReport([result], n=100)])
    entry = json.loads(render_json(doc))["battery"][0]
    assert entry["statistics"] == {"S_obs": None, "z": None}
    assert entry["p_values"] == [0.5]


def test_floats_rounded_to_six_decimals():
    result = TestResult("frequency", {}, {"S_obs": 1.23456789}, [0.123456789])
    doc = build_report({}, batteries=[BatteryReport([result], n=100)])
    entry = json.loads(render_json(doc))["battery"][0]
    assert entry["statistics"]["S_obs"] == 1.234568
    assert entry["p_values"] == [0.123457]
    assert "0.123457" in render_csv(doc)


def test_json_floats_use_shortest_form_and_csv_fixed_places():
    result = TestResult("frequency", {}, {}, [0.5, 1.2e-05])
    doc = build_report({}, batteries=[BatteryReport([result], n=100)])
    text = render_json(doc)
    assert json.loads(text)["battery"][0]["p_values"] == [0.5, 1.2e-05]
    assert "1.2e-05" in text and "0.500000" not in text
    battery_csv = render_csv(doc)
    assert "0.500000" in battery_csv and "0.000012" in battery_csv


def test_skipped_entry_has_empty_p_fields():
    report = run_battery(random_bits(100, 1), BatteryConfig(tests=["universal"]), {"round": 0})
    csv_text = render_csv(build_report({}, batteries=[report]))
    assert csv_text.splitlines()[-1] == "0,universal,,,skipped"


def test_keys_are_sorted(small_doc):
    data = json.loads(render_json(small_doc))
    assert list(data) == sorted(data)
    assert list(data["battery"][0]) == sorted(data["battery"][0])


def test_battery_entries_carry_round_and_source(small_doc):
    assert {e.round for e in small_doc.battery} == {1, 2}
    assert {e.source for e in small_doc.battery} == {"pipeline"}
    assert [e.test for e in small_doc.battery[:4]] == ["frequency", "runs", "rank", "serial"]


def test_unknown_format_rejected(small_doc, tmp_path):
    with pytest.raises(ValueError):
        emit_report(small_doc, "xml", tmp_path / "r.xml")


def test_write_failure_raises_oserror(small_doc, tmp_path):
    with pytest.raises(OSError):
        emit_report(small_doc, "json", tmp_path / "missing" / "r.json")


def test_headers():
    assert ATTRITION_HEADER == ("round", "phase", "bits")
    assert BATTERY_HEADER == ("round", "test", "pvalue_index", "pvalue", "verdict")
