import json

import pytest

import app
from bitstream import BitSequence, load_bits, save_bits
from errors import NetworkError
from report import read_csv_report

from conftest import random_bits

SMALL_RUN = ["simulate", "--photons", "3000", "--rounds", "2", "--seed", "5"]


@pytest.fixture
def random_file(tmp_path):
    path = tmp_path / "bits.txt"
    path.write_text(random_bits(20000, 11).to_ascii())
    return path


@pytest.fixture
def zeros_file(tmp_path):
    path = tmp_path / "zeros.txt"
    path.write_text("0" * 20000)
    return path


def test_simulate_is_byte_identical(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert app.main(SMALL_RUN + ["--out", str(first)]) == app.EXIT_OK
    assert app.main(SMALL_RUN + ["--out", str(second)]) == app.EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_simulate_report_contents(tmp_path):
    out = tmp_path / "r.json"
    assert app.main(SMALL_RUN + ["--tests", "frequency,runs", "--out", str(out)]) == app.EXIT_OK
    data = json.loads(out.read_text())
    assert data["config"]["photons"] == 3000
    assert data["config"]["seed"] == 5
    assert "out" not in data["config"]
    assert len(data["attrition"]) == 2 * 6
    assert [(e["round"], e["test"]) for e in data["battery"]] == [
        (1, "frequency"), (1, "runs"), (2, "frequency"), (2, "runs"),
    ]


def test_different_seeds_differ(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    app.main(SMALL_RUN + ["--out", str(a)])
    app.main(["simulate", "--photons", "3000", "--rounds", "2", "--seed", "6", "--out", str(b)])
    assert a.read_text() != b.read_text()


def test_simulate_zero_photons_skips_everything(tmp_path):
    out = tmp_path / "r.json"
    assert app.main(["simulate", "--photons", "0", "--rounds", "1", "--out", str(out)]) == app.EXIT_OK
    data = json.loads(out.read_text())
    assert data["battery"]
    assert all(e["verdict"] == "skipped" and e["p_values"] == [] for e in data["battery"])
    assert all(row["bits"] == 0 for row in data["attrition"])


def test_simulate_series_split(tmp_path):
    out = tmp_path / "r.json"
    args = SMALL_RUN + ["--rounds", "1", "--series", "2", "--tests", "frequency", "--out", str(out)]
    assert app.main(args) == app.EXIT_OK
    data = json.loads(out.read_text())
    assert [(e["round"], e["series"]) for e in data["battery"]] == [(1, 1), (1, 2)]
    assert data["battery"][0]["n"] == data["battery"][1]["n"]


def test_simulate_writes_csv_alongside(tmp_path):
    out, csv_out = tmp_path / "r.json", tmp_path / "r.csv"
    assert app.main(SMALL_RUN + ["--tests", "frequency", "--out", str(out), "--csv-out", str(csv_out)]) == 0
    attrition, battery = read_csv_report(csv_out)
    assert len(attrition) == 12
    assert [row[1] for row in battery] == ["frequency", "frequency"]


def test_simulate_json_on_stdout(capsys):
    assert app.main(SMALL_RUN + ["--rounds", "1", "--tests", "frequency"]) == app.EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["tool"] == "qkdrand"


def test_test_command_selected_tests(random_file, tmp_path):
    out = tmp_path / "r.json"
    assert app.main(["test", "--in", str(random_file), "--tests", "frequency,serial", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert [e["test"] for e in data["battery"]] == ["frequency", "serial"]
    assert all(e["round"] == 0 and e["n"] == 20000 for e in data["battery"])
    assert len(data["battery"][1]["p_values"]) == 2


def test_test_command_csv_output(random_file, tmp_path):
    out = tmp_path / "r.csv"
    args = ["test", "--in", str(random_file), "--tests", "frequency", "--report-format", "csv", "--out", str(out)]
    assert app.main(args) == app.EXIT_OK
    attrition, battery = read_csv_report(out)
    assert attrition == []
    assert battery[0][:3] == (0, "frequency", 0)


def test_test_command_raw_packed_input(tmp_path):
    path, out = tmp_path / "bits.bin", tmp_path / "r.json"
    save_bits(random_bits(5000, 3), path, "raw_packed")
    args = ["test", "--in", str(path), "--format", "raw_packed", "--tests", "frequency", "--out", str(out)]
    assert app.main(args) == app.EXIT_OK
    data = json.loads(out.read_text())
    assert data["battery"][0]["n"] == 5000
    assert data["config"]["input_format"] == "raw_packed"


def test_alternating_bits_balance_exactly(tmp_path):
    path, out = tmp_path / "alt.txt", tmp_path / "r.json"
    path.write_text("01" * 50000)
    assert app.main(["test", "--in", str(path), "--tests", "frequency,runs", "--out", str(out)]) == app.EXIT_OK
    frequency, runs = json.loads(out.read_text())["battery"]
    assert frequency["p_values"] == [1.0]
    assert runs["verdict"] == "fail"


def test_test_command_params_override(random_file, tmp_path):
    out = tmp_path / "r.json"
    args = ["test", "--in", str(random_file), "--tests", "serial", "--params", '{"serial": {"m": 3}}',
            "--out", str(out)]
    assert app.main(args) == app.EXIT_OK
    assert json.loads(out.read_text())["battery"][0]["params"] == {"m": 3}


def test_missing_input_file(tmp_path):
    assert app.main(["test", "--in", str(tmp_path / "nope.txt")]) == app.EXIT_IO


def test_invalid_bit_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0101x")
    assert app.main(["test", "--in", str(path)]) == app.EXIT_IO


@pytest.mark.parametrize(
    "extra",
    [["--tests", "frequency,bogus"], ["--alpha", "1.5"], ["--alpha", "0"], ["--params", "{not json"],
     ["--params", '{"bogus": {}}'], ["--workers", "0"]],
)
def test_invalid_battery_configuration(random_file, extra):
    assert app.main(["test", "--in", str(random_file)] + extra) == app.EXIT_CONFIG


@pytest.mark.parametrize(
    "extra",
    [["--flip-prob", "1.5"], ["--e-max", "0.7"], ["--sample-fraction", "0"], ["--rounds", "0"],
     ["--eve", "2"], ["--photons", "-5"], ["--series", "0"]],
)
def test_invalid_simulation_configuration(extra):
    args = ["simulate", "--photons", "100", "--rounds", "1"] + extra
    assert app.main(args) == app.EXIT_CONFIG


def test_strict_exit_on_failures(zeros_file, tmp_path):
    out = tmp_path / "r.json"
    args = ["test", "--in", str(zeros_file), "--tests", "frequency,block_frequency", "--out", str(out)]
    assert app.main(args) == app.EXIT_OK
    assert app.main(args + ["--strict"]) == app.EXIT_FAILURES


def test_strict_passes_on_random_input(random_file, tmp_path):
    args = ["test", "--in", str(random_file), "--tests", "frequency", "--alpha", "1e-6", "--strict",
            "--out", str(tmp_path / "r.json")]
    assert app.main(args) == app.EXIT_OK


def test_fetch_saves_bits(monkeypatch, tmp_path):
    calls = []

    def fake_fetch(endpoint, n, timeout=None):
        calls.append((endpoint, n, timeout))
        return BitSequence.from_bits([1, 0] * (n // 2))

    monkeypatch.setattr(app, "fetch_remote_bits", fake_fetch)
    out = tmp_path / "remote.txt"
    args = ["fetch", "--n", "16", "--out", str(out), "--endpoint", "http://qrng.test", "--timeout", "2"]
    assert app.main(args) == app.EXIT_OK
    assert calls == [("http://qrng.test", 16, 2.0)]
    assert load_bits(out).to_ascii() == "10" * 8


def test_fetch_network_failure(monkeypatch, tmp_path):
    def failing_fetch(endpoint, n, timeout=None):
        raise NetworkError("connection refused")

    monkeypatch.setattr(app, "fetch_remote_bits", failing_fetch)
    out = tmp_path / "remote.txt"
    assert app.main(["fetch", "--n", "16", "--out", str(out)]) == app.EXIT_IO
    assert not out.exists()


def test_fetch_negative_count(tmp_path):
    assert app.main(["fetch", "--n", "-1", "--out", str(tmp_path / "x.txt")]) == app.EXIT_CONFIG


def test_sweep_csv(tmp_path):
    out = tmp_path / "sweep.csv"
    args = ["sweep", "--photons", "1000,2000", "--rounds", "1", "--format", "csv", "--out", str(out)]
    assert app.main(args) == app.EXIT_OK
    attrition, battery = read_csv_report(out)
    assert [bits for _, phase, bits in attrition if phase == "pumped"] == [1000, 2000]
    assert battery == []


def test_sweep_rejects_negative_count(tmp_path):
    assert app.main(["sweep", "--photons", "1000,-1", "--out", str(tmp_path / "s.json")]) == app.EXIT_CONFIG


def test_split_series():
    chunks = app.split_series(BitSequence.from_bits([1, 0, 1, 1, 0, 0, 1]), 3)
    assert [c.to_ascii() for c in chunks] == ["10", "11", "00"]


@pytest.mark.slow
def test_preset_attrition_band(tmp_path):
    out = tmp_path / "r.json"
    args = ["simulate", "--photons", "100000", "--rounds", "3", "--seed", "42", "--tests", "frequency",
            "--out", str(out)]
    assert app.main(args) == app.EXIT_OK
    rows = json.loads(out.read_text())["attrition"]
    pumped = {r["round"]: r["bits"] for r in rows if r["phase"] == "pumped"}
    after_pa = {r["round"]: r["bits"] for r in rows if r["phase"] == "after_pa"}
    for round_index, bits in after_pa.items():
        assert 0.28 <= bits / pumped[round_index] <= 0.38
