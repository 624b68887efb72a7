import csv
import json
from pathlib import Path

import pytest

from p2p_coalition import dataio
from p2p_coalition.cli import OUT_ENV, main

ROOT = Path(__file__).resolve().parents[1]
SAMPLE_CONFIG = ROOT / "scenarios" / "config.json"
SAMPLE_READINGS = ROOT / "scenarios" / "readings.csv"


def _simulate(out, *extra):
    return main(["simulate", "--config", str(SAMPLE_CONFIG), "--readings", str(SAMPLE_READINGS),
                 "--out", str(out), *extra])


def test_simulate_sample_scenario(tmp_path, capsys):
    assert _simulate(tmp_path / "b") == 0
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["n_slots"] == 96 and manifest["rows"] == 960
    assert "day" in capsys.readouterr().out


def test_simulate_twice_identical(tmp_path):
    assert _simulate(tmp_path / "a", "--quiet") == 0
    assert _simulate(tmp_path / "b", "--quiet") == 0
    for name in dataio.BUNDLE_FILES:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_zero_alpha_is_validation_failure(tmp_path, capsys):
    doc = json.loads(SAMPLE_CONFIG.read_text())
    doc["prosumers"][2]["alpha"] = 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code = main(["simulate", "--config", str(bad), "--readings", str(SAMPLE_READINGS),
                 "--out", str(tmp_path / "b")])
    assert code == 1
    assert "prosumers[2].alpha" in capsys.readouterr().err


def test_simulate_bad_readings(tmp_path, capsys):
    bad = tmp_path / "r.csv"
    bad.write_text("prosumer_id,slot,pv_kwh,demand_kwh\n1,0,-1,1\n")
    code = main(["simulate", "--config", str(SAMPLE_CONFIG), "--readings", str(bad),
                 "--out", str(tmp_path / "b")])
    assert code == 1 and "row 2" in capsys.readouterr().err


def test_missing_flags_exit_1():
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == 1


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    code = main(["simulate", "--config", str(SAMPLE_CONFIG), "--readings", str(SAMPLE_READINGS),
                 "--slots", "8", "--quiet"])
    assert code == 0
    assert json.loads((tmp_path / "env" / "manifest.json").read_text())["n_slots"] == 8
    assert main(["verify", "--quiet"]) == 0


def test_seed_flag_recorded(tmp_path):
    assert _simulate(tmp_path / "b", "--seed", "42", "--quiet") == 0
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 42


def test_verify_clean_tampered_and_empty(tmp_path, capsys):
    _simulate(tmp_path / "b", "--quiet")
    assert main(["verify", str(tmp_path / "b")]) == 0
    path = tmp_path / "b" / "outcomes.csv"
    rows = list(csv.DictReader(open(path)))
    row = next(r for r in rows if r["state"] == "receiver")
    row["state"] = "state1"
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, dataio.OUTCOME_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    capsys.readouterr()
    assert main(["verify", str(tmp_path / "b")]) == 1
    out = capsys.readouterr().out
    assert "stability" in out and row["prosumer_id"] in out
    (tmp_path / "empty").mkdir()
    assert main(["verify", str(tmp_path / "empty")]) == 2


def _instance(tmp_path, doc):
    p = tmp_path / "inst.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_clear_prices_worked_instance(tmp_path, capsys):
    inst = _instance(tmp_path, {
        "prices": {"grid_buy": 3, "grid_sell": 0.5, "beta": 0.1, "degradation": 2, "k": 1},
        "providers": [{"soc": 3, "alpha": 1}],
        "receivers": [{"gap": 5, "alpha": 1}],
    })
    assert main(["clear-prices", "--instance", inst]) == 0
    values = dict(line.split()[:2] for line in capsys.readouterr().out.splitlines()
                  if not line.startswith("warning"))
    assert float(values["p_d_s2"]) == pytest.approx(2 / 2.1, abs=1e-11)
    assert float(values["supply"]) == pytest.approx(1.95238095238, abs=1e-10)
    assert float(values["demand"]) == pytest.approx(float(values["supply"]), abs=1e-10)


def test_clear_prices_beta_zero_with_config(tmp_path, capsys):
    doc = json.loads(SAMPLE_CONFIG.read_text())
    doc["prices"]["beta"] = 0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(doc))
    inst = _instance(tmp_path, {"providers": [{"soc": 4}], "receivers": [{"gap": 4}]})
    assert main(["clear-prices", "--config", str(cfg), "--instance", inst]) == 0
    values = dict(line.split()[:2] for line in capsys.readouterr().out.splitlines()
                  if not line.startswith("warning"))
    assert values["p_d_s2"] == values["p_c_s2"]


def test_clear_prices_no_providers(tmp_path, capsys):
    inst = _instance(tmp_path, {"providers": [], "receivers": [{"gap": 5}]})
    assert main(["clear-prices", "--config", str(SAMPLE_CONFIG), "--instance", inst]) == 1
    assert "no market" in capsys.readouterr().err


def test_clear_prices_needs_schedule(tmp_path):
    inst = _instance(tmp_path, {"providers": [{"soc": 1}], "receivers": [{"gap": 5}]})
    assert main(["clear-prices", "--instance", inst]) == 1


def test_baseline_and_compare(tmp_path, capsys):
    args = ["--config", str(SAMPLE_CONFIG), "--readings", str(SAMPLE_READINGS)]
    assert main(["baseline", *args]) == 0
    assert "fit" in capsys.readouterr().out
    assert main(["compare", *args, "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "comparison.csv").exists()


def test_gen_data_round_trip(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path / "g"), "--seed", "0", "--quiet"]) == 0
    assert (tmp_path / "g" / "config.json").read_bytes() == SAMPLE_CONFIG.read_bytes()
    assert (tmp_path / "g" / "readings.csv").read_bytes() == SAMPLE_READINGS.read_bytes()
    assert main(["gen-data", "--out", str(tmp_path / "h"), "--prosumers", "0"]) == 1


def test_unwritable_output_is_runtime_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert _simulate(blocker / "sub", "--quiet") == 2
