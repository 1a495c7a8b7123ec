import csv
import json

import pytest

from fup_lab.cli import main



def test_scan_writes_csv_json_and_manifest(tmp_path):
    out = tmp_path / "scan.csv"
    assert main(["fup-scan", "--cantor", "3:0,2", "--kmin", "2", "--kmax", "5", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["k"] for r in rows] == ["2", "3", "4", "5"]
    assert set(rows[0]) == {"k", "N", "norm", "log_ratio"}
    fit = json.loads(out.with_suffix(".json").read_text())
    assert fit["beta"] > 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config"]["params"]["kmax"] == 5 and man["exit_status"] == 0
    assert {"numpy", "scipy", "fup_lab"} <= set(man["versions"])


def test_scan_output_is_reproducible(tmp_path):
    a, b = tmp_path / "a" / "s.csv", tmp_path / "b" / "s.csv"
    for p in (a, b):
        assert main(["fup-scan", "--cantor", "3:0,2", "--kmin", "2", "--kmax", "5", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()


@pytest.mark.parametrize(
    "args",
    [
        ["fup-scan", "--cantor", "3:0,9"],
        ["fup-scan", "--cantor", "3:0,2", "--kmin", "5", "--kmax", "6"],
        ["verify", "--set", "3:0,2:4", "--delta", "1.2"],
        ["harmonic", "check", "--t", "-0.5"],
        ["harmonic", "check", "--r", "1.5"],
        ["harmonic", "check", "--F", "poly:1"],
        ["phase-norm", "--phase", "cubic"],
        ["uc-constant", "--y", "missing.json"],
        ["iterate", "--x", "3:0,2:4", "--L", "2"],
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, args):
    assert main(args + ["--out", str(tmp_path / "o.json")]) == 2
    assert capsys.readouterr().err.startswith("config error:")


def test_config_file_errors_report_location(tmp_path, capsys):
    bad = tmp_path / "c.json"
    bad.write_text('{"T": 2,\n "m" 1}')
    assert main(["iterate", "--x", "3:0,2:5", "--config", str(bad)]) == 2
    assert "config:2:" in capsys.readouterr().err
    bad.write_text('{"bogus": 1}')
    assert main(["iterate", "--x", "3:0,2:5", "--config", str(bad)]) == 2
    assert "config.bogus" in capsys.readouterr().err


def test_config_file_supplies_values(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kmin": 2, "kmax": 4}))
    out = tmp_path / "s.csv"
    assert main(["fup-scan", "--cantor", "3:0,2", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(list(csv.DictReader(out.open()))) == 3


def test_failed_check_exits_1(tmp_path):
    out = tmp_path / "c.json"
    assert main(["verify", "--set", "3:0,2:5", "--delta", "0.6309", "--cr", "1.0", "--out", str(out)]) == 1
    assert json.loads(out.read_text())["verified"] is False


def test_gen_and_verify_round_trip(tmp_path):
    s = tmp_path / "set.json"
    assert main(["gen", "cantor", "--base", "3", "--alphabet", "0,2", "--depth", "4", "--out", str(s)]) == 0
    assert main(["verify", "--set", str(s), "--delta", "0.6309297535714574", "--cr", "2.4", "--out", str(tmp_path / "v.json")]) == 0


def test_harmonic_report_fields(tmp_path):
    out = tmp_path / "h.json"
    assert main(["harmonic", "check", "--paths", "5000", "--seed", "1", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert {"estimates", "sigmas", "paper_bounds", "verdicts"} <= set(rep)
    assert rep["paper_bounds"]["I+"] == pytest.approx(0.125 * 2.718281828459045**-4)


def test_env_overrides_workers(tmp_path, monkeypatch):
    monkeypatch.setenv("FUP_LAB_THREADS", "3")
    out = tmp_path / "h.json"
    assert main(["harmonic", "check", "--paths", "70000", "--seed", "9", "--out", str(out)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config"]["workers"] == 3
    monkeypatch.setenv("FUP_LAB_THREADS", "1")
    out1 = tmp_path / "one" / "h.json"
    assert main(["harmonic", "check", "--paths", "70000", "--seed", "9", "--out", str(out1)]) == 0
    assert out.read_bytes() == out1.read_bytes()


def test_iterate_caps_steps(tmp_path):
    out = tmp_path / "steps.csv"
    assert main(["iterate", "--x", "3:0,2:6", "--T", "2", "--m", "9", "--out", str(out)]) == 0
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["m"] == 3 and summary["m_requested"] == 9


def test_weight_and_uc(tmp_path):
    assert main(["weight", "--y", "3:0,2:5", "--scale", "243", "--cr", "2.4", "--out", str(tmp_path / "w.json")]) == 0
    assert main(["uc-constant", "--y", "3:0,2:4", "--out", str(tmp_path / "u.json")]) == 0
    assert json.loads((tmp_path / "u.json").read_text())["c3"] > 0
