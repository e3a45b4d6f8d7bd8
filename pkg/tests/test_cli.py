import json

import pytest

from cavity_herald.cli import main, parse_config, ConfigError


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_closed_pmax(capsys):
    code, out, _ = run(["closed", "--beta", "1.4142", "--report", "pmax"], capsys)
    assert code == 0
    assert out.startswith("P_max = 1 ")


def test_master_json_and_config_round_trip(tmp_path, capsys):
    path = tmp_path / "m.json"
    code, out, _ = run(["master", "--gl", "2", "--gr", "2.5", "--output", str(path)], capsys)
    assert code == 0 and out.startswith("p = ")
    doc = json.loads(path.read_text())
    assert doc["schema_version"] == 1 and doc["status"] == "ok"
    assert doc["config"]["gl"] == 2.0 and doc["config"]["command"] == "master"
    path2 = tmp_path / "m2.json"
    code, _, _ = run(["master", "--config", str(path), "--output", str(path2)], capsys)
    assert code == 0
    assert json.loads(path2.read_text())["results"] == doc["results"]


def test_flat_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\ngl = 1.5\ngr = 0.5\nmethod = rk45\n")
    rc = parse_config(["master", "--config", str(cfg), "--gr", "3"])
    assert (rc.gl, rc.gr, rc.method) == (1.5, 3.0, "rk45")


def test_unknown_config_key_named(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("gl = 1\ncolour = blue\n")
    code, _, err = run(["master", "--config", str(cfg)], capsys)
    assert code == 2
    assert "colour" in json.loads(err)["message"]


def test_validation_names_parameter(capsys):
    code, out, err = run(["master", "--kappa", "-1"], capsys)
    assert code == 2 and out == ""
    rec = json.loads(err)
    assert rec["status"] == "error" and "kappa" in rec["message"]
    code, _, err = run(["trajectories", "--eta-d", "1.5"], capsys)
    assert code == 2 and "eta_d" in err
    code, _, err = run(["master", "--gl", "abc"], capsys)
    assert code == 2 and "gl" in err
    code, _, err = run(["master", "--bogus", "1"], capsys)
    assert code == 2 and "--bogus" in err


def test_nonconvergence_exit_code(tmp_path, capsys):
    path = tmp_path / "nc.json"
    code, _, err = run(["master", "--t-max", "1", "--output", str(path)], capsys)
    assert code == 3
    assert json.loads(err)["kind"] == "not_converged"
    assert json.loads(path.read_text())["status"] == "not_converged"


def test_preset_requires_g0(capsys):
    code, _, err = run(["master", "--preset", "cesium-g1"], capsys)
    assert code == 2 and "g0" in err
    rc = parse_config(["master", "--preset", "cesium-g1", "--g0", "3"])
    assert rc.gl == pytest.approx(3 / 2**0.5) and rc.gr == pytest.approx(3 / 2**0.5)


def test_cesium_preset_p(capsys):
    code, out, _ = run(["master", "--g0", "3", "--preset", "cesium-g1"], capsys)
    assert code == 0 and out.startswith("p = 0.4286")


def test_trap(capsys):
    code, out, _ = run(["trap", "--lambda-t", "869e-9", "--v0", "45e6"], capsys)
    assert code == 0 and "14.35 uK" in out


def test_sweep_csv_and_matrix(tmp_path, capsys):
    out_csv, mat = tmp_path / "s.csv", tmp_path / "s.dat"
    code, out, _ = run(["sweep", "--gl-max", "2", "--gr-max", "2", "--points", "3", "--format", "csv",
                        "--output", str(out_csv), "--matrix", str(mat), "--workers", "1"], capsys)
    assert code == 0 and "max p" in out
    lines = out_csv.read_text().splitlines()
    assert lines[0].startswith("# schema_version: 1")
    assert json.loads(lines[1][len("# config: "):])["points"] == 3
    assert len(lines) == 3 + 9
    assert len(mat.read_text().splitlines()) == 4


def test_trajectories_events(tmp_path, capsys):
    out, ev = tmp_path / "t.json", tmp_path / "e.jsonl"
    code, text, _ = run(["trajectories", "--n", "200", "--max-rounds", "3", "--seed", "5",
                         "--output", str(out), "--events", str(ev), "--workers", "1"], capsys)
    assert code == 0 and "±" in text
    assert len(ev.read_text().splitlines()) == 200
    res = json.loads(out.read_text())["results"]
    assert res["n_trajectories"] == 200


def test_feedback_csv(tmp_path, capsys):
    out = tmp_path / "f.csv"
    code, _, _ = run(["feedback", "--n", "2000", "--n-max", "4", "--format", "csv",
                      "--output", str(out), "--workers", "1"], capsys)
    assert code == 0
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "n,analytic,empirical,stderr" and len(lines) == 5


def test_cesium_command(tmp_path, capsys):
    table = tmp_path / "cg.csv"
    code, out, _ = run(["cesium", "--m-f", "0", "--g0", "3", "--cg-table", str(table)], capsys)
    assert code == 0 and "g_-2" in out
    assert table.exists()
    code, _, err = run(["cesium", "--m-f", "-2"], capsys)
    assert code == 2 and "m_f" in err


def test_no_subcommand():
    with pytest.raises(ConfigError):
        parse_config([])
