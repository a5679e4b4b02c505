import json

import pytest

from wick_forge import cli
from wick_forge.report import Check, ConfigError, Report, RunConfig, clean


def test_clean_values():
    import numpy as np
    out = clean({"a": np.float64(1.5), "b": float("inf"), "c": np.arange(2), "d": 1 + 2j})
    assert out == {"a": 1.5, "b": "inf", "c": [0, 1], "d": {"re": 1.0, "im": 2.0}}


def test_check_relations():
    assert Check("x", 1.0, 2.0, "<=").passed
    assert not Check("x", 3.0, 2.0, "<=").passed
    assert Check("x", 0, 0, "==").passed
    assert not Check("x", "nan", 1.0).passed


def test_empty_config_lists_required_fields(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{}")
    with pytest.raises(ConfigError) as err:
        RunConfig.load(path)
    text = str(err.value)
    for key in ("command", "K", "seed"):
        assert key in text


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig("suite", K=0, seed=-1).validate()
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"command": "suite", "K": 8, "seed": 0, "bogus": 1})


def test_key_value_config(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("command = ito.square\nK = 8\nseed = 1\np = 1.0\nparams.t = 0.2\n"
                    "tolerances.coeff_tol = 1e-9  # tighter\n")
    cfg = RunConfig.load(path)
    assert cfg.params == {"t": 0.2}
    assert cfg.tolerances.coeff_tol == 1e-9


def test_unknown_suite_name(capsys):
    assert cli.main(["suite", "--only", "nope"]) == 2
    assert "valid" in capsys.readouterr().err


def test_run_matches_direct_command(tmp_path):
    a = tmp_path / "a.json"
    assert cli.main(["ito", "square", "--t", "0.2", "--p", "1", "--K", "10", "--out", str(a)]) == 0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "ito.square", "K": 10, "seed": 42, "p": 1.0,
                               "params": {"t": 0.2}}))
    b = tmp_path / "b.json"
    assert cli.main(["run", "--config", str(cfg), "--out", str(b)]) == 0
    ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
    assert ra["checks"] == rb["checks"]
    assert (tmp_path / "a.timing.json").exists()


def test_reports_are_byte_identical(tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name / "suite.json"
        cli.main(["suite", "--only", "basis", "star_limit", "--out", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    report = json.loads(outs[0])
    assert len(report["provenance"]["gram_K32"]) == 40


def test_suite_writes_figures_and_tables(tmp_path):
    out = tmp_path / "s.json"
    cli.main(["suite", "--only", "star_limit", "--out", str(out)])
    assert (tmp_path / "s_decay.png").stat().st_size > 0
    rows = (tmp_path / "s_decay.csv").read_text().splitlines()
    assert rows[0] == "p,ratio" and len(rows) == 6


def test_exit_status_follows_checks(tmp_path):
    # the p = 8 ratio check fails, so the suite run must report failure
    assert cli.main(["suite", "--only", "star_limit", "--out", str(tmp_path / "x.json")]) == 1


def test_basis_table_csv(tmp_path):
    out = tmp_path / "t.json"
    assert cli.main(["basis", "table", "--p", "1", "--grid", "0:1:5", "--out", str(out)]) == 0
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,delta_norm_sq,tail,total" and len(lines) == 6
    assert (tmp_path / "t.png").exists()


def test_chaos_op_stdout(tmp_path, capsys):
    from wick_forge.chaos import ChaosExpansion
    x = tmp_path / "x.json"
    x.write_text(ChaosExpansion.coordinate(0, 2).to_json())
    assert cli.main(["chaos", "op", "--lhs", str(x), "--rhs", str(x), "--op", "mul"]) == 0
    data = json.loads(capsys.readouterr().out)["data"]
    assert data["expectation"] == 1.0


def test_report_json_sorted():
    r = Report("x", {"b": 1, "a": 2}, [Check("c", 1.0, 2.0)], {"z": 1.0, "y": float("inf")})
    text = r.to_json()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text)["data"]["y"] == "inf"
