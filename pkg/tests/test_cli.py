import csv
import io
import json

import numpy as np
import pytest

from su2markov import qbd
from su2markov.cli import main


def _csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# schema: su2markov/")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def _stderr_json(err):
    return json.loads(err.strip().splitlines()[-1])


def test_generator_bd_rows(capsys):
    assert main(["generator", "--model", "bd", "--nu", "0", "--levels", "4"]) == 0
    rows = _csv(capsys.readouterr().out)
    G = qbd.build_generator(0.0, 4, "bd").dense()
    assert len(rows) == np.count_nonzero(G)
    for r in rows:
        assert float(r["rate"]) == G[int(r["row_level"]), int(r["col_level"])]
    # level 0 has no down move
    assert {int(r["col_level"]) for r in rows if r["row_level"] == "0"} == {0, 1}


def test_generator_json(capsys):
    assert main(["generator", "--model", "qbd2", "--nu", "1", "--levels", "3", "--format", "json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["schema"] == "su2markov/generator/v1"


def test_qbd2_rejects_negative_nu(capsys):
    assert main(["generator", "--model", "qbd2", "--nu", "-1", "--levels", "4"]) == 2
    assert "requires ν≥0" in capsys.readouterr().err


def test_levels_minimum(capsys):
    assert main(["generator", "--model", "bd", "--nu", "0", "--levels", "1"]) == 2
    assert "error" in capsys.readouterr().err


def test_bad_flags_exit_two(capsys):
    assert main(["generator", "--model", "nope"]) == 2
    assert main(["transition", "--model", "l1-killed"]) == 2
    capsys.readouterr()


def test_simulate_is_byte_identical(tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"run{k}.csv"
        args = ["simulate", "--model", "l1-switch2", "--nu", "1", "--seed", "3", "--t-max", "0.5", "--output", str(path)]
        assert main(args) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].startswith(b"# schema: su2markov/diffusion_path/v1")
    capsys.readouterr()


def test_simulate_null_recurrent_chain_returns(capsys):
    args = ["simulate", "--model", "bd", "--nu", "-1.25", "--t-max", "20", "--n-paths", "100", "--seed", "2"]
    assert main(args) == 0
    summary = _stderr_json(capsys.readouterr().err)
    assert summary["returns_to_start"] > 0
    assert summary["recurrence_class"] == "NullRecurrent"


@pytest.mark.parametrize("x0", ["0.3", "0.7"])
def test_simulate_phase_two_stays_on_its_side(x0, capsys):
    args = ["simulate", "--model", "l1-switch2", "--nu", "1", "--x0", x0, "--phase0", "2",
            "--t-max", "1", "--n-paths", "100", "--seed", "5"]
    assert main(args) == 0
    summary = _stderr_json(capsys.readouterr().err)
    assert summary["crossed_half_in_phase2"] == 0
    assert sum(summary["occupation_fractions"]) == pytest.approx(1.0)


def test_transition_at_zero_is_identity(capsys):
    assert main(["transition", "--model", "bd", "--nu", "0", "--i", "2", "--j", "2", "--t", "0", "--format", "json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["km"][0][0] == pytest.approx(1.0, abs=1e-12) and d["expm"] == [[1.0]]
    assert main(["transition", "--model", "bd", "--nu", "0", "--i", "2", "--j", "3", "--t", "0", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["km"][0][0] == pytest.approx(0.0, abs=1e-12)


def test_transition_bd_oracle_difference(capsys):
    assert main(["transition", "--model", "bd", "--nu", "0", "--i", "0", "--j", "1", "--t", "1"]) == 0
    (row,) = _csv(capsys.readouterr().out)
    assert float(row["abs_diff"]) < 1e-6
    assert 0 < float(row["km"]) < 1


def test_transition_qbd2_block_has_phase_labels(capsys):
    assert main(["transition", "--model", "qbd2", "--nu", "1", "--i", "1", "--j", "0", "--t", "0.5", "--format", "json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["phases"] == ["phase 1", "phase 2"]
    assert np.array(d["km"]).shape == (2, 2) and d["max_abs_diff"] < 1e-6
    assert main(["transition", "--model", "qbd2", "--nu", "1", "--i", "1", "--j", "0", "--t", "0.5"]) == 0
    rows = _csv(capsys.readouterr().out)
    assert {(r["phase_from"], r["phase_to"]) for r in rows} == {("1", "1"), ("1", "2"), ("2", "1"), ("2", "2")}


def test_invariant_psi_totals(capsys):
    assert main(["invariant", "--model", "l1-switch2", "--nu", "1", "--format", "json"]) == 0
    d = json.loads(capsys.readouterr().out)
    t1, t2 = d["totals"]
    assert t1 > t2 > 0 and t1 + t2 == pytest.approx(1.0, abs=1e-10)
    assert len(d["rows"]) == 99


def test_invariant_chain(capsys):
    assert main(["invariant", "--model", "qbd2", "--nu", "1", "--levels", "5"]) == 0
    rows = _csv(capsys.readouterr().out)
    assert len(rows) == 10 and all(float(r["value"]) > 0 for r in rows)


def test_density_grid(capsys):
    assert main(["density", "--model", "l1-killed", "--nu", "1", "--t", "0.5", "--grid", "9"]) == 0
    rows = _csv(capsys.readouterr().out)
    assert len(rows) == 9 and all(float(r["value"]) > 0 for r in rows)


def test_classify(capsys):
    assert main(["classify", "--model", "bd", "--nu", "0"]) == 0
    assert json.loads(capsys.readouterr().out)["class"] == "Transient"
    assert main(["classify", "--model", "l1-killed", "--nu", "0.25"]) == 0
    d = json.loads(capsys.readouterr().out)
    ends = [b for b in d["boundaries"] if b["point"] in (0.0, 1.0)]
    assert ends and all(b["verdict"] == "Regular" for b in ends)
    assert all("p_sigma" in b for b in ends)


def test_validate_exit_codes(capsys):
    assert main(["validate", "--model", "bd", "--nu", "1", "--n-paths", "2000"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(json.loads(x)["passed"] for x in lines)
    assert main(["validate", "--model", "bd", "--nu", "1", "--n-paths", "2000", "--perturb", "1e-3"]) == 1
    lines = capsys.readouterr().out.strip().splitlines()
    assert any(not json.loads(x)["passed"] for x in lines)


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"model": "bd", "nu": 0.0, "levels": 3}))
    assert main(["generator", "--config", str(cfg)]) == 0
    rows = _csv(capsys.readouterr().out)
    assert max(int(r["row_level"]) for r in rows) == 2
    assert main(["generator", "--config", str(cfg), "--levels", "5"]) == 0
    rows = _csv(capsys.readouterr().out)
    assert max(int(r["row_level"]) for r in rows) == 4
    cfg.write_text(json.dumps({"t-max": 2.0, "colour": "red"}))
    assert main(["generator", "--config", str(cfg)]) == 2
    assert "colour" in capsys.readouterr().err
