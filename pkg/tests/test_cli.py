import csv
import io
import json
import subprocess
import sys

import pytest

from stablebilevel.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_SCHEMA, main
from stablebilevel.instances import worked_example_doc


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_solve_json(capsys):
    code, out = run(capsys, "solve", "--problem", "example_sec3", "--nu", "8")
    assert code == EXIT_OK
    rec = json.loads(out.out)["record"]
    assert rec["x"] == [1.0] and rec["y"] == [1.0] and rec["lambda"] == 2.0
    assert rec["value"] == pytest.approx(0.5 + 8 ** -0.5, abs=1e-12)


def test_solve_oa_csv(capsys):
    code, out = run(capsys, "solve", "--problem", "example_sec3", "--nu", "8", "--oa", "--format", "csv")
    assert code == EXIT_OK
    rows = list(csv.reader(io.StringIO(out.out)))
    assert rows[0] == ["k", "z_k_index", "master_value", "lower_bound", "violation"]


def test_solve_minimal_lambda(capsys):
    code, out = run(capsys, "solve", "--problem", "example_sec3", "--nu", "8", "--minimal-lambda")
    assert json.loads(out.out)["record"]["lambda"] == 0.0


def test_sweep_csv_to_file(tmp_path, capsys):
    path = tmp_path / "sweep.csv"
    code, _ = run(capsys, "sweep", "--problem", "example_sec3", "--nu-from", "1", "--nu-to", "12",
                  "--format", "csv", "--out", str(path))
    assert code == EXIT_OK
    lines = path.read_text().splitlines()
    assert lines[0] == "nu,m_nu,x,y,u_norm,alpha,lambda,gap,naive_value,naive_gap"
    assert len(lines) == 13


def test_sweep_json_mentions_substitution(capsys):
    code, out = run(capsys, "sweep", "--problem", "example_sec3", "--nu-from", "6", "--nu-to", "8")
    doc = json.loads(out.out)
    assert any("finite-tail" in n for n in doc["report"]["notes"])
    assert set(doc) == {"report", "timing"}


def test_naive_and_oracle(capsys):
    code, out = run(capsys, "naive", "--problem", "example_sec3", "--nu", "3")
    assert json.loads(out.out)["record"]["value"] == -1.0
    code, out = run(capsys, "oracle", "--problem", "example_sec3", "--format", "csv")
    rows = list(csv.reader(io.StringIO(out.out)))
    assert dict(zip(*rows))["value"] == "0.5"


def test_calmness(capsys):
    code, out = run(capsys, "calmness", "--problem", "example_sec3", "--x", "1.5", "--rho", "0.5")
    doc = json.loads(out.out)
    assert code == EXIT_OK and doc["status"] == "calm" and doc["threshold"] == 0.0
    code, out = run(capsys, "calmness", "--problem", "example_sec3", "--x", "1")
    assert json.loads(out.out)["exact_threshold"] == 0.0
    code, out = run(capsys, "calmness", "--problem", "example_sec3", "--x", "1,2")
    assert code == EXIT_SCHEMA


def test_validate(capsys):
    code, out = run(capsys, "validate", "--problem", "example_sec3")
    doc = json.loads(out.out)
    assert code == EXIT_OK and doc["schedule"]["passed"]


def test_schema_error_exit_code(tmp_path, capsys):
    doc = worked_example_doc()
    doc["norm"] = "L7"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, out = run(capsys, "oracle", "--problem", str(path))
    assert code == EXIT_SCHEMA and "/norm" in out.err
    path.write_text("{not json")
    assert run(capsys, "oracle", "--problem", str(path))[0] == EXIT_SCHEMA
    assert run(capsys, "oracle", "--problem", str(tmp_path / "missing.json"))[0] == EXIT_SCHEMA


def test_infeasible_exit_code(tmp_path, capsys):
    doc = worked_example_doc(x_resolution=3)
    doc["upper_domain"] = [{"expr": "x1", "interval": [5, 6]}]
    path = tmp_path / "empty.json"
    path.write_text(json.dumps(doc))
    assert run(capsys, "solve", "--problem", str(path), "--nu", "2")[0] == EXIT_INFEASIBLE
    assert run(capsys, "oracle", "--problem", str(path))[0] == EXIT_INFEASIBLE


def test_random_and_generate(tmp_path, capsys):
    code, out = run(capsys, "oracle", "--problem", "random", "--seed", "42")
    assert code in (EXIT_OK, EXIT_INFEASIBLE)
    assert run(capsys, "oracle", "--problem", "random")[0] == EXIT_SCHEMA
    path = tmp_path / "gen.json"
    assert run(capsys, "generate", "--seed", "42", "--out", str(path))[0] == EXIT_OK
    code, out2 = run(capsys, "oracle", "--problem", str(path))
    assert json.loads(out2.out) == json.loads(out.out)


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "stablebilevel", "oracle", "--problem", "example_sec3"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["record"]["value"] == 0.5
