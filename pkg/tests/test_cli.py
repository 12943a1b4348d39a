"""Command-line surface: subcommands, exit codes, schema and determinism."""

import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from drharmonic import cli
from drharmonic import special as sp
from drharmonic.htype import heisenberg


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_schema_versioned():
    schema = cli.table_schema()
    assert schema["version"] == 1
    assert set(schema["tables"]) == {"validate", "phi", "cfun", "kernel", "wave_norms", "exponent_fit", "atoms"}


def test_usage_errors_exit_2(capsys):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys)[0] == 2
    assert run(capsys, "phi", "--format", "xml")[0] == 2
    code, _, err = run(capsys, "phi", "--lambda-range", "0,1")
    assert code == 2 and "start,stop,count" in err
    code, _, err = run(capsys, "phi", "--space", "octonionic:k=1")
    assert code == 2 and "space" in err


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(capsys, "phi", "--config", str(tmp_path / "absent.json"))
    assert code == 2 and "I/O" in err


def test_config_syntax_error(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"seed": 1,\n "p": }')
    code, _, err = run(capsys, "validate", "--config", str(path), "--suites", "")
    assert code == 2 and "line 2" in err


def test_perturbed_generators_surface_residual(capsys, tmp_path):
    path = tmp_path / "j.json"
    path.write_text(json.dumps({"space": {"m_v": 2, "m_z": 1, "j_maps": [[[0, -1.1], [1, 0]]]}}))
    code, _, err = run(capsys, "validate", "--config", str(path))
    assert code == 2 and "residual" in err


def test_empty_selection_is_info_only(capsys):
    code, out, _ = run(capsys, "validate", "--suites", "")
    assert code == 0
    (row,) = rows_of(out)
    assert row["status"] == "info"


def test_validate_pass_and_columns(capsys):
    code, out, _ = run(capsys, "validate", "--suites", "geometry,cfunction")
    assert code == 0
    assert out.splitlines()[0].split(",") == cli.table_schema()["tables"]["validate"]
    rows = rows_of(out)
    assert rows and all(r["status"] == "pass" for r in rows)
    assert [r["name"] for r in rows] == sorted(r["name"] for r in rows)


def test_validate_failure_exits_1(capsys, tmp_path):
    path = tmp_path / "tight.json"
    path.write_text(json.dumps({"tolerances": {"roundtrip": 1e-300}}))
    code, out, _ = run(capsys, "validate", "--config", str(path), "--suites", "transform")
    assert code == 1
    assert any(r["status"] == "fail" for r in rows_of(out))


def test_validate_unknown_suite(capsys):
    assert run(capsys, "validate", "--suites", "nonsense")[0] == 2


def test_validate_to_file_prints_summary(capsys, tmp_path):
    out_path = tmp_path / "report.json"
    code, out, _ = run(capsys, "validate", "--suites", "cfunction", "--format", "json", "--out", str(out_path))
    assert code == 0 and "c03.cfunction" in out
    env = json.loads(out_path.read_text())
    assert env["schema"] == "drharmonic.validate/1" and env["meta"]["config"]["format"] == "json"


def test_phi_table_bounded_by_phi0(capsys):
    code, out, _ = run(capsys, "phi", "--lambda-range", "0,20,21", "--r-range", "0,6,13")
    assert code == 0
    rows = rows_of(out)
    assert len(rows) == 21 * 13
    by_r = {}
    for r in rows:
        by_r.setdefault(float(r["r"]), []).append((float(r["lambda"]), complex(float(r["re"]), float(r["im"]))))
    d = sp.dims(heisenberg(1))
    for rv, entries in by_r.items():
        phi0 = dict(entries)[0.0]
        assert phi0.real == pytest.approx(sp.phi(d, 0.0, rv).real, rel=1e-14)
        assert all(abs(v) <= phi0.real * (1 + 1e-12) for _, v in entries)


def test_cfun_drops_zero_and_rejects_only_zero(capsys):
    code, out, _ = run(capsys, "cfun", "--lambda-range", "0,10,11", "--format", "json")
    env = json.loads(out)
    assert code == 0 and len(env["rows"]) == 10
    assert env["columns"] == cli.table_schema()["tables"]["cfun"]
    assert run(capsys, "cfun", "--lambda-range", "0,0,1")[0] == 2


def test_kernel_meta(capsys):
    code, out, _ = run(capsys, "kernel", "--kind", "sinc", "--t", "1", "--alpha", "1", "--cutoff", "20",
                       "--format", "json")
    env = json.loads(out)
    assert code == 0
    assert env["meta"]["symbol"] == {"kind": "sinc", "t": 1.0, "alpha": 1.0}
    assert {"taper_sensitivity", "weighted_l1", "mass_outside_1"} <= set(env["meta"])
    assert run(capsys, "kernel", "--alpha", "-2")[0] == 2


@pytest.fixture(scope="module")
def wave_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("wave") / "norms.csv"
    assert cli.main(["wave-norms", "--p", "2", "--t-values", "2,5,10,20", "--out", str(path)]) == 0
    return path


def test_wave_norms_l2_flat(wave_csv):
    norms = np.array([float(r["norm"]) for r in rows_of(wave_csv.read_text())])
    assert norms.size == 4
    assert np.ptp(norms) / norms.mean() < 0.02


def test_exponent_fit_from_input(capsys, wave_csv):
    code, out, _ = run(capsys, "exponent-fit", "--input", str(wave_csv))
    (row,) = rows_of(out)
    assert code == 0 and abs(float(row["exponent"])) <= 0.02 and row["n_points"] == "4"
    assert float(row["rate_bound"]) == 0.0


def test_atoms_table(capsys, tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps({"n_atoms": 1, "atom_cutoff": 25.0}))
    code, out, _ = run(capsys, "atoms", "--config", str(path), "--t-values", "2,6", "--format", "json")
    env = json.loads(out)
    assert code == 0 and len(env["rows"]) == 2
    assert env["meta"]["status"] in {"pass", "info", "fail"}
    assert env["meta"]["space"] == {"family": "heisenberg", "k": 1}


def test_same_seed_byte_identical(tmp_path):
    cfg = tmp_path / "mc.json"
    cfg.write_text(json.dumps({"n_atoms": 1, "atom_cutoff": 25.0}))
    outs = []
    for i in range(2):
        out = tmp_path / f"atoms{i}.csv"
        assert cli.main(["atoms", "--config", str(cfg), "--seed", "3", "--t-values", "2,4", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    a = tmp_path / "phi_a.csv"
    b = tmp_path / "phi_b.csv"
    for p in (a, b):
        cli.main(["phi", "--seed", "9", "--out", str(p)])
    assert a.read_bytes() == b.read_bytes()


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "drharmonic.cli", "cfun", "--lambda-range", "1,2,2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == "lambda,c_re,c_im,c_abs,plancherel"
