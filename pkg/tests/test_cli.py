import json
import subprocess
import sys

import numpy as np
import pytest

from vkribbon.cli import EXIT_INPUT, EXIT_OK, EXIT_SOLVER, SCHEMA_VERSION, main
from vkribbon.limit_beta2 import LimitState1D
from vkribbon.limit_sub2 import SubState1D
from vkribbon.vk2d import Field2D


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_constants_parabola(capsys, tmp_path):
    code, out, _ = run(capsys, "constants", "--profile", "parabola", "--out", str(tmp_path))
    assert code == EXIT_OK and "c1" in out
    data = json.loads((tmp_path / "constants.json").read_text())
    assert data["constants"]["c1"] == pytest.approx(1 / 15, abs=1e-12)


def test_constants_quartic(capsys, tmp_path):
    code, _, _ = run(capsys, "constants", "--profile", "quartic", "--out", str(tmp_path))
    data = json.loads((tmp_path / "constants.json").read_text())
    assert code == EXIT_OK and data["constants"]["c2"] == pytest.approx(5 / 28, abs=1e-12)


@pytest.mark.parametrize("profile, msg", [("0,3", "profile is affine"), ("0,1,1", "not even"), ("cubic", "profile")])
def test_invalid_profile_exit_2(capsys, profile, msg):
    code, _, err = run(capsys, "constants", "--profile", profile)
    assert code == EXIT_INPUT and msg in err


def test_config_schema_checked(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema_version": 99}))
    code, _, err = run(capsys, "constants", "--config", str(cfg))
    assert code == EXIT_INPUT and "schema_version" in err
    cfg.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "colour": 1}))
    code, _, err = run(capsys, "constants", "--config", str(cfg))
    assert code == EXIT_INPUT and "unknown" in err


@pytest.mark.parametrize("argv", [
    ["minimize", "--model", "vk2d", "--eps", "-0.1"],
    ["minimize", "--model", "vk2d", "--beta", "3"],
    ["minimize", "--model", "vk2d", "--grid", "8by2"],
    ["minimize", "--tol", "0"],
])
def test_bad_inputs_exit_2(capsys, argv):
    assert run(capsys, *argv)[0] == EXIT_INPUT


def test_minimize_beta2_torsion(capsys, tmp_path):
    code, out, _ = run(capsys, "minimize", "--model", "beta2", "--phi1", "0.05", "--n-elems", "32", "--out", str(tmp_path))
    assert code == EXIT_OK and "torsion" in out
    rep = json.loads((tmp_path / "report.json").read_text())
    assert set(rep["terms"]) >= {"torsion", "membrane", "coupling"} and not rep["flagged"]
    s = LimitState1D.from_json(json.loads((tmp_path / "state.json").read_text()))
    assert s.theta[-2] == 0.05


def test_minimize_sub2_compression(capsys, tmp_path):
    code, _, _ = run(capsys, "minimize", "--model", "sub2", "--lambda1", "-0.5", "--n-elems", "16", "--out", str(tmp_path))
    rep = json.loads((tmp_path / "report.json").read_text())
    assert code == EXIT_OK and abs(rep["total"]) < 1e-10
    SubState1D.from_json(json.loads((tmp_path / "state.json").read_text()))


def test_minimize_vk2d_natural(capsys, tmp_path):
    code, _, _ = run(capsys, "minimize", "--model", "vk2d", "--eps", "0.1", "--beta", "2", "--grid", "8x2",
                     "--out", str(tmp_path))
    rep = json.loads((tmp_path / "report.json").read_text())
    assert code == EXIT_OK and rep["total"] < 1e-12
    f = Field2D.from_json(json.loads((tmp_path / "state.json").read_text()))
    assert f.grid.n1 == 8 and (tmp_path / "field.csv").exists()


def test_nonconvergence_exit_3(capsys, tmp_path):
    code, _, err = run(capsys, "minimize", "--model", "vk2d", "--eps", "0.1", "--phi1", "0.5", "--grid", "8x2",
                       "--max-iter", "1", "--out", str(tmp_path))
    assert code == EXIT_SOLVER and "did not converge" in err
    assert json.loads((tmp_path / "report.json").read_text())["flagged"]


def test_state_round_trip_is_bit_identical(capsys, tmp_path):
    run(capsys, "minimize", "--model", "vk2d", "--eps", "0.2", "--phi1", "0.1", "--grid", "6x2", "--out", str(tmp_path))
    raw = json.loads((tmp_path / "state.json").read_text())
    f = Field2D.from_json(raw)
    again = json.loads(json.dumps(f.to_json()))
    assert np.array_equal(Field2D.from_json(again).vector, f.vector)


def test_outputs_are_deterministic(capsys, tmp_path):
    argv = ["minimize", "--model", "vk2d", "--eps", "0.2", "--lambda3", "0.1", "--grid", "6x2", "--multistart", "3",
            "--seed", "7"]
    run(capsys, *argv, "--out", str(tmp_path / "a"))
    run(capsys, *argv, "--out", str(tmp_path / "b"))
    for name in ("state.json", "field.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ra = json.loads((tmp_path / "a" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "report.json").read_text())
    ra["config"].pop("out"), rb["config"].pop("out")
    assert ra == rb


def test_zero_sweep(capsys, tmp_path):
    code, _, _ = run(capsys, "sweep", "--eps", "0.2", "0.1", "--grid", "8x2", "8x2", "--n-elems", "8",
                     "--out", str(tmp_path))
    assert code == EXIT_OK
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("eps,")
    data = json.loads((tmp_path / "sweep.json").read_text())
    assert all(abs(r["gap"]) < 1e-10 for r in data["rows"])


def test_sweep_grid_count_checked(capsys):
    assert run(capsys, "sweep", "--eps", "0.2", "0.1", "--grid", "8x2")[0] == EXIT_INPUT


def test_recovery_check_beta2(capsys, tmp_path):
    code, out, _ = run(capsys, "recovery-check", "--n-states", "3", "--eps", "0.1", "0.05", "--out", str(tmp_path))
    assert code == EXIT_OK and "gap_error" in out
    data = json.loads((tmp_path / "recovery.json").read_text())
    assert len(data["rows"]) == 6


def test_recovery_check_sub2(capsys, tmp_path):
    code, _, _ = run(capsys, "recovery-check", "--beta", "1", "--lambda1", "-0.5", "--eps", "1e-2", "1e-4",
                     "--n-elems", "8", "--out", str(tmp_path))
    rows = json.loads((tmp_path / "recovery.json").read_text())["rows"]
    assert code == EXIT_OK and rows[1]["energy_2d"] < rows[0]["energy_2d"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "vkribbon.cli", "constants", "--profile", "quartic"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0 and "c2" in res.stdout
