import json
import subprocess
import sys

import numpy as np
import pytest

from wgdl import cli
from wgdl.field import load_checkpoint

LINEAR = """\
[grid]
euclid_dims = 1
torus_dims = 1
box_half_length = 16
points_euclid = 128
points_torus = 8

[solver]
order = 2
p = 2
lambda = 1
coupling = 0
dt = 0.02
t_end = 0.2

[diagnostics]
q_list = 10/3
r_list = 1
record_every = 2

[initial]
kind = gaussian
width = 1.5
modulation = 0, 1
"""

BLOWUP = """\
[grid]
euclid_dims = 1
torus_dims = 1
box_half_length = 8
points_euclid = 128
points_torus = 8

[solver]
order = 2
p = 150
lambda = -1
dt = 1e-4
t_end = 0.2

[diagnostics]
record_every = 100

[initial]
kind = gaussian
width = 1
amplitude = 100
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestExponents:
    def test_d5_n1(self, capsys):
        code, out, _ = run(["exponents", "5", "1", "4nls", "2"], capsys)
        doc = json.loads(out)
        assert code == 0
        assert doc["criticality"]["window"] == ["8/5", "4"]
        assert doc["criticality"]["class"] == "intermediate"
        assert doc["index1"]["verified"] and doc["index2"]["verified"]

    def test_d5_n3(self, capsys):
        code, out, _ = run(["exponents", "5", "3", "4nls", "9/5"], capsys)
        assert code == 0 and json.loads(out)["criticality"]["window"] == ["8/5", "2"]

    def test_n4_empty(self, capsys):
        code, out, _ = run(["exponents", "5", "4", "4nls", "2"], capsys)
        doc = json.loads(out)
        assert code == 0 and doc["criticality"]["class"] == "empty_range" and "index1" not in doc

    def test_bad_equation(self, capsys):
        code, _, err = run(["exponents", "5", "1", "kdv", "2"], capsys)
        assert code == 1 and "invalid" in err


class TestConfigErrors:
    def test_missing_dt(self, tmp_path, capsys):
        path = write(tmp_path, LINEAR.replace("dt = 0.02\n", ""), "nodt.ini")
        code, _, err = run(["simulate", "--config", path, "--out", str(tmp_path / "o")], capsys)
        assert code == 1
        assert "nodt.ini" in err and "'dt'" in err and "[solver]" in err

    def test_bad_value_has_line(self, tmp_path, capsys):
        path = write(tmp_path, LINEAR.replace("order = 2", "order = 3"))
        code, _, err = run(["simulate", "--config", path, "--out", str(tmp_path / "o")], capsys)
        assert code == 1 and "run.ini:" in err and "order" in err

    def test_no_config(self, capsys):
        assert run(["simulate"], capsys)[0] == 1

    def test_unresolved_rejected(self, tmp_path, capsys):
        path = write(tmp_path, LINEAR.replace("box_half_length = 16", "box_half_length = 3"))
        code, _, err = run(["simulate", "--config", path, "--out", str(tmp_path / "o")], capsys)
        assert code == 1 and "force" in err


class TestSimulate:
    def test_linear_smoke(self, tmp_path, capsys):
        out = tmp_path / "o"
        code, text, _ = run(["simulate", "--config", write(tmp_path, LINEAR), "--out", str(out)], capsys)
        summary = json.loads(text)
        assert code == 0 and summary["status"] == "ok"
        assert summary["mass_drift"] <= 1e-12
        assert summary["energy_drift"] <= 1e-12
        for rung in summary["scattering_ladder"]:
            assert rung["residual"] <= 1e-12
        lines = (out / "records.ndjson").read_text().splitlines()
        assert len(lines) == 6
        rec = json.loads(lines[-1])
        assert {"t", "mass", "energy", "lq", "cube_mass"} <= set(rec)
        assert load_checkpoint(out / "final.wgdl").grid.shape == (128, 8)

    def test_blowup_exit_code(self, tmp_path, capsys):
        out = tmp_path / "o"
        code, text, _ = run(["simulate", "--config", write(tmp_path, BLOWUP), "--out", str(out)], capsys)
        summary = json.loads(text)
        assert code == 2 and summary["status"] == "blowup"
        assert "non-finite" in summary["reason"]
        f = load_checkpoint(out / "final.wgdl")
        assert np.all(np.isfinite(f.samples))

    def test_thread_determinism(self, tmp_path, capsys):
        path = write(tmp_path, LINEAR.replace("coupling = 0", "coupling = 1"))
        texts = []
        for threads in ("1", "4"):
            out = tmp_path / f"t{threads}"
            assert run(["simulate", "--config", path, "--out", str(out), "--threads", threads], capsys)[0] == 0
            texts.append((out / "records.ndjson").read_bytes())
        assert texts[0] == texts[1]

    def test_csv(self, tmp_path, capsys):
        out = tmp_path / "o"
        code, _, _ = run(["simulate", "--config", write(tmp_path, LINEAR), "--out", str(out), "--format", "csv"], capsys)
        rows = (out / "records.csv").read_text().splitlines()
        assert code == 0 and rows[0].startswith("t,") and len(rows) == 7

    def test_seeded_noise_reproducible(self, tmp_path, capsys):
        text = LINEAR.replace("modulation = 0, 1", "modulation = 0, 1\nnoise = 1e-3")
        path = write(tmp_path, text)
        finals = []
        for seed in ("7", "7", "8"):
            out = tmp_path / f"s{len(finals)}"
            assert run(["simulate", "--config", path, "--out", str(out), "--seed", seed], capsys)[0] == 0
            finals.append(load_checkpoint(out / "final.wgdl").samples)
        assert np.array_equal(finals[0], finals[1])
        assert not np.array_equal(finals[0], finals[2])


class TestVerify:
    def test_exponents_suite(self, capsys):
        code, text, _ = run(["verify", "exponents"], capsys)
        assert code == 0 and json.loads(text)["passed"]

    def test_convergence_suite(self, capsys):
        code, text, _ = run(["verify", "convergence"], capsys)
        assert code == 0 and json.loads(text)["passed"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "wgdl", "exponents", "6", "1", "4nls", "3/2"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["index1"]["verified"]
