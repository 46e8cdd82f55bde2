import json
import math
import subprocess
import sys

import numpy as np
import pytest

from renyisharp.cli import main
from renyisharp.entropy import matrix_renyi_entropy_exact, save_spectrum_csv
from renyisharp.linalg import SeededRng, save_matrix_binary, save_matrix_csv, spd_with_spectrum


@pytest.fixture
def spd_file(tmp_path):
    r = SeededRng(3)
    m = spd_with_spectrum(r, r.uniform(40, 1.0, 50.0))
    path = tmp_path / "m.bin"
    save_matrix_binary(path, m)
    return path, m


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_entropy_and_oracle(capsys, spd_file):
    path, m = spd_file
    code, out, _ = run(capsys, "entropy", "--matrix", path, "--alpha", "1.5", "--probes", "100", "--lanczos", "15", "--seed", "1")
    assert code == 0
    est = json.loads(out)
    assert set(est) == {"entropy", "sharpness", "stderr", "diagnostics"}
    exact = matrix_renyi_entropy_exact(m, 1.5)
    assert abs(est["entropy"] - exact) <= 0.02 * exact and est["sharpness"] == -est["entropy"]
    code, out, _ = run(capsys, "oracle", "--matrix", path, "--alpha", "1.5")
    assert code == 0 and json.loads(out)["entropy"] == exact
    code, out, _ = run(capsys, "oracle", "--matrix", path, "--alpha", "shannon")
    assert code == 0 and 0 < json.loads(out)["entropy"] <= math.log(40)


def test_oracle_spectrum_file(capsys, tmp_path):
    save_spectrum_csv(tmp_path / "s.csv", [1.0, 1.0, 1.0, 1.0])
    code, out, _ = run(capsys, "oracle", "--spectrum", tmp_path / "s.csv", "--alpha", "2")
    assert code == 0 and json.loads(out)["entropy"] == pytest.approx(math.log(4), rel=1e-14)


def test_exit_codes(capsys, tmp_path):
    assert run(capsys, "oracle", "--matrix", tmp_path / "missing.bin", "--alpha", "2")[0] == 2
    save_matrix_csv(tmp_path / "m.csv", np.eye(3))
    assert run(capsys, "oracle", "--matrix", tmp_path / "m.csv", "--alpha", "1.0")[0] == 2
    save_matrix_csv(tmp_path / "neg.csv", -np.eye(3))
    code, _, err = run(capsys, "oracle", "--matrix", tmp_path / "neg.csv", "--alpha", "2")
    assert code == 3 and "numerical failure" in err
    code, _, _ = run(capsys, "entropy", "--matrix", tmp_path / "neg.csv", "--alpha", "2", "--lanczos", "3")
    assert code == 3
    with pytest.raises(SystemExit) as ei:
        main(["entropy"])
    assert ei.value.code == 2


def train_config(tmp_path, lr=0.05, loss="softmax_cross_entropy"):
    cfg = {
        "dataset": {"kind": "gaussian_blobs", "n": 120, "d": 4, "classes": 3, "seed": 0, "separation": 3.0},
        "model": {"hidden": [6], "loss": loss},
        "optim": {"kind": "rsam", "lr": lr, "rho": 0.3, "alpha": 1.1, "warmup": {"fixed_epochs": 1}},
        "epochs": 3, "batch_size": 16, "seed": 2,
    }
    path = tmp_path / "train.json"
    path.write_text(json.dumps(cfg))
    return path


def test_train_command(capsys, tmp_path):
    code, out, _ = run(capsys, "train", "--config", train_config(tmp_path), "--out", tmp_path / "run")
    assert code == 0 and json.loads(out)["epoch"] == 3
    model = json.loads((tmp_path / "run" / "model.json").read_text())
    assert "layer_shapes" in json.dumps(model)
    rows = (tmp_path / "run" / "metrics.csv").read_text().splitlines()
    assert rows[0].startswith("epoch,") and len(rows) == 4
    code, _, err = run(capsys, "train", "--config", train_config(tmp_path, lr=1e4, loss="mse"), "--out", tmp_path / "bad")
    assert code == 3 and "diverged" in err


def test_grid_and_correlate(capsys, tmp_path):
    grid = {
        "dataset": {"kind": "random_label_noise(0.2)", "n": 120, "d": 4, "classes": 3, "seed": 0},
        "model": {"hidden": [5]},
        "lrs": [0.02, 0.05], "batch_sizes": [16], "weight_decays": [0.0, 1e-3], "optimizers": ["sgd"], "seeds": [0],
        "epochs": 2,
        "measure": {"alphas": [0.5, 1.5], "probes": 8, "lanczos_steps": 5, "subsample": 64},
    }
    (tmp_path / "grid.json").write_text(json.dumps(grid))
    res = tmp_path / "res.ndjson"
    code, out, _ = run(capsys, "grid", "--config", tmp_path / "grid.json", "--out", res)
    assert code == 0 and out.startswith("4 runs, 0 failed")
    code, out, _ = run(capsys, "correlate", "--in", res, "--target", "gap", "--alpha-list", "0.5,1.5")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "measure,scope,alpha,tau,n"
    assert any(line.startswith("renyi_sharpness_best,global,") for line in lines)
    table = json.loads((tmp_path / "res.correlation.json").read_text())
    assert table["target"] == "gap" and all(abs(r["tau"]) <= 1 and r["n"] == 4 for r in table["rows"])
    code, out, _ = run(capsys, "correlate", "--in", res, "--tau-b", "--json", tmp_path / "b.json")
    assert code == 0 and (tmp_path / "b.json").exists()


def test_selfcheck_subprocess():
    proc = subprocess.run([sys.executable, "-m", "renyisharp", "selfcheck"], capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    lines = proc.stdout.splitlines()
    assert len(lines) == 6 and all(line.startswith("PASS ") for line in lines)
