import json

import numpy as np
import pytest

from pael.cli import main, read_rounds

BASIC = "[data]\ntheta_star = 0.5, -1.0\nseed = 2\n[schedule]\nN = 3\nT = 0.15\n"


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(BASIC)
    return path


def test_outputs_are_coherent(cfg, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    header, rows = read_rounds(out / "rounds.csv")
    assert len(rows) == 3 and header[1] == "loglik"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["loglik"] == rows[-1][1]
    assert summary["rounds"] == 3
    pij = np.loadtxt(out / "pij_final.csv", delimiter=",", skiprows=1)
    assert np.abs(pij.sum(axis=1) - 1).max() <= 1e-8
    assert "wall_time" in json.loads((out / "timing.json").read_text())


def test_unknown_key_rejected(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text(BASIC + "[kernel]\nbandwith = 2\n")
    assert main(["validate", str(path)]) == 1
    assert "bandwith" in capsys.readouterr().err


def test_missing_required_key(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[data]\nn = 10\n")
    assert main(["validate", str(path)]) == 1


def test_validate_ok(cfg, capsys):
    assert main(["validate", str(cfg)]) == 0
    assert "ok" in capsys.readouterr().out


def test_centralized_baseline_recovers_truth(tmp_path, capsys):
    path = tmp_path / "c.ini"
    path.write_text("[data]\ntheta_star = 0.5, -1.0\nnoise_std = 1e-12\n")
    assert main(["baseline", str(path), "--kind", "centralized", "--out", str(tmp_path / "o")]) == 0
    theta = json.loads(capsys.readouterr().out)["theta_bar"]
    np.testing.assert_allclose(theta, [[0.5, -1.0]] * 4, atol=1e-6)


def test_seed_flag_overrides(cfg, tmp_path):
    main(["run", str(cfg), "--seed", "11", "--out", str(tmp_path / "s")])
    assert json.loads((tmp_path / "s" / "summary.json").read_text())["seed"] == 11


def test_output_dir_from_environment(cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("PAEL_OUT", str(tmp_path / "env"))
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "env" / "rounds.csv").exists()


def test_runtime_failure_exit_code(tmp_path, capsys):
    path = tmp_path / "f.ini"
    path.write_text("[data]\ntheta_star = 0.5, -1.0\nsignals = iid-gaussian\nsignal_dim = 3\nseed = 1\n"
                    "[kernel]\nkernel = epanechnikov\nh = 0.3\n[schedule]\nN = 20\n")
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 2
    report = json.loads(capsys.readouterr().err)
    assert report["cause"] == "principal-degenerate"


def test_oracle_subcommand(cfg, capsys):
    assert main(["oracle", str(cfg)]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_inline_comments_allowed(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[data]\ntheta_star = 0.5, -1.0   ; truth\n[kernel]\nkernel = gaussian  # default\n")
    assert main(["validate", str(path)]) == 0
