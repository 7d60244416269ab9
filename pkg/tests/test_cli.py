import json

import pytest
from click.testing import CliRunner

from superatom import __version__
from superatom.cli import main

SMALL = ["--set", "n_atoms=5", "--set", "radius=1.5", "--set", "target_superatoms=3", "--set", "m_max=2",
         "--set", "n_realizations=2", "--set", "n_areas=5", "--set", "area_max=3.0", "--set", "scaled_strength=10"]


@pytest.fixture
def runner():
    return CliRunner()


def test_version(runner):
    res = runner.invoke(main, ["--version"])
    assert res.exit_code == 0 and __version__ in res.output


def test_simulate_writes_outputs(runner, tmp_path):
    res = runner.invoke(main, ["simulate", *SMALL, "--seed", "3", "--out", str(tmp_path / "o")])
    assert res.exit_code == 0, res.output
    paths = json.loads(res.stdout)
    assert set(paths) == {"curves", "correlation", "summary"}
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["seed"] == 3 and summary["config"]["n_atoms"] == 5


def test_simulate_from_file_and_preset(runner, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("n_atoms: 4\nradius: 1.0\nn_realizations: 1\nn_areas: 3\nm_max: 2\ntarget_superatoms: 2\n")
    res = runner.invoke(main, ["simulate", "--figure", "2b", "--config", str(cfg), "--out", str(tmp_path / "g")])
    assert res.exit_code == 0, res.output
    summary = json.loads((tmp_path / "g" / "summary.json").read_text())
    assert summary["config"]["pulse_shape"] == "gaussian" and summary["config"]["scan"] == "omega_scan"


@pytest.mark.parametrize(
    "args, kind",
    [
        (["--set", "n_areas=0"], "ConfigError"),
        (["--set", "bogus=1"], "ConfigError"),
        (["--set", "m_max"], "ConfigError"),
        (["--figure", "zz"], "ConfigError"),
    ],
)
def test_simulate_errors_are_json(runner, tmp_path, args, kind):
    res = runner.invoke(main, ["simulate", *args, "--out", str(tmp_path / "x")])
    assert res.exit_code != 0
    err = json.loads(res.stderr)
    assert err["error"] == kind and err["message"]
    assert not (tmp_path / "x").exists()


def test_validate_against_oracle(runner):
    res = runner.invoke(main, ["validate", "--against-oracle", "--n", "6", "--n-times", "11"])
    assert res.exit_code == 0, res.output
    report = json.loads(res.stdout)
    assert report["passed"] and report["max_p_exc"] <= 1e-8
    assert report["n_superatoms"] == 6


def test_validate_reports_tolerance_failure(runner):
    # three superatoms with a cap of one cannot match the exact dynamics
    res = runner.invoke(main, ["validate", "--against-oracle", "--n", "6", "--target", "3", "--m-max", "1",
                               "--strength", "1", "--n-times", "5"])
    assert res.exit_code == 1
    assert json.loads(res.stderr)["error"] == "ToleranceExceeded"


def test_validate_rejects_large_n(runner):
    res = runner.invoke(main, ["validate", "--against-oracle", "--n", "15"])
    assert res.exit_code == 1
    assert "--n must lie" in json.loads(res.stderr)["message"]
