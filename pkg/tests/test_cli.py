import json

import numpy as np
import pytest

from alignlab.cli import main
from alignlab.metrics import DegenerateGroupWarning
from alignlab.model import DualModel, save_checkpoint

SMALL = """
[data]
n = 300
[train]
max_epochs = 8
[search]
budget = 2
[experiment]
grid = 0.1, 0.2
replications = 2
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def run(*args):
    return main([str(a) for a in args])


def test_data_train_eval_chain(tmp_path, cfg, capsys):
    out = tmp_path / "o"
    assert run("gen-data", "--config", cfg, "--out-dir", out) == 0
    assert run("inject-noise", "--config", cfg, "--data", out / "dataset.csv", "--out-dir", out) == 0
    assert (out / "noise_manifest.csv").exists()
    assert run("train", "--config", cfg, "--data", out / "noisy.csv", "--out-dir", out / "t",
               "--arm", "standard") == 0
    metrics = json.loads((out / "t" / "metrics.json").read_text())
    assert metrics["arm"] == "standard" and 0 <= metrics["test"]["hm"] <= 1
    assert run("eval", "--model", out / "t" / "model.json", "--data", out / "noisy.csv",
               "--out-dir", out / "e") == 0
    ev = json.loads((out / "e" / "eval.json").read_text())
    assert ev["hm"] == pytest.approx(metrics["test"]["hm"])
    assert (out / "e" / "eo_curve.csv").exists() and (out / "e" / "roc.csv").exists()


def test_tune_writes_trials(tmp_path, cfg):
    assert run("tune", "--config", cfg, "--out-dir", tmp_path, "--arm", "clean") == 0
    assert len((tmp_path / "trials.csv").read_text().splitlines()) == 3
    assert "learning_rate" in json.loads((tmp_path / "best_config.json").read_text())


def test_env_var_sets_output_dir(tmp_path, cfg, monkeypatch):
    monkeypatch.setenv("ALIGNLAB_OUT", str(tmp_path / "env"))
    assert run("sweep", "--config", cfg, "--arm", "clean") == 0
    assert (tmp_path / "env" / "sweep_runs.csv").exists()


def test_sweep_ablate_sensitivity_outputs(tmp_path, cfg):
    assert run("sweep", "--config", cfg, "--out-dir", tmp_path, "--arm", "proposed,clean") == 0
    assert run("ablate", "--config", cfg, "--out-dir", tmp_path) == 0
    assert run("sensitivity", "--config", cfg, "--out-dir", tmp_path) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"sweep_runs.csv", "sweep_aggregate.json", "sweep_noise_rate_plot.csv",
            "ablation_runs.csv", "sensitivity_alpha2_plot.csv"} <= names
    plot = (tmp_path / "sweep_noise_rate_plot.csv").read_text().splitlines()
    assert plot[0] == "x,arm,mean,sd" and len(plot) == 1 + 2 * 2


@pytest.mark.parametrize("argv", [["sweep", "--bogus"], ["frobnicate"], ["eval"]])
def test_parse_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_bad_arm_and_jobs_exit_1(tmp_path):
    assert run("train", "--arm", "oracle", "--out-dir", tmp_path) == 1
    assert run("sweep", "--jobs", "0", "--out-dir", tmp_path) == 1


def test_config_error_exit_1(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nlr = 3\n")
    assert run("sweep", "--config", bad, "--out-dir", tmp_path) == 1


def test_data_errors_exit_2(tmp_path):
    csv = tmp_path / "bad.csv"
    csv.write_text("f0,group,y_true,y_obs\n1,0,7,1\n")
    assert run("train", "--data", csv, "--out-dir", tmp_path) == 2
    assert run("train", "--data", tmp_path / "missing.csv", "--out-dir", tmp_path) == 2
    assert run("eval", "--model", csv, "--data", csv, "--out-dir", tmp_path) == 2


def test_numeric_failure_exit_3(tmp_path):
    # test rows of a single class: the ROC curve is undefined
    rows = "\n".join(f"{i % 7},{i % 2},1,1,{'test' if i < 5 else 'train'}" for i in range(20))
    csv = tmp_path / "one_class.csv"
    csv.write_text("f0,group,y_true,y_obs,role\n" + rows + "\n")
    save_checkpoint(DualModel.create(1, 2, np.random.default_rng(0)), tmp_path / "m.json")
    with pytest.warns(DegenerateGroupWarning):
        code = run("eval", "--model", tmp_path / "m.json", "--data", csv, "--out-dir", tmp_path)
    assert code == 3


def test_seed_flag_changes_results(tmp_path, cfg):
    run("sweep", "--config", cfg, "--arm", "clean", "--out-dir", tmp_path / "a")
    run("sweep", "--config", cfg, "--arm", "clean", "--out-dir", tmp_path / "b", "--seed", "7")
    a = (tmp_path / "a" / "sweep_runs.csv").read_bytes()
    assert a != (tmp_path / "b" / "sweep_runs.csv").read_bytes()
