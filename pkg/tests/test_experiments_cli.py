import json
import os
import subprocess
import sys

import pytest

from recalboot.cli import main
from recalboot.exceptions import ConfigError, IngestionError
from recalboot.experiments import (
    METRIC_COLUMNS,
    RECIPES,
    RESULTS_FORMAT,
    default_params,
    list_recipes,
    load_fixture,
    resolve_params,
    run_recipe,
    validate_config,
)

TINY = {
    "recalibration-curves": dict(trials=2, n_train=32, bags=8, p_grid=[0.5, 0.683]),
    "univariate-calibration": dict(n_train=[16], n_test=8, trials=2, bags=8),
    "covariance-metrics": dict(datasets=["friedman-grosse", "thermoelectrics"], n_train=[32], n_test=8,
                               trials=2, real_trials=2, bags=8),
    "jackknife-vs-rmse": dict(n_train=16, grid=10, bags=8, trials=2),
    "imbalanced": dict(bags=8, trials=2),
    "noise-sweep": dict(noise=[1.0, 4.0], n_train=32, n_test=8, trials=2, bags=8),
    "bag-sweep": dict(bags=[8, 16], n_train=32, n_test=8, trials=2),
    "sl-study": dict(trials=1, methods=["bootstrap", "random"], bags=8, n_mc=200),
}


def _payload(directory):
    return {
        name: (directory / name).read_bytes()
        for name in sorted(os.listdir(directory))
        if name != "metadata.json"
    }


# ---------------------------------------------------------------- registry and config


def test_list_names_eight_recipes(capsys):
    assert len(RECIPES) == 8
    assert main(["list"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 8
    assert {line.split()[0] for line in out} == set(RECIPES)
    assert list_recipes().count("\n") == 7


def test_empty_config_echoes_defaults(tmp_path, capsys):
    cfg = tmp_path / "empty.yaml"
    cfg.write_text("")
    name, params = validate_config(cfg, "bag-sweep")
    assert name == "bag-sweep" and params == default_params("bag-sweep")
    assert main(["validate", "--config", str(cfg), "--recipe", "bag-sweep"]) == 0
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["params"] == default_params("bag-sweep")


def test_unknown_key_is_named(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("recipe: noise-sweep\nnoize: [1, 2]\n")
    with pytest.raises(ConfigError, match="noize"):
        validate_config(cfg)
    assert main(["validate", "--config", str(cfg)]) == 1
    assert "noize" in capsys.readouterr().err


def test_yaml_syntax_error_reports_line_and_column(tmp_path):
    cfg = tmp_path / "broken.yaml"
    cfg.write_text("recipe: bag-sweep\nbags: [16, 32\ntrials: 3\n")
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        validate_config(cfg)


def test_parameter_types_are_checked():
    assert resolve_params("bag-sweep", {"trials": "4"})["trials"] == 4
    assert resolve_params("noise-sweep", {"noise": 3})["noise"] == [3.0]
    with pytest.raises(ConfigError):
        resolve_params("bag-sweep", {"trials": "many"})
    with pytest.raises(ConfigError):
        resolve_params("bag-sweep", {"trials": 0})
    with pytest.raises(ConfigError):
        resolve_params("bag-sweep", {"methods": ["bogus"]})
    with pytest.raises(ConfigError):
        resolve_params("bag-sweep", {"p": 1.5})
    with pytest.raises(ConfigError):
        resolve_params("no-such-recipe")


def test_full_flag_restores_full_scale_trials():
    assert default_params("sl-study")["trials"] is None
    assert default_params("sl-study", full=True)["trials"] == 64


# ---------------------------------------------------------------- exit codes


def test_exit_codes(tmp_path):
    assert main(["run", "--recipe", "bag-sweep", "--output-dir", str(tmp_path / "a"),
                 "--bags", "8", "--trials", "1"]) == 0
    assert main(["run", "--recipe", "nope", "--output-dir", str(tmp_path)]) == 1
    assert main(["run", "--recipe", "bag-sweep"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["run", "--recipe", "imbalanced", "--noise", "1", "--output-dir", str(tmp_path)]) == 1
    assert main(["run", "--recipe", "imbalanced", "--output-dir", str(tmp_path / "b"),
                 "--fixture-dir", str(tmp_path / "empty")]) == 2


def test_missing_fixture_names_the_file(tmp_path):
    with pytest.raises(IngestionError, match="mechanical_properties.csv"):
        load_fixture("mechanical-properties", tmp_path)


def test_module_entry_point_runs(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "recalboot", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "sl-study" in proc.stdout


def test_cli_flags_reach_the_recipe(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--recipe", "noise-sweep", "--noise", "1,3", "--trials", "1", "--bags", "8",
                 "--p", "0.5", "--output-dir", str(out)]) == 0
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["params"]["noise"] == [1.0, 3.0]
    assert meta["params"]["trials"] == 1 and meta["params"]["p"] == 0.5


# ---------------------------------------------------------------- payloads


@pytest.mark.parametrize("recipe", sorted(TINY))
def test_same_seed_gives_identical_payload(recipe, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    run_recipe(recipe, a, seed=3, overrides=TINY[recipe])
    run_recipe(recipe, b, seed=3, overrides=TINY[recipe])
    run_recipe(recipe, c, seed=4, overrides=TINY[recipe])
    assert _payload(a) == _payload(b)
    assert _payload(a) != _payload(c)
    # nothing is written outside the output directory
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a", "b", "c"]
    summary = json.loads((a / "summary.json").read_text())
    assert summary["format"] == RESULTS_FORMAT and summary["recipe"] == recipe
    assert "metrics.csv" in os.listdir(a) or recipe == "sl-study"


def test_metric_table_layout(tmp_path):
    run_recipe("bag-sweep", tmp_path, seed=0, overrides=TINY["bag-sweep"])
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert tuple(lines[0].split(",")) == METRIC_COLUMNS
    assert len(lines) - 1 == 2 * 2 * 4 * 2  # settings, trials, methods, metrics
