import json

import pandas as pd
import pytest

from tapas import build_parser, effective_settings, read_config_file, run_command


def synth(out, *extra):
    return run_command(["synth", "--out", str(out), "--demos", "3", *extra])


def read(path):
    with open(path) as f:
        return json.load(f)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert synth(out, "--seed", "0") == 0
    return out / "dataset.json"


def test_unknown_flag_is_a_usage_error():
    assert run_command(["synth", "--bogus"]) == 2
    assert run_command([]) == 2


def test_synth_is_deterministic(tmp_path):
    assert synth(tmp_path / "a", "--seed", "3") == 0
    assert synth(tmp_path / "b", "--seed", "3") == 0
    assert (tmp_path / "a" / "dataset.json").read_bytes() == (tmp_path / "b" / "dataset.json").read_bytes()


def test_seed_falls_back_to_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TAPAS_SEED", "3")
    assert synth(tmp_path / "env") == 0
    assert synth(tmp_path / "flag", "--seed", "3") == 0
    assert (tmp_path / "env" / "dataset.json").read_bytes() == (tmp_path / "flag" / "dataset.json").read_bytes()


def test_config_file_precedence(tmp_path):
    config = tmp_path / "settings.toml"
    config.write_text('scenario = "lift"\nn_demos = 4\n\n[synth]\nn_demos = 2\n\n[fit]\nK = 3\n')
    assert run_command(["synth", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
    values = read(tmp_path / "a" / "dataset.json")
    assert len(values["demos"]) == 2
    assert values["metadata"]["scenario"]["name"] == "lift"
    assert run_command(["synth", "--config", str(config), "--demos", "1", "--out", str(tmp_path / "b")]) == 0
    assert len(read(tmp_path / "b" / "dataset.json")["demos"]) == 1


def test_settings_merge(tmp_path, monkeypatch):
    monkeypatch.delenv("TAPAS_SEED", raising=False)
    config = tmp_path / "settings.json"
    config.write_text(json.dumps({"alpha": 0.2, "segment": {"min_pause_len": 7}, "fit": {"alpha": 0.5}}))
    assert read_config_file(str(config), "segment") == {"alpha": 0.2, "min_pause_len": 7}
    args = build_parser().parse_args(["segment", "--dataset", "d.json", "--config", str(config), "--alpha", "0.3"])
    settings = effective_settings(args)
    assert settings["alpha"] == 0.3
    assert settings["min_pause_len"] == 7
    assert settings["seed"] == 0


def test_segment_writes_cuts_and_magnitudes(tmp_path, dataset, capsys):
    assert run_command(["segment", "--dataset", str(dataset), "--out", str(tmp_path)]) == 0
    cuts = read(tmp_path / "cuts.json")
    assert cuts["skill_count"] == 4
    assert all(len(c) == 3 for c in cuts["cuts"])
    assert cuts["config"]["dataset"] == str(dataset)
    assert isinstance(cuts["warnings"], list)
    df = pd.read_csv(tmp_path / "magnitudes.csv")
    assert list(df.columns) == ["demo", "t", "lin_mag", "ang_mag", "is_cut"]
    assert int(df["is_cut"].sum()) == 9
    assert "Found 4 skills" in capsys.readouterr().out


def test_dataset_is_not_a_model(tmp_path, dataset, capsys):
    code = run_command(["rollout", "--model", str(dataset), "--out", str(tmp_path)])
    assert code == 1
    assert "DatasetSchemaError" in capsys.readouterr().err


def test_select_writes_relevance(tmp_path, dataset):
    assert run_command(["select", "--dataset", str(dataset), "--out", str(tmp_path)]) == 0
    relevance = read(tmp_path / "relevance.json")
    assert len(relevance["skills"]) == len(relevance["selected"]) == 4
    assert "object" in relevance["selected"][0]
    assert set(pd.read_csv(tmp_path / "relevance.csv")["skill"]) == {0, 1, 2, 3}


def test_missing_dataset_fails(tmp_path, capsys):
    assert run_command(["segment", "--dataset", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_export_plots_needs_an_input(tmp_path):
    assert run_command(["export-plots", "--out", str(tmp_path)]) == 2


def test_export_magnitudes_plot(tmp_path, dataset):
    assert run_command(["segment", "--dataset", str(dataset), "--out", str(tmp_path)]) == 0
    assert run_command(["export-plots", "--magnitudes", str(tmp_path / "magnitudes.csv"), "--out", str(tmp_path)]) == 0
    assert "<html" in (tmp_path / "magnitudes.html").read_text().lower()


@pytest.mark.slow
def test_fit_predict_and_rollout(tmp_path):
    assert run_command(["synth", "--scenario", "lift", "--demos", "4", "--seed", "1", "--out", str(tmp_path)]) == 0
    dataset = str(tmp_path / "dataset.json")
    assert run_command(["fit", "--dataset", dataset, "--k", "3", "--kl-samples", "200", "--out", str(tmp_path)]) == 0
    model = read(tmp_path / "task_model.json")
    assert model["schema"] == "tapas.task/1"
    assert len(model["skills"]) == 2
    assert model["config"]["provenance"]["K"] == 3

    model_path = str(tmp_path / "task_model.json")
    assert run_command(["predict", "--model", model_path, "--dataset", dataset, "--out", str(tmp_path)]) == 0
    predictions = pd.read_csv(tmp_path / "predictions.csv")
    assert set(predictions["skill"]) == {0, 1}

    assert run_command(["rollout", "--model", model_path, "--scenario", "lift", "--seed", "1", "--out", str(tmp_path)]) == 0
    summary = read(tmp_path / "summary.json")
    assert set(summary) >= {"success", "steps", "config", "warnings"}
    assert len(pd.read_csv(tmp_path / "traces.csv")) == summary["steps"]
