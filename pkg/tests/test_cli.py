import json

import numpy as np
import pytest

import patchad
from patchad.cli import main, manifest_path
from patchad.data import LabeledSeries, load_csv, save_binary
from patchad.io import load_scores

SYNTH_SPEC = {
    "length": 600,
    "channels": 2,
    "period": 24,
    "anomalies": [
        {"kind": "global_point", "start": 400, "duration": 3},
        {"kind": "trend", "start": 500, "duration": 20},
    ],
}
TRAIN_CONFIG = {
    "model": {"window": 12, "patch_sizes": [3, 4], "d_model": 6, "layers": 1},
    "epochs": 1,
    "batch_size": 16,
}


def _write_json(path, value):
    path.write_text(json.dumps(value))
    return str(path)


@pytest.fixture()
def workspace(tmp_path, monkeypatch):
    monkeypatch.delenv("PATCHAD_SEED", raising=False)
    spec = _write_json(tmp_path / "spec.json", SYNTH_SPEC)
    config = _write_json(tmp_path / "train.json", TRAIN_CONFIG)
    series = tmp_path / "series.csv"
    assert main(["synth", "--spec", spec, "--out", str(series)]) == 0
    return tmp_path, config, series


@pytest.fixture()
def trained(workspace):
    tmp_path, config, series = workspace
    out = tmp_path / "run"
    argv = ["train", "--data", str(series), "--config", config, "--out", str(out)]
    assert main([*argv, "--label-column", "label"]) == 0
    return tmp_path, series, out / "model.padc"


class TestPipeline:
    def test_synth(self, workspace):
        tmp_path, _, series = workspace
        loaded = load_csv(series, "label")

        assert loaded.values.shape == (2, 600)
        assert loaded.labels.sum() == 23
        manifest = json.loads((tmp_path / "series.manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["seed"] == 0

    def test_train_outputs(self, trained):
        tmp_path, _, checkpoint = trained
        run = checkpoint.parent

        assert checkpoint.exists()
        lines = (run / "train_log.jsonl").read_text().splitlines()
        # 50 windows in batches of 16 give 4 steps
        # plus the initial and one epoch record
        assert len(lines) == 6
        manifest = json.loads((run / "manifest.json").read_text())
        assert manifest["config"]["model"]["channels"] == 2
        assert manifest["version"] == patchad.__version__

    def test_score_and_eval(self, trained, capsys):
        tmp_path, series, checkpoint = trained
        scores = tmp_path / "scores.csv"
        argv = ["score", "--model", str(checkpoint), "--data", str(series)]
        argv += ["--out", str(scores), "--label-column", "label"]
        assert main([*argv, "--sigma", "2"]) == 0

        frame = load_scores(scores)
        assert len(frame) == 600
        assert frame["flag"].sum() == 12
        assert (tmp_path / "scores.manifest.json").exists()

        report = tmp_path / "report.json"
        argv = ["eval", "--scores", str(scores), "--labels", str(series)]
        assert main([*argv, "--out", str(report)]) == 0
        single = json.loads(report.read_text())
        assert single["sigma"] is None
        assert single["counts"]["tp"] + single["counts"]["fp"] == 12

        sweep = tmp_path / "sweep.json"
        argv = ["eval", "--scores", str(scores), "--labels", str(series)]
        argv += ["--out", str(sweep)]
        assert main([*argv, "--sigma", "1", "5", "--vus-buffer", "4"]) == 0
        reports = json.loads(sweep.read_text())
        assert [r["sigma"] for r in reports] == [1.0, 5.0]
        assert "sigma = 5.0" in capsys.readouterr().out

    def test_spot_scoring(self, trained):
        tmp_path, series, checkpoint = trained
        scores = tmp_path / "spot.csv"
        argv = ["score", "--model", str(checkpoint), "--data", str(series)]
        argv += ["--out", str(scores), "--label-column", "label"]
        assert main([*argv, "--spot", "--calib", str(series)]) == 0

        frame = load_scores(scores)
        assert np.isfinite(frame["threshold"]).all()
        assert set(frame["flag"].unique()) <= {0, 1}

    def test_diag(self, trained):
        tmp_path, series, checkpoint = trained
        out = tmp_path / "diag.json"
        argv = ["diag", "--model", str(checkpoint), "--data", str(series)]
        argv += ["--out", str(out)]
        assert main([*argv, "--label-column", "label"]) == 0

        report = json.loads(out.read_text())
        assert set(report["entropy"]) == {"3", "4"}
        assert len(report["variance"]) == 4
        assert set(report["contrast"]) == {"3", "4"}

    def test_bench(self, trained):
        tmp_path, _, checkpoint = trained
        out = tmp_path / "bench.json"
        argv = ["bench", "--model", str(checkpoint), "--out", str(out)]
        argv += ["--iterations", "2"]
        assert main([*argv, "--window-sizes", "12", "24"]) == 0

        report = json.loads(out.read_text())
        assert report["single"]["window"] == 12
        assert report["single"]["flops"] > 0
        assert [r["window"] for r in report["scaling"]["rows"]] == [12, 24]

    def test_seed_flag_is_recorded(self, workspace, monkeypatch):
        tmp_path, config, series = workspace
        monkeypatch.setenv("PATCHAD_SEED", "9")
        out = tmp_path / "seeded"
        argv = ["train", "--data", str(series), "--config", config, "--out", str(out)]
        assert main([*argv, "--label-column", "label", "--seed", "4"]) == 0

        assert json.loads((out / "manifest.json").read_text())["seed"] == 4


class TestErrors:
    def test_missing_data(self, tmp_path, capsys):
        argv = ["train", "--data", str(tmp_path / "nope.csv")]
        code = main([*argv, "--out", str(tmp_path / "o")])

        assert code == 2
        assert "patchad train: error: data file not found" in capsys.readouterr().err

    def test_spot_without_calibration(self, trained):
        tmp_path, series, checkpoint = trained
        argv = ["score", "--model", str(checkpoint), "--data", str(series)]
        assert main([*argv, "--out", str(tmp_path / "s.csv"), "--spot"]) == 1

    def test_stride_longer_than_window(self, trained, capsys):
        tmp_path, series, checkpoint = trained
        argv = ["score", "--model", str(checkpoint), "--data", str(series)]
        argv += ["--label-column", "label", "--out", str(tmp_path / "s.csv")]
        assert main([*argv, "--stride", "20"]) == 1
        assert "stride must lie in [1, 12]" in capsys.readouterr().err

    def test_channel_mismatch(self, trained):
        tmp_path, series, checkpoint = trained
        argv = ["score", "--model", str(checkpoint), "--data", str(series)]
        # without --label-column the labels become a third channel
        assert main([*argv, "--out", str(tmp_path / "s.csv")]) == 2

    def test_config_channel_mismatch(self, workspace):
        tmp_path, _, series = workspace
        config = _write_json(
            tmp_path / "bad.json", {"model": {**TRAIN_CONFIG["model"], "channels": 3}}
        )
        argv = ["train", "--data", str(series), "--config", config]
        argv += ["--out", str(tmp_path / "o")]
        assert main([*argv, "--label-column", "label"]) == 2

    def test_invalid_config(self, workspace):
        tmp_path, _, series = workspace
        config = tmp_path / "broken.json"
        config.write_text("{")
        argv = ["train", "--data", str(series), "--config", str(config)]
        argv += ["--out", str(tmp_path / "o")]
        assert main([*argv, "--label-column", "label"]) == 1

    def test_nan_training_data(self, tmp_path, capsys):
        values = np.zeros((2, 48))
        values[1, 7] = np.nan
        data = tmp_path / "nan.pads"
        save_binary(data, LabeledSeries(values=values))
        config = _write_json(tmp_path / "train.json", TRAIN_CONFIG)
        out = tmp_path / "run"

        argv = ["train", "--data", str(data), "--config", config]
        assert main([*argv, "--out", str(out)]) == 3
        assert "loss is nan" in capsys.readouterr().err
        assert (out / "model.padc").exists()


class TestSurface:
    @pytest.mark.parametrize(
        "command, options",
        [
            (
                "train",
                ["--data", "--config", "--out", "--seed", "--epochs", "--label-column"],
            ),
            (
                "score",
                ["--model", "--data", "--out", "--sigma", "--spot", "--calib", "--q",
                 "--level", "--fit", "--stride", "--label-column"],
            ),
            (
                "eval",
                ["--scores", "--labels", "--label-column", "--sigma",
                 "--vus-buffer", "--out"],
            ),
            ("synth", ["--spec", "--out", "--seed"]),
            ("bench", ["--model", "--window-sizes", "--iterations", "--out"]),
            ("diag", ["--model", "--data", "--label-column", "--out"]),
        ],
    )
    def test_help(self, command, options, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main([command, "--help"])

        assert excinfo.value.code == 0
        text = capsys.readouterr().out
        assert all(option in text for option in options)

    def test_version(self, capsys):
        with pytest.raises(SystemExit):
            main(["--version"])
        assert patchad.__version__ in capsys.readouterr().out

    def test_manifest_path(self, tmp_path):
        assert manifest_path(tmp_path / "run") == tmp_path / "run" / "manifest.json"
        assert manifest_path(tmp_path / "s.csv") == tmp_path / "s.manifest.json"
