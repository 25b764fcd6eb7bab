import json

import pytest

from patchad.config import SEED_ENV_VAR, load_json, resolve_seed
from patchad.errors import ConfigError
from patchad.functional import Activation
from patchad.model import ModelConfig, ReconstructFrom


class TestModelConfig:
    def test_defaults(self):
        config = ModelConfig(channels=3)

        assert config.window == 105
        assert config.patch_sizes == (3, 5)
        assert config.d_model == 40
        assert config.layers == 3
        assert config.constraint == 0.2
        assert config.activation is Activation.GELU
        assert config.reconstruct_from is ReconstructFrom.REWEIGHTED

    def test_round_trip(self):
        config = ModelConfig(
            channels=2, window=12, patch_sizes=[3, 4], activation="relu"
        )
        parameters = config.to_parameters()

        assert parameters["patch_sizes"] == [3, 4]
        assert parameters["activation"] == "relu"
        restored = ModelConfig.from_parameters(json.loads(json.dumps(parameters)))
        assert restored == config

    def test_patch_size_must_divide_window(self):
        match = "patch size 4 does not divide the window length 10"
        with pytest.raises(ConfigError, match=match):
            ModelConfig(channels=1, window=10, patch_sizes=(5, 4))

    @pytest.mark.parametrize(
        "parameters, match",
        [
            ({"channels": 1, "windw": 12}, "unknown field"),
            ({"window": 12}, "missing field"),
            ({"channels": 1, "constraint": 1.5}, "constraint must lie in"),
            ({"channels": 0}, "channels must be >= 1"),
            ({"channels": 1, "activation": "swish"}, "invalid ModelConfig"),
        ],
    )
    def test_invalid(self, parameters, match):
        with pytest.raises(ConfigError, match=match):
            ModelConfig.from_parameters(parameters)

    def test_not_a_mapping(self):
        with pytest.raises(ConfigError, match="must be a mapping"):
            ModelConfig.from_parameters([1, 2])


class TestSeed:
    def test_flag_wins(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "5")
        assert resolve_seed(7, 3) == 7

    def test_environment_over_config(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "5")
        assert resolve_seed(None, 3) == 5

    def test_config_then_default(self, monkeypatch):
        monkeypatch.delenv(SEED_ENV_VAR, raising=False)
        assert resolve_seed(None, 3) == 3
        assert resolve_seed(None, None) == 0

    def test_bad_environment(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "seven")
        with pytest.raises(ConfigError, match=SEED_ENV_VAR):
            resolve_seed(None, None)


class TestLoadJson:
    def test_valid(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"epochs": 2}')
        assert load_json(path) == {"epochs": 2}

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"epochs": }')
        with pytest.raises(ConfigError, match="line 1"):
            load_json(path)

    def test_not_an_object(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="expected a JSON object"):
            load_json(path)

    def test_missing(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config"):
            load_json(tmp_path / "nope.json")
