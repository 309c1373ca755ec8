import math

import pytest

from sensor_fault_consensus.config import Config, get_config, load_kv_file, parse_scalar
from sensor_fault_consensus.exceptions import ConfigError
from sensor_fault_consensus.utils import config_hash, format_float, mix_seed, pairwise_mean


class TestConfig:
    def test_defaults(self):
        config = Config(use_env=False)
        assert config.get("model.alpha") == 0.3
        assert config.get("ia.window") == 500
        assert config.get("missing.key", "fallback") == "fallback"

    def test_yaml_layer(self, tmp_path):
        path = tmp_path / "settings.yaml"
        path.write_text("model:\n  p: 0.1\nia:\n  zeta: 0.6\n", encoding="utf-8")
        config = Config(path, use_env=False)
        assert config.get("model.p") == 0.1
        assert config.get("ia.zeta") == 0.6
        assert config.get("model.beta") == 10.0

    def test_unknown_yaml_key(self, tmp_path):
        path = tmp_path / "settings.yaml"
        path.write_text("model:\n  gamma: 1.0\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="model.gamma"):
            Config(path, use_env=False)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            Config(tmp_path / "nope.yaml", use_env=False)

    def test_set_unknown_key(self):
        config = Config(use_env=False)
        with pytest.raises(ConfigError):
            config.set("model.gamma", 1.0)
        with pytest.raises(ConfigError):
            config.set("model", 1.0)

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("SFC_N_JOBS", "4")
        monkeypatch.setenv("SFC_VERBOSE", "true")
        config = Config()
        assert config.get("montecarlo.n_jobs") == 4
        assert config.get("debug.verbose") is True

    def test_kv_file_layer(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\n\nmodel.p = 0.05\nsweep.zetas = 0.5,0.9\nia.t_offset =\n", encoding="utf-8")
        config = Config(use_env=False)
        config.load_kv(path)
        settings = config.settings()
        assert settings.model.p == 0.05
        assert settings.sweep.zetas == [0.5, 0.9]
        assert settings.ia.t_offset is None

    def test_kv_file_bad_line(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("model.p 0.05\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_kv_file(path)

    def test_validation_error(self):
        config = Config(use_env=False)
        config.set("run.topology", "hypercube")
        with pytest.raises(ConfigError):
            config.settings()

    def test_comma_lists(self):
        config = Config(use_env=False)
        config.update({"sweep.n_values": "10,20", "sweep.algorithms": "ia,ml"})
        settings = config.settings()
        assert settings.sweep.n_values == [10, 20]
        assert settings.sweep.algorithms == ['ia', 'ml']

    def test_resolved_is_flat_and_stable(self):
        a = Config(use_env=False).resolved()
        b = Config(use_env=False).resolved()
        assert a["model.alpha"] == 0.3
        assert all('.' in key for key in a)
        assert config_hash(a) == config_hash(b)
        b["model.p"] = 0.2
        assert config_hash(a) != config_hash(b)

    def test_str_dumps_yaml(self):
        text = str(Config(use_env=False))
        assert "model:" in text
        assert "alpha: 0.3" in text


class TestGetConfig:
    def test_cached_until_path_given(self, tmp_path):
        first = get_config()
        assert get_config() is first
        path = tmp_path / "settings.yaml"
        path.write_text("model:\n  p: 0.2\n", encoding="utf-8")
        reloaded = get_config(path)
        assert reloaded is not first
        assert reloaded.get("model.p") == 0.2
        assert get_config() is reloaded


class TestParseScalar:
    @pytest.mark.parametrize("text,expected", [
        ("0.5", 0.5),
        ("12", 12),
        ("true", True),
        ("null", None),
        ("", None),
        ("ring", "ring"),
        ("1.0e-6", 1e-6),
    ])
    def test_values(self, text, expected):
        assert parse_scalar(text) == expected


class TestUtils:
    def test_mix_seed_stable(self):
        assert mix_seed(0, 10, 'ring', 3) == mix_seed(0, 10, 'ring', 3)
        assert mix_seed(0, 10, 3) != mix_seed(0, 11, 3)
        assert 0 <= mix_seed("x") < 2 ** 64

    def test_format_float(self):
        assert format_float(0.1) == "0.1"
        assert format_float(1 / 3) == repr(1 / 3)
        assert format_float(True) == "true"
        assert format_float(None) == ""
        assert format_float(7) == "7"
        assert format_float(float('inf')) == "inf"

    def test_pairwise_mean(self):
        assert pairwise_mean([1.0, 2.0, 3.0]) == 2.0
        assert math.isnan(pairwise_mean([]))
