import pytest

from app.core.config import Settings
from app.core.exceptions import ConfigError
from app.schemas.config import (
    BridgeConfig,
    BridgeKind,
    ExperimentConfig,
    build_config,
    dump_config,
    load_config,
    parse_overrides,
    parse_pairs,
    save_config,
)


class TestExperimentConfig:
    def test_defaults(self):
        config = ExperimentConfig()
        assert config.bridge.kind is BridgeKind.DELTA
        assert config.bridge.tau == 0.8
        assert config.optimizer.rho == 0.95
        assert config.optimizer.eps == 1e-6

    def test_dump_load_round_trip(self, tmp_path):
        config = build_config(
            {"bridge.kind": "coaching", "bridge.m_max": "2", "model.bidirectional": "true", "training.max_steps": "40"}
        )
        save_config(config, tmp_path / "config.txt")
        assert load_config(tmp_path / "config.txt") == config
        assert "bridge.m_max=2" in dump_config(config).splitlines()

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("# comment\nbridge.tau=0.5\nseed=3\n", encoding="utf-8")
        config = load_config(path, {"bridge.tau": "1.2"})
        assert config.bridge.tau == 1.2
        assert config.seed == 3

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="Unknown configuration key"):
            build_config({"bridge.temperature": "1.0"})

    def test_invalid_value(self):
        with pytest.raises(ConfigError, match="bridge.tau"):
            build_config({"bridge.tau": "0"})
        with pytest.raises(ConfigError):
            build_config({"task.min_len": "9", "task.max_len": "3"})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.txt")

    def test_parse_overrides(self):
        assert parse_overrides(["bridge.tau=1.0", "name=a=b"]) == {"bridge.tau": "1.0", "name": "a=b"}
        with pytest.raises(ConfigError):
            parse_pairs(["no equals sign"])


class TestMaxEditDistance:
    def test_default_is_quarter_length(self):
        config = BridgeConfig()
        assert config.m_max_for(8) == 2
        assert config.m_max_for(5) == 2
        assert config.m_max_for(1) == 1

    def test_explicit_cap(self):
        config = BridgeConfig(m_max=3)
        assert config.m_max_for(4) == 3
        assert config.m_max_for(2, strict=False) == 2
        with pytest.raises(ConfigError):
            config.m_max_for(2)


class TestSettings:
    def test_environment_prefix(self, monkeypatch):
        monkeypatch.setenv("GBN_ORACLE_MC_DRAWS", "500")
        monkeypatch.setenv("GBN_LOG_LEVEL", "debug")
        settings = Settings()
        assert settings.oracle_mc_draws == 500
        assert settings.log_level == "DEBUG"

    def test_unknown_log_level(self, monkeypatch):
        monkeypatch.setenv("GBN_LOG_LEVEL", "chatty")
        with pytest.raises(ValueError):
            Settings()
