import json

import pytest

from app.api import run
from app.schemas.config import save_config


@pytest.fixture
def config_file(experiment_config, tmp_path):
    path = tmp_path / "exp.cfg"
    save_config(experiment_config, path)
    return path


def _output(capsys):
    return json.loads(capsys.readouterr().out)


class TestEvaluateFiles:
    def test_mini_fixture(self, fixtures_dir, capsys):
        code = run(["evaluate", "--hyp", str(fixtures_dir / "mini_hyp.txt"), "--ref", str(fixtures_dir / "mini_ref.txt")])
        assert code == 0
        expected = float((fixtures_dir / "mini_bleu.txt").read_text().strip())
        assert _output(capsys)["bleu"] == expected

    def test_needs_both_files(self, fixtures_dir, capsys):
        assert run(["evaluate", "--hyp", str(fixtures_dir / "mini_hyp.txt")]) == 2
        assert "error [" in capsys.readouterr().err


class TestCommands:
    def test_prepare(self, config_file, capsys):
        assert run(["prepare", "--config", str(config_file)]) == 0
        summary = _output(capsys)
        assert summary["splits"] == {"train": 12, "dev": 4, "test": 4}

    def test_train_then_evaluate_checkpoint(self, config_file, tmp_path, capsys):
        assert run(["train", "--config", str(config_file), "--bridge", "uniform", "--tau", "1.0"]) == 0
        summary = _output(capsys)
        assert summary["bridge"] == "uniform"
        assert summary["status"] == "ok"
        out = tmp_path / "dev.hyp"
        assert run(["evaluate", "--config", str(config_file), "--split", "dev", "--output", str(out)]) == 0
        evaluated = _output(capsys)
        assert evaluated["split"] == "dev"
        assert 0.0 <= evaluated["bleu"] <= 100.0
        assert len(out.read_text(encoding="utf-8").splitlines()) == 4

    def test_sample_bridge_without_lm(self, config_file, capsys):
        assert run(["sample-bridge", "--config", str(config_file), "--kind", "all", "--n", "2", "--references", "2"]) == 0
        rows = _output(capsys)["samples"]
        assert {r["bridge"] for r in rows} == {"delta", "uniform"}
        assert len(rows) == 8
        assert all(0.0 <= r["score"] <= 1.0 for r in rows)

    def test_sample_bridge_strict_m_max(self, config_file, capsys):
        assert run(["sample-bridge", "--config", str(config_file), "--m-max", "9"]) == 2
        assert _output(capsys)["status"] == "error"

    def test_invalid_override(self, config_file, capsys):
        assert run(["train", "--config", str(config_file), "--set", "bridge.tau=0"]) == 2
        assert "bridge.tau" in capsys.readouterr().err

    def test_unknown_bridge_is_a_usage_error(self, config_file):
        with pytest.raises(SystemExit):
            run(["train", "--config", str(config_file), "--bridge", "gaussian"])


class TestOracleCheck:
    def test_kl_group(self, capsys):
        assert run(["oracle-check", "--only", "kl"]) == 0
        summary = _output(capsys)
        assert summary["status"] == "ok"
        assert [c["name"] for c in summary["checks"]] == ["kl.two_point"]
