"""Tests for configuration loading."""

from pathlib import Path

import pytest
from pydantic import ValidationError

from engelnq.config import DEFAULT_SEED, Config, load_config
from engelnq.schemas import InstantiationMode


@pytest.fixture(autouse=True)
def clean_env(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    for var in ("ENGELNQ_CACHE", "ENGELNQ_THREADS", "ENGELNQ_SEED"):
        monkeypatch.delenv(var, raising=False)
    # keep a stray engelnq.yaml in the working directory out of the tests
    monkeypatch.chdir(tmp_path)


class TestConfigDefaults:
    def test_default_values(self) -> None:
        cfg = Config()
        assert cfg.threads == 1
        assert cfg.seed == DEFAULT_SEED
        assert cfg.max_class is None
        assert cfg.timeout_seconds is None
        assert cfg.step_budget == 16
        assert cfg.random_law_samples == 200
        assert cfg.identity_samples == 1000
        assert cfg.verify_consistency is True
        assert cfg.output_dir == "./out"
        assert cfg.cache_dir.endswith("cache")

    def test_strategy_defaults(self) -> None:
        cfg = Config()
        assert cfg.strategy.mode == InstantiationMode.GENS
        assert cfg.strategy.depth == 2
        assert cfg.strategy.include_inverses is True
        assert cfg.strategy.escalate is True
        assert cfg.strategy.label() == "gens+inverses"

    def test_validation(self) -> None:
        with pytest.raises(ValidationError):
            Config(threads=0)
        with pytest.raises(ValidationError):
            Config(timeout_seconds=0)
        with pytest.raises(ValidationError):
            Config(seed=2**64)
        with pytest.raises(ValidationError):
            Config(strategy={"mode": "pairs", "depth": 1})


class TestLoadConfig:
    def test_load_from_yaml(self, tmp_path: Path) -> None:
        yaml_path = tmp_path / "config.yaml"
        yaml_path.write_text(
            "threads: 4\n"
            "max_class: 9\n"
            "timeout_seconds: 30\n"
            "strategy:\n"
            "  mode: pairs\n"
            "  depth: 3\n"
        )
        cfg = load_config(config_path=str(yaml_path))
        assert cfg.threads == 4
        assert cfg.max_class == 9
        assert cfg.timeout_seconds == 30
        assert cfg.strategy.mode == InstantiationMode.PAIRS
        assert cfg.strategy.label() == "pairs(3)+inverses"

    def test_poly_strategy(self, tmp_path: Path) -> None:
        yaml_path = tmp_path / "config.yaml"
        yaml_path.write_text("strategy:\n  mode: poly\n")
        cfg = load_config(config_path=str(yaml_path))
        assert cfg.strategy.mode == InstantiationMode.POLY
        assert cfg.strategy.label() == "poly"

    def test_working_directory_file(self, tmp_path: Path) -> None:
        (tmp_path / "engelnq.yaml").write_text("step_budget: 5\n")
        assert load_config().step_budget == 5

    def test_env_var_overrides(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
        monkeypatch.setenv("ENGELNQ_CACHE", str(tmp_path / "c"))
        monkeypatch.setenv("ENGELNQ_THREADS", "3")
        monkeypatch.setenv("ENGELNQ_SEED", "17")
        cfg = load_config(config_path=str(tmp_path / "missing.yaml"))
        assert cfg.cache_dir == str(tmp_path / "c")
        assert cfg.threads == 3
        assert cfg.seed == 17

    def test_cli_overrides_take_priority(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
        yaml_path = tmp_path / "config.yaml"
        yaml_path.write_text("threads: 2\nseed: 5\n")
        monkeypatch.setenv("ENGELNQ_SEED", "6")
        cfg = load_config(config_path=str(yaml_path), overrides={"threads": 8, "seed": 7})
        assert cfg.threads == 8
        assert cfg.seed == 7

    def test_none_overrides_ignored(self) -> None:
        cfg = load_config(overrides={"threads": None, "max_class": None})
        assert cfg.threads == 1
        assert cfg.max_class is None

    def test_strategy_overrides_merge(self, tmp_path: Path) -> None:
        yaml_path = tmp_path / "config.yaml"
        yaml_path.write_text("strategy:\n  mode: pairs\n  depth: 3\n")
        overrides = {"strategy": {"include_inverses": False, "mode": None}}
        cfg = load_config(config_path=str(yaml_path), overrides=overrides)
        assert cfg.strategy.mode == InstantiationMode.PAIRS
        assert cfg.strategy.depth == 3
        assert cfg.strategy.include_inverses is False
        # the caller's dict is left alone
        assert "strategy" in overrides

    def test_empty_yaml(self, tmp_path: Path) -> None:
        yaml_path = tmp_path / "config.yaml"
        yaml_path.write_text("")
        cfg = load_config(config_path=str(yaml_path))
        assert cfg.threads == 1
