import json
import os

import numpy as np
import pytest

from waveshape_nilm.config import Settings, load_config, read_document, validate_config
from waveshape_nilm.errors import (
    ArgumentError,
    ConfigError,
    DataError,
    InvariantViolation,
    NilmError,
    RowParseError,
    SizeError,
)
from waveshape_nilm.optimize import DeConfig
from waveshape_nilm.simulate import ScenarioConfig
from waveshape_nilm.utils import derive_seed, format_file_size, load_json, save_json


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    monkeypatch.delenv("WSNILM_LOG_LEVEL", raising=False)
    monkeypatch.delenv("WSNILM_WORKERS", raising=False)
    return tmp_path / "missing.env"


def test_settings_defaults(clean_env):
    settings = Settings.from_env(clean_env)
    assert settings.log_level == "WARNING"
    assert settings.workers == 1


def test_settings_from_environment(clean_env, monkeypatch):
    monkeypatch.setenv("WSNILM_LOG_LEVEL", "debug")
    monkeypatch.setenv("WSNILM_WORKERS", "4")
    settings = Settings.from_env(clean_env)
    assert (settings.log_level, settings.workers) == ("DEBUG", 4)


def test_settings_from_env_file(clean_env, tmp_path):
    env_file = tmp_path / ".env"
    env_file.write_text("WSNILM_WORKERS=3\n")
    try:
        assert Settings.from_env(env_file).workers == 3
    finally:
        os.environ.pop("WSNILM_WORKERS", None)


def test_settings_reject_bad_workers(clean_env, monkeypatch):
    monkeypatch.setenv("WSNILM_WORKERS", "0")
    with pytest.raises(ConfigError):
        Settings.from_env(clean_env)


def test_load_config_with_overrides(tmp_path):
    path = tmp_path / "de.yaml"
    path.write_text("population: 12\nmode: classic\nseed: 1\n")
    config = load_config(path, DeConfig, overrides={"seed": 9, "max_iters": None})
    assert (config.population, config.mode, config.seed, config.max_iters) == (12, "classic", 9, 50)


def test_load_config_accepts_json(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps({"bank_size": 4, "snr_db": 30}))
    config = load_config(path, ScenarioConfig)
    assert len(config.resolved_appliances()) == 4
    assert config.snr_db == 30.0


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_document(tmp_path / "absent.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        read_document(tmp_path / "list.yaml")
    (tmp_path / "broken.yaml").write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        read_document(tmp_path / "broken.yaml")
    (tmp_path / "empty.yaml").write_text("")
    assert read_document(tmp_path / "empty.yaml") == {}
    with pytest.raises(ConfigError):
        validate_config({"population": 0}, DeConfig)
    with pytest.raises(ConfigError):
        validate_config({"mode": "jade"}, DeConfig)


def test_derive_seed():
    a = derive_seed(1, "trial", 0)
    assert a == derive_seed(1, "trial", 0)
    assert a != derive_seed(1, "trial", 1)
    assert a != derive_seed(1, "trial0")
    assert 0 <= a < 2 ** 63


def test_save_json_is_sorted_and_plain(tmp_path):
    path = tmp_path / "deep" / "out.json"
    save_json(path, {"b": np.int64(2), "a": np.array([1.5, 2.5]), "c": {3: np.bool_(True)}})
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert load_json(path) == {"a": [1.5, 2.5], "b": 2, "c": {"3": True}}
    assert load_json(tmp_path / "none.json") == {}


def test_format_file_size():
    assert format_file_size(512) == "512.0 B"
    assert format_file_size(2048) == "2.0 KB"


def test_error_exit_codes():
    assert NilmError("x").exit_code == 1
    assert ArgumentError("x").exit_code == 2
    assert SizeError("x").exit_code == 3
    assert InvariantViolation("x").exit_code == 4
    assert isinstance(ArgumentError("x"), ValueError)
    error = RowParseError("bad rows", [3, 7])
    assert isinstance(error, DataError)
    assert error.rows == [3, 7]
