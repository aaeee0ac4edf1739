#!/usr/bin/env python3
"""
Test suite for the TOML configuration layer.
"""

import json
from pathlib import Path

import pytest

from config import (
    Config,
    ConfigError,
    LoggingSettings,
    config_from_dict,
    load_config,
    parse_corpus_source,
)
from core_image import CorpusSpec
from eval_attack import Norm
from pgws import PgwsParams

EXAMPLE_CONFIG = Path(__file__).parent / "config.example.toml"


class TestLoadConfig:
    """Loading and defaults"""

    def test_no_file_gives_defaults(self):
        assert load_config() == Config(), "No config file must give the defaults"

    def test_example_matches_defaults(self):
        assert load_config(EXAMPLE_CONFIG) == Config(), "config.example.toml drifted from defaults"

    def test_partial_sections(self, tmp_path):
        path = tmp_path / "hallmark.toml"
        path.write_text(
            "[pgws]\nqim_step = 14\n\n[attack]\nnorms = [\"l1\"]\nepsilons = [0, 8]\n"
            "\n[ref]\ntau = 8\n"
        )
        config = load_config(path)
        assert config.pgws == PgwsParams(qim_step=14.0), f"Got {config.pgws}"
        assert config.attack.norms == (Norm.L1,), f"Got {config.attack.norms}"
        assert config.attack.epsilons == (0, 8), f"Got {config.attack.epsilons}"
        assert config.ref.tau == 8, f"Got tau {config.ref.tau}"
        assert config.logging == LoggingSettings(), "Missing sections must keep defaults"

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "missing.toml")

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[pgws\ncapacity = \n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_to_dict_is_json(self):
        data = Config().to_dict()
        assert set(data) == {"keys", "pgws", "ref", "attack", "corpus", "logging"}, f"{data}"
        json.dumps(data)


class TestValidation:
    """Unknown keys and bad values are rejected"""

    @pytest.mark.parametrize(
        "data, offending",
        [
            ({"network": {}}, "network"),
            ({"pgws": {"capacty": 1024}}, "capacty"),
            ({"attack": {"epsilon": [1]}}, "epsilon"),
            ({"keys": {"private_key": "x"}}, "private_key"),
        ],
    )
    def test_unknown_names(self, data, offending):
        with pytest.raises(ConfigError) as excinfo:
            config_from_dict(data)
        assert offending in str(excinfo.value), f"Error does not name {offending}: {excinfo.value}"

    @pytest.mark.parametrize(
        "data",
        [
            {"ref": {"tau": 99}},
            {"pgws": {"capacity": 2048}},
            {"attack": {"epsilons": [3]}},
            {"attack": {"workers": 0}},
            {"corpus": {"source": "synthetic:1:2"}},
            {"logging": {"level": "LOUD"}},
            {"pgws": "not a table"},
        ],
    )
    def test_invalid_values(self, data):
        with pytest.raises(ConfigError):
            config_from_dict(data)

    def test_log_level_normalized(self):
        assert LoggingSettings(level="debug").level == "DEBUG", "Levels are case-insensitive"


class TestCorpusSource:
    """synthetic:seed:count:size or a directory"""

    def test_synthetic(self):
        spec = parse_corpus_source("synthetic:3:10:64")
        assert spec == CorpusSpec(seed=3, count=10, width=64, height=64), f"Got {spec}"

    def test_directory(self):
        assert parse_corpus_source("data/copydays") == Path("data/copydays"), "Expected a Path"

    @pytest.mark.parametrize("source", ["synthetic:a:1:64", "synthetic:1:1", "synthetic:1:-1:64"])
    def test_malformed(self, source):
        with pytest.raises(ConfigError):
            parse_corpus_source(source)
