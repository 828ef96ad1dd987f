# ctxnmt/tests/unit/test_config.py

import pytest

from ctxnmt.internal.config import (
    SEED_ENV,
    RunConfig,
    config_from_mapping,
    default_seed,
    dump_config,
    load_config,
    parse_config_text,
    save_config,
)
from ctxnmt.internal.errors import ConfigError, ParseError


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)


# ============================== test defaults ==============================

def test_default_sizes():
    config = RunConfig()
    assert (config.K, config.emb_dim, config.enc_hidden, config.dec_hidden) == (3, 600, 1000, 1000)
    assert (config.src_vocab_cap, config.max_len, config.batch_size) == (35000, 80, 80)
    assert config.strategy == "Baseline"


def test_toy_profile_overrides_sizes_only():
    config = config_from_mapping({"profile": "toy"})
    assert (config.emb_dim, config.enc_hidden, config.d_ctx) == (32, 64, 64)
    assert config.K == 3 and config.max_len == 80


def test_explicit_values_beat_the_profile():
    config = config_from_mapping({"profile": "toy", "emb_dim": "16", "lr": "0.01"})
    assert config.emb_dim == 16
    assert config.lr == 0.01


def test_strategy_names_are_normalized():
    assert config_from_mapping({"strategy": "gatedaux"}).strategy == "GatedAux"


# ============================== test seed ==============================

def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "42")
    assert default_seed() == 42
    assert config_from_mapping({}).seed == 42
    assert config_from_mapping({"seed": "7"}).seed == 7, "explicit seed wins over the environment"


def test_bad_seed_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "abc")
    with pytest.raises(ConfigError):
        default_seed()


def test_blank_seed_environment_means_zero(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "  ")
    assert default_seed() == 0


# ============================== test validation ==============================

@pytest.mark.parametrize("values", [
    {"profile": "huge"},
    {"strategy": "Concat"},
    {"src_vocab_cap": "4"},
    {"batch_size": "0"},
    {"patience": "-1"},
    {"lr": "0"},
    {"precision": "16"},
    {"K": "three"},
    {"colour": "blue"},
])
def test_invalid_values_are_config_errors(values):
    with pytest.raises(ConfigError):
        config_from_mapping(values)


def test_with_overrides_skips_none():
    config = RunConfig().with_overrides(beam=5, seed=None)
    assert config.beam == 5 and config.seed == 0


def test_strategy_config_carries_sizes():
    config = config_from_mapping({"profile": "toy", "strategy": "InitBoth"})
    model_config = config.strategy_config(150, 160)
    assert model_config.src_vocab_size == 150 and model_config.tgt_vocab_size == 160
    assert model_config.d_ctx == 64 and model_config.strategy.value == "InitBoth"


# ============================== test text format ==============================

def test_parse_config_text_ignores_comments_and_blanks():
    text = "# run settings\n\nstrategy = Aux   # trailing comment\nK=2\n"
    assert parse_config_text(text) == {"strategy": "Aux", "K": "2"}


@pytest.mark.parametrize("text, error", [
    ("strategy Aux\n", ParseError),
    ("K = \n", ParseError),
    ("K = 1\nK = 2\n", ParseError),
    ("unknown = 1\n", ConfigError),
])
def test_parse_config_text_errors_name_the_line(text, error):
    with pytest.raises(error) as err:
        parse_config_text(text, "run.cfg")
    assert "run.cfg:" in str(err.value)


def test_save_load_round_trip(tmp_path):
    config = config_from_mapping({"profile": "toy", "strategy": "InitBothGatedAux", "K": "2", "seed": "5"})
    path = tmp_path / "run.cfg"
    save_config(config, path)
    assert load_config(path) == config
    assert "strategy = InitBothGatedAux\n" in dump_config(config)


def test_load_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_load_names_the_file_on_bad_values(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("batch_size = 0\n", encoding="utf-8")
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert "bad.cfg" in str(err.value)


def test_load_with_profile_keeps_explicit_file_keys(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("profile = default\nepochs = 5\nemb_dim = 16\n", encoding="utf-8")
    config = load_config(path, profile="toy")
    assert (config.profile, config.epochs, config.emb_dim, config.dec_hidden) == ("toy", 5, 16, 64)
