import pytest

from dscan.config import RunConfig, load_config, parse_config_file
from dscan.errors import ConfigurationError, InputError


def test_defaults_mirror_published_settings():
    cfg = RunConfig()
    assert cfg.lr == 0.001
    assert cfg.batch_size == 32
    assert cfg.pretrain_iters == 200
    assert cfg.max_iters == 4000
    assert cfg.epsilon == 0.05
    assert cfg.k == 9
    assert cfg.beta == 0.3
    assert cfg.n_mels == 128
    assert cfg.frame_ms == 128.0
    assert cfg.hop_ms == 64.0
    assert cfg.target_frames == 156


def test_parse_config_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("# comment line\nk=3\nbeta = 0.5\nseed=42  # trailing comment\n\n")
    overrides = parse_config_file(path)
    assert overrides == {"k": 3, "beta": 0.5, "seed": 42}


def test_load_config_priority(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("k=3\nbeta=0.5\n")
    cfg = load_config(path, {"beta": "0.7"})  # CLI flag wins over file
    assert cfg.k == 3
    assert cfg.beta == 0.7


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("notakey=1\n")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_bad_value_rejected(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("k=three\n")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_malformed_line_rejected(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("just words\n")
    with pytest.raises(InputError):
        parse_config_file(path)


def test_validation_applies():
    with pytest.raises(ConfigurationError):
        load_config(None, {"epsilon": "1.5"})


def test_training_subset():
    cfg = load_config(None, {"k": "4", "beta": "0.2"})
    training = cfg.training()
    assert training.k == 4
    assert training.beta == 0.2
    assert training.lr == cfg.lr
