import pytest

from target_har.config import ConfigError, PipelineConfig, load_config, merge
from target_har.pipeline import encoding_config, fusion_config, train_config


def test_defaults():
    cfg = load_config()
    assert cfg == PipelineConfig()
    assert cfg.tracking.tau_iou == 0.3 and cfg.tracking.alpha == 0.6
    assert cfg.encoding.channels == 3 and cfg.encoding.scale == 0.125
    assert (cfg.train.lr, cfg.train.batch_size, cfg.train.dropout) == (0.01, 70, 0.3)


def test_file_overrides_defaults_and_flags_override_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("seed = 4\n[encoding]\nchannels = 5\nscale = 0.25\n[tracking]\nalpha = 0.8\n")
    cfg = load_config(path)
    assert (cfg.seed, cfg.encoding.channels, cfg.encoding.scale, cfg.tracking.alpha) == (4, 5, 0.25, 0.8)
    cfg = load_config(path, {"encoding": {"channels": 2}})
    assert cfg.encoding.channels == 2
    assert cfg.encoding.scale == 0.25
    assert cfg.encoding.sigma == 2.0


def test_ints_accepted_for_floats_and_lists_for_tuples():
    cfg = merge(PipelineConfig(), {"encoding": {"scale": 1}, "train": {"block_filters": [4, 8]}})
    assert cfg.encoding.scale == 1.0 and isinstance(cfg.encoding.scale, float)
    assert cfg.train.block_filters == (4, 8)


@pytest.mark.parametrize(
    "data, fragment",
    [
        ({"colour": 1}, "unknown config key"),
        ({"tracking": {"tau": 0.3}}, "unknown keys in [tracking]"),
        ({"encoding": {"channels": "3"}}, "encoding.channels"),
        ({"encoding": {"channels": 1}}, "encoding.channels"),
        ({"train": {"dropout": 1.0}}, "train.dropout"),
        ({"tracking": {"tau_iou": 1.5}}, "tracking.tau_iou"),
        ({"seed": -1}, "seed"),
        ({"seed": True}, "seed"),
        ({"train": 3}, "expected a table"),
    ],
)
def test_bad_values_name_the_field(data, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        merge(PipelineConfig(), data)


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = = 3\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_adapters_carry_values():
    cfg = merge(PipelineConfig(), {"seed": 9, "tracking": {"min_length": 7}, "train": {"epochs": 3}})
    assert fusion_config(cfg).min_length == 7
    t = train_config(cfg)
    assert (t.seed, t.epochs, t.lr) == (9, 3, 0.01)
    assert encoding_config(cfg).shape == (42, 135, 240)
