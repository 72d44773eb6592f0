import pytest

from toolseg.config import PRESETS, RunConfig, build_run_config, load_config_file
from toolseg.errors import ConfigError


def test_precedence_flags_over_file_over_preset():
    file_values = {"total_iters": 77, "tau": 0.4}
    overrides = {"tau": 0.25}
    config = build_run_config(file_values, overrides, preset="desk")
    assert config.total_iters == 77  # file beats preset (desk: 350)
    assert config.tau == 0.25  # flag beats file
    assert config.height == PRESETS["desk"]["height"]


def test_none_overrides_are_ignored():
    config = build_run_config({}, {"tau": None, "seed": 9})
    assert config.tau == 0.5
    assert config.seed == 9


def test_unknown_file_key_rejected(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("bogus_key: 1\n")
    with pytest.raises(ConfigError, match="bogus_key"):
        load_config_file(path)


def test_invalid_tau_rejected():
    with pytest.raises(ConfigError, match="tau"):
        build_run_config({}, {"tau": 1.5})


def test_resolution_depth_compatibility_checked():
    with pytest.raises(ConfigError, match="divisible"):
        build_run_config({}, {"height": 100, "width": 100, "depth": 3})


def test_missing_paths_rejected():
    with pytest.raises(ConfigError, match="annotations"):
        build_run_config({}, {"annotations": "/no/such/file.json"})


def test_snapshot_is_deterministic_yaml():
    config = build_run_config({}, {"seed": 3})
    a, b = config.snapshot(), config.snapshot()
    assert a == b
    assert "seed: 3" in a


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("tau: 0.35\ntotal_iters: 12\nbatch_size: 2\n")
    values = load_config_file(path)
    config = build_run_config(values, {})
    assert config.tau == 0.35
    assert config.total_iters == 12


def test_train_and_model_config_derivation():
    config = build_run_config({}, {"seed": 4, "depth": 2, "base_channels": 4, "height": 64, "width": 64})
    tc = config.train_config()
    assert tc.seed == 4
    mc = config.model_config(num_classes=6)
    assert mc.depth == 2 and mc.num_classes == 6
