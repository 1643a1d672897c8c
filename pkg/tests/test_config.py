from pathlib import Path

import pytest

from rmtnet.config import DEFAULT_CONFIG, PipelineConfig, config_from_mapping, load_config
from rmtnet.errors import ConfigInvalid


def test_defaults_match_dataclasses():
    cfg = load_config()
    assert cfg.clustering.community_k == 5 and cfg.clustering.user_k == 7
    assert cfg.detection.algorithm == "multilevel"
    assert cfg.tagging == PipelineConfig().tagging
    assert cfg.scenario().shop_limit == 40 and cfg.scenario().rmt_share == 0.05


def test_file_paths_resolve_against_the_config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text('[inputs]\ntrades = "logs/t.csv"\nplay = ""\n[windowing]\nweeks = [1, 3]\n')
    cfg = load_config(path)
    assert cfg.resolve("trades") == tmp_path / "logs" / "t.csv"
    assert cfg.resolve("play") is None
    assert cfg.windowing.weeks == (1, 3)


@pytest.mark.parametrize(
    "data",
    [
        {"colours": {}},
        {"detection": {"algoritm": "multilevel"}},
        {"tagging": {"giant_min_share": "lots"}},
        {"detection": {"weighted": 1}},
        {"windowing": {"weeks": 3}},
        {"windowing": {"weeks": [-1]}},
        {"inputs": {"format": "xml"}},
        {"clustering": {"community_k": 0}},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigInvalid):
        config_from_mapping(data)


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[inputs\n")
    with pytest.raises(ConfigInvalid):
        load_config(bad)


def test_simulation_overrides(tmp_path):
    path = Path(tmp_path / "sim.toml")
    path.write_text('[simulation]\npreset = "small"\nseed = 7\n')
    scenario = load_config(path).scenario()
    assert scenario.seed == 7 and scenario.n_normal == 400
    assert load_config(path).scenario(seed=9).seed == 9


def test_default_config_text_is_self_describing():
    assert "[tagging]" in DEFAULT_CONFIG and "shop_limit = 40" in DEFAULT_CONFIG
