import json

import pytest

from mdm_spam.config import RunConfig, load_config_file, resolve


def test_defaults_are_best_setting():
    cfg = RunConfig()
    assert (cfg.d, cfg.n, cfg.k) == (32, 6, 4)
    assert cfg.mdm_config().d == 32


def test_flags_override_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"d": 8, "epochs": 3, "window": "eq5"}))
    cfg = resolve(load_config_file(path), {"d": 16, "epochs": None})
    assert (cfg.d, cfg.epochs, cfg.window) == (16, 3, "eq5")


def test_unknown_key(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"depth": 3}))
    with pytest.raises(ValueError):
        load_config_file(path)


def test_echo_round_trips():
    cfg = RunConfig(d=8, lam=0.5)
    data = json.loads(cfg.to_json("train"))
    assert data.pop("command") == "train"
    assert RunConfig(**data) == cfg
