import json

import pytest

from poolpricer.config import ConfigError, load_config, resolve


def test_defaults():
    cfg = resolve({})
    assert cfg.seed == 0 and cfg.days == 20 and cfg.demand_n == 100
    assert cfg.sharing.beta_s == {2: 1.148, 3: 1.4, 4: 2.0}
    assert cfg.sharing.guaranteed_discount == 0.05 and cfg.sharing.max_discount == 0.40
    assert cfg.profit.beta_f == 1.0 and cfg.profit.zeta == 0.5 and cfg.profit.upkeep == 1.0
    assert cfg.optimistic_vot == 7.78
    assert cfg.demand_seed == cfg.seed
    assert [c.share for c in cfg.classes] == [0.29, 0.28, 0.24, 0.19]


def test_header_lists_parameters():
    h = resolve({"seed": 4}).header()
    assert h.startswith("#")
    for token in ("rho=1.5", "zeta=0.5", "C=1.0", "beta_f=1.0", "lambda_hat=0.05", "nu=0.4", "seed=4", "demand_seed=4"):
        assert token in h


def test_overrides():
    cfg = resolve({}).with_overrides(**{"seed": 9, "profit.beta_f": 0.0})
    assert cfg.seed == 9 and cfg.profit.beta_f == 0.0
    with pytest.raises(ConfigError):
        resolve({}).with_overrides(**{"profit.nope": 1})


@pytest.mark.parametrize("bad", [
    {"seed": -1}, {"seed": 1.5}, {"days": "3"}, {"nope": 1}, {"demand": {"n": 0}},
    {"demand": {"area": [0, 5]}}, {"network": {"speed_kmh": 0}}, {"network": {"metric": "taxicab"}},
    {"classes": [{"mean": 1, "std": 1, "share": 0.5}]}, {"vot": {"support_points": 1}},
    {"vot": {"realisation": "exact"}}, {"sharing": {"guaranteed_discount": 0.6}},
    {"sharing": {"beta_s": [1.148]}}, {"profit": {"zeta": -0.1}}, {"pricing": {"policy": "greedy"}},
    {"pricing": {"flat_discount": 1.0}}, {"learning": {"update_on_failed_ride": 1}},
    {"output": {"formats": ["xml"]}}, {"demand": 5},
])
def test_invalid(bad):
    with pytest.raises(ConfigError):
        resolve(bad)


def test_line_numbers(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n  "seed": 1,\n  "profit": {\n    "zeta": -2\n  }\n}\n')
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert err.value.line == 4


def test_bad_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n  "seed": 1,\n  oops\n}')
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert err.value.line == 3


def test_area_forms():
    assert resolve({"demand": {"area": [4, 3]}}).demand_area == (0.0, 0.0, 4.0, 3.0)
    assert resolve({"demand": {"area": [1, 1, 4, 3]}}).demand_area == (1.0, 1.0, 4.0, 3.0)


def test_missing_csv(tmp_path):
    with pytest.raises(ConfigError):
        resolve({"demand": {"csv": str(tmp_path / "none.csv")}})


def test_load_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 3, "days": 2, "demand": {"n": 10}}))
    cfg = load_config(path)
    assert cfg.seed == 3 and cfg.days == 2 and cfg.demand_n == 10
