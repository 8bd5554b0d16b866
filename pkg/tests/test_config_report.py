import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from suncross.checks import Check
from suncross.config import bundled, load, validate
from suncross.errors import ConfigError
from suncross.report import checks_summary, dumps, fmt, read_csv, to_plain, write_csv

HAYES = {"n": 1, "h": 1.0, "B": [[0.0]], "delays": [{"tau": 1.0, "A": [[-1.5]]}]}


@pytest.mark.parametrize("name", ["hayes.json", "wright_hopf.json", "verify.json"])
def test_bundled_configs_validate(name):
    cfg = load(bundled(name))
    assert cfg.analyses and cfg.seed == 0


def test_defaults_are_merged():
    cfg = validate({"schema_version": 1, "system": HAYES, "analyses": ["spectrum"], "numerics": {"N": 12}})
    assert cfg.section("numerics")["N"] == 12
    assert cfg.section("numerics")["rtol"] > 0
    assert cfg.grid.N == 12


@pytest.mark.parametrize("raw, match", [
    ({"schema_version": 2}, "schema_version"),
    ({"schema_version": 1, "extra": 1}, "unknown top-level"),
    ({"schema_version": 1, "analyses": ["spectrum"]}, "system"),
    ({"schema_version": 1, "system": HAYES, "analyses": ["fourier"]}, "unknown analyses"),
    ({"schema_version": 1, "system": HAYES, "seed": -1}, "non-negative"),
    ({"schema_version": 1, "system": HAYES, "analyses": ["center-manifold"]}, "nonlinearity"),
    ({"schema_version": 1, "system": dict(HAYES, delays=[{"tau": 2.0, "A": [[1.0]]}])}, "outside"),
    ({"schema_version": 1, "system": dict(HAYES, B=[[1.0, 2.0]])}, "B"),
    ({"schema_version": 1, "system": HAYES, "numerics": {"N": 2}}, "N"),
    ({"schema_version": 1, "verify": {"level": "medium"}}, "level"),
])
def test_invalid_configs(raw, match):
    with pytest.raises(ConfigError, match=match):
        validate(raw)


def test_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load(p)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(x):
    assert float(fmt(x)) == x
    assert json.loads(dumps({"v": x}))["v"] == x


def test_special_values_and_complex():
    out = json.loads(dumps({"a": np.nan, "b": -np.inf, "z": 1 + 2j, "arr": np.arange(3), "flag": np.bool_(True)}))
    assert out == {"a": "nan", "b": "-inf", "z": {"re": 1.0, "im": 2.0}, "arr": [0, 1, 2], "flag": True}


def test_checks_serialise_with_threshold():
    d = to_plain(Check("err", 1e-9, 1e-8))
    assert d["value"] == 1e-9 and d["threshold"] == 1e-8 and d["op"] == "<=" and d["passed"]
    s = checks_summary([Check("a", 1, 0, "=="), Check("b", 0.1, 1.0)])
    assert s.value == 1 and not s.passed


def test_csv_round_trip(tmp_path):
    rows = [[0.1, 1 / 3], [2.0, np.pi]]
    write_csv(tmp_path / "t.csv", ["a", "b"], rows)
    header, data = read_csv(tmp_path / "t.csv")
    assert header == ["a", "b"] and np.array_equal(data, np.array(rows))
