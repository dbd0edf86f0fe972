import json
import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_scales.report import dumps, fmt_float, to_jsonable, write_csv, write_json


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip(x):
    assert float(fmt_float(x)) == x
    assert json.loads(dumps({"x": x}))["x"] == x


def test_whole_floats_stay_floats():
    assert fmt_float(3.0) == "3.0"
    assert isinstance(json.loads(dumps([2.0]))[0], float)


def test_numpy_and_nonfinite():
    out = to_jsonable({"a": np.float64(1.5), "b": np.int64(3), "c": np.array([1.0, np.nan]), "d": np.bool_(True), "e": (1, 2)})
    assert out == {"a": 1.5, "b": 3, "c": [1.0, None], "d": True, "e": [1, 2]}
    with pytest.raises(TypeError):
        to_jsonable(object())


def test_objects_with_to_dict():
    @dataclass
    class Thing:
        v: float

        def to_dict(self):
            return {"v": self.v}

    assert to_jsonable([Thing(0.25)]) == [{"v": 0.25}]


def test_sorted_keys_and_byte_stability(tmp_path):
    obj = {"z": 1, "a": {"y": [0.1, 2], "b": "s"}, "m": []}
    text = dumps(obj)
    assert text == dumps(dict(reversed(list(obj.items()))))
    assert list(json.loads(text)) == ["a", "m", "z"]
    assert text.endswith("\n") and "\r" not in text
    write_json(tmp_path / "x.json", obj)
    assert (tmp_path / "x.json").read_text() == text


def test_csv_format(tmp_path):
    path = tmp_path / "x.csv"
    write_csv(path, ["mu", "v", "status"], [[0.1, math.pi, "ok"], [1, np.float64(2.0), "root k=0"]])
    lines = path.read_bytes().decode().split("\n")
    assert lines[0] == "mu,v,status"
    assert lines[1] == f"0.10000000000000001,{format(math.pi, '.17g')},ok"
    assert lines[2] == "1,2.0,root k=0"
    assert lines[3] == ""
