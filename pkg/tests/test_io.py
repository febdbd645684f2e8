from __future__ import annotations

import json
import math

import numpy as np

from mechinfo.io import format_value, read_csv, read_jsonl, to_jsonable, write_csv, write_json, write_jsonl


class TestFormatting:
    def test_floats_keep_full_precision(self):
        x = 0.1 + 0.2
        assert float(format_value(x)) == x
        assert float(format_value(np.float64(1.0 / 3.0))) == 1.0 / 3.0

    def test_integers_and_flags(self):
        assert format_value(np.int64(7)) == "7"
        assert format_value(True) == "1"
        assert format_value(np.bool_(False)) == "0"
        assert format_value("UT-RD|S") == "UT-RD|S"


class TestJson:
    def test_non_finite_values(self):
        doc = to_jsonable({"a": float("nan"), "b": math.inf, "c": -math.inf})
        assert doc == {"a": None, "b": "inf", "c": "-inf"}

    def test_numpy_values(self):
        doc = to_jsonable({"v": np.arange(3), "x": np.float32(0.5), (1, 2): np.bool_(True)})
        assert doc == {"v": [0, 1, 2], "x": 0.5, "(1, 2)": True}

    def test_writes_parent_directories(self, tmp_path):
        path = write_json(tmp_path / "deep" / "run.json", {"H": np.float64(0.91)})
        assert json.loads(path.read_text()) == {"H": 0.91}

    def test_jsonl_lines(self, tmp_path):
        path = write_jsonl(tmp_path / "trials.jsonl", ({"number": i} for i in range(3)))
        assert read_jsonl(path) == [{"number": 0}, {"number": 1}, {"number": 2}]


class TestCsv:
    def test_rows_read_back_as_strings(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ("step", "value"), [[1, 0.25], [2, float("nan")]])
        rows = read_csv(path)
        assert rows == [{"step": "1", "value": "0.25"}, {"step": "2", "value": "nan"}]
