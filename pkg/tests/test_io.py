import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bwabc.io import _plain, load_schema, read_fields_csv, write_fields_csv, write_json, write_table_csv


@settings(max_examples=20, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 4), st.integers(1, 6), st.just(2)),
              elements=st.floats(-1, 1, allow_nan=False)))
def test_fields_csv_roundtrip(tmp_path_factory, fields):
    path = tmp_path_factory.mktemp("csv") / "f.csv"
    times = np.arange(fields.shape[0]) * 0.1
    write_fields_csv(path, times, fields)
    t, f = read_fields_csv(path)
    np.testing.assert_array_equal(t, times)
    np.testing.assert_array_equal(f, fields)


def test_fields_csv_rejects_foreign_header(tmp_path):
    p = write_table_csv(tmp_path / "x.csv", ("a", "b"), [(1, 2)])
    with pytest.raises(ValueError):
        read_fields_csv(p)


def test_plain_converts_numpy_and_nonfinite(tmp_path):
    obj = {1: np.arange(3), "x": np.float64(math.inf), "y": math.nan, "z": (np.bool_(True), np.int64(4))}
    assert _plain(obj) == {"1": [0, 1, 2], "x": "inf", "y": None, "z": [True, 4]}
    p = write_json(tmp_path / "o.json", obj)
    assert json.loads(p.read_text())["x"] == "inf"


@pytest.mark.parametrize("name", ["manifest", "comparison", "rate"])
def test_schemas_ship_with_package(name):
    s = load_schema(name)
    assert s["type"] == "object" and s["required"]
