import io
import json

import numpy as np
import pytest

from cvxreg.estimators import fit
from cvxreg.io import (MODEL_SCHEMA, DataFormatError, format_float, load_model, model_to_dict,
                       read_dataset, save_model, write_dataset)
from cvxreg.model import ConvexityViolation, Dataset, EstimatorConfig, PwlModel


def roundtrip(model):
    buf = io.StringIO()
    save_model(model, buf)
    buf.seek(0)
    return load_model(buf)


def test_single_piece_round_trip():
    m = PwlModel([0.1], [[1.0 / 3.0, -2.5e-17]], [[np.pi, 1e300]])
    back = roundtrip(m)
    np.testing.assert_array_equal(back.values, m.values)
    np.testing.assert_array_equal(back.betas, m.betas)
    np.testing.assert_array_equal(back.anchors, m.anchors)
    assert back.config.variant == "CR"


def test_fitted_model_round_trip_is_bit_exact():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=(12, 2))
    data = Dataset(x, (x ** 2).sum(axis=1) + 0.1 * rng.normal(size=12))
    m = fit(data, EstimatorConfig.wrcr([-1.0, 0.0], [2.0, 2.0], monotone=True))
    back = roundtrip(m)
    np.testing.assert_array_equal(back.values, m.values)
    np.testing.assert_array_equal(back.betas, m.betas)
    assert back.config.monotone and back.config.variant == "WRCR"
    np.testing.assert_array_equal(back.config.u0, [2.0, 2.0])
    assert back.fit_stats["solver_status"] == "Optimal"


def test_missing_beta_names_the_field():
    doc = model_to_dict(PwlModel([0.0, 1.0], [[0.0], [1.0]], [[0.0], [1.0]]))
    del doc["pieces"][1]["beta"]
    with pytest.raises(DataFormatError, match=r"pieces\[1\].*beta"):
        load_model(io.StringIO(json.dumps(doc)))


def test_violating_pair_reported():
    doc = {"schema": MODEL_SCHEMA, "variant": {"name": "CR"}, "monotone": False,
           "pieces": [{"value": 0.0, "beta": [1.0], "anchor": [0.0]},
                      {"value": -1.0, "beta": [1.0], "anchor": [1.0]}]}
    with pytest.raises(ConvexityViolation) as err:
        load_model(io.StringIO(json.dumps(doc)))
    assert err.value.pair == (0, 1)


@pytest.mark.parametrize("text, pattern", [
    ("{", "line 1"),
    ('{"schema": "other/9"}', "unsupported schema"),
    (json.dumps({"schema": MODEL_SCHEMA, "variant": {"name": "CR"}, "monotone": False,
                 "pieces": [{"value": "a", "beta": [0], "anchor": [0]}]}), r"pieces\[0\]\.value"),
    (json.dumps({"schema": MODEL_SCHEMA, "variant": {"name": "PCR"}, "monotone": False,
                 "pieces": [{"value": 0, "beta": [0], "anchor": [0]}]}), "variant"),
])
def test_malformed_documents(text, pattern):
    with pytest.raises(DataFormatError, match=pattern):
        load_model(io.StringIO(text))


def test_csv_round_trip_with_tags():
    data = Dataset([[0.1, 2.0], [1e-20, 3.0]], [1.0 / 3.0, 2.0], ("x1", "x2"), ("a-1", "b-2"))
    buf = io.StringIO()
    write_dataset(data, buf)
    buf.seek(0)
    back = read_dataset(buf)
    np.testing.assert_array_equal(back.x, data.x)
    np.testing.assert_array_equal(back.y, data.y)
    assert back.tags == data.tags and back.columns == ("x1", "x2")


@pytest.mark.parametrize("text, pattern", [
    ("", "empty"),
    ("x1,z\n1,2\n", "header"),
    ("x1,y\n1,2\n3\n", "line 3"),
    ("x1,y\n1,abc\n", "line 2, column y"),
    ("x1,y\n1,nan\n", "non-finite"),
    ("x1,y\n", "no data"),
])
def test_csv_errors_have_locations(text, pattern):
    with pytest.raises(DataFormatError, match=pattern):
        read_dataset(io.StringIO(text))


@pytest.mark.parametrize("v", [0.1, 1 / 3, 1e-300, -2.5e17, 5e-324])
def test_float_format_round_trips(v):
    assert float(format_float(v)) == v
