import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from relsynth.datasets import _build, _keys, _table
from relsynth.encoders import (CategoryVocab, EncoderSet, EncodingError, MissingPolicy, QuantileEncoder,
                               fit_encoders)
from relsynth.graph import attribute_frame

from conftest import ALL_DATASETS

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_quantile_levels_of_four_values():
    q = QuantileEncoder([1, 2, 3, 4])
    # frozen from scipy.stats.norm.ppf at the midpoint levels 1/8, 3/8, 5/8, 7/8
    expected = stats.norm.ppf([0.125, 0.375, 0.625, 0.875])
    np.testing.assert_allclose(q.encode([1, 2, 3, 4]), expected, rtol=0, atol=1e-12)
    np.testing.assert_allclose(expected, [-1.1503493803760079, -0.3186393639643752,
                                          0.3186393639643752, 1.1503493803760079], atol=1e-15)


def test_constant_column():
    q = QuantileEncoder([5, 5, 5])
    assert q.encode([5.0]).tolist() == [0.0]
    assert q.decode([-3.0, 0.0, 7.0]).tolist() == [5.0, 5.0, 5.0]


def test_round_trip_on_training_values():
    q = QuantileEncoder([10, 20, 30, 40])
    assert q.decode(q.encode([20.0]))[0] == pytest.approx(20.0, abs=1e-9)


@given(st.lists(finite, min_size=1, max_size=40))
def test_quantile_properties(values):
    q = QuantileEncoder(values)
    x = np.sort(np.asarray(values))
    z = q.encode(x)
    assert np.all(np.diff(z) >= 0)
    back = q.decode(z)
    np.testing.assert_allclose(back, x, atol=1e-9 * max(1.0, np.abs(x).max()))
    probe = q.decode(np.linspace(-8, 8, 33))
    assert probe.min() >= x.min() and probe.max() <= x.max()
    assert np.all(np.isfinite(q.encode([x.min() - 1, x.max() + 1])))


def test_encoded_training_column_is_standard_normal():
    rng = np.random.default_rng(0)
    for values in (rng.exponential(size=2000), rng.integers(0, 10**6, 1500).astype(float)):
        z = QuantileEncoder(values).encode(values)
        assert stats.kstest(z, "norm").statistic < 0.05


def test_vocab():
    v = CategoryVocab(["blue", "red"])
    assert v.mask_index == 2
    assert v.encode(["red", "blue"]).tolist() == [1, 0]
    with pytest.raises(EncodingError, match="unknown category"):
        v.encode(["green"])
    with pytest.raises(EncodingError):
        v.decode([2])


def small_db(price, color, when=None):
    cols = [("price", "numerical"), ("color", "categorical")]
    data = {"item_id": _keys(len(price)), "price": price, "color": color}
    if when is not None:
        cols.append(("when", "datetime"))
        data["when"] = when
    return _build({"tables": [_table("item", "item_id", cols)]}, {"item": data})


def test_row_encoding():
    db = small_db([20.0, 10.0, 30.0], ["red", "blue", "red"])
    enc = fit_encoders(db)
    e = enc.encode(db)["item"]
    t = enc.tables["item"]
    assert e.num.shape == (3, 1) and e.cat.shape == (3, 1)
    assert e.cat[0, 0] == t.categorical_columns[0].vocab.encode(["red"])[0]
    assert e.num[0, 0] == pytest.approx(0.0)


def test_indicator_mode_restores_missingness():
    db = small_db([20.0, np.nan, 30.0, 40.0], ["red", None, "blue", "red"])
    enc = fit_encoders(db, MissingPolicy("indicator"))
    t = enc.tables["item"]
    assert t.indicators == ["price", "color"]
    e = enc.encode(db)["item"]
    price = t.numeric_columns[0]
    assert price.mean == pytest.approx(30.0)
    assert t.numeric_columns[0].quantile.decode(e.num[1, 0]) == pytest.approx(30.0)
    assert e.cat[1, 1:].tolist() == [1, 1]  # both indicators say "missing"
    back = t.decode(e)
    assert back["price"].isna().tolist() == [False, True, False, False]
    assert back["color"].tolist() == ["red", None, "blue", "red"]


def test_impute_mode_new_category():
    db = small_db([20.0, np.nan, 30.0], ["red", None, "blue"])
    enc = fit_encoders(db, MissingPolicy("impute"))
    t = enc.tables["item"]
    assert t.indicators == []
    assert t.categorical_columns[0].vocab.size == 3
    back = t.decode(enc.encode(db)["item"])
    assert back["color"].tolist() == ["red", None, "blue"]
    assert back["price"].tolist()[1] == pytest.approx(25.0)


def test_datetime_seconds_offset():
    db = small_db([1.0, 2.0], ["a", "b"], pd.to_datetime(["1970-01-01T00:00:00", "1970-01-02T00:00:00"]))
    enc = fit_encoders(db)
    c = enc.tables["item"].numeric_columns[1]
    assert c.kind == "datetime"
    from relsynth.encoders import _to_number
    secs = _to_number(c, db["item"]["when"], fill=False)
    assert secs.tolist() == [0.0, 86400.0]


def test_all_missing_numeric_column_rejected():
    db = small_db([np.nan, np.nan], ["a", "b"])
    with pytest.raises(EncodingError, match="zero non-missing"):
        fit_encoders(db)


def test_dimension_reference_is_categorical(tiny_db):
    enc = fit_encoders(tiny_db)
    assert "color" not in enc.tables
    post = enc.tables["post"]
    assert post.cat_names[:2] == ["topic", "color_id"]
    assert post.dimension_of_cat[:2] == [None, "color"]
    assert enc.dimensions["color"].vocab.categories == ["c0", "c1"]


@pytest.mark.parametrize("name", ALL_DATASETS)
@pytest.mark.parametrize("mode", ["indicator", "impute"])
def test_round_trip_databases(name, mode, dataset_cache):
    db = dataset_cache(name)
    enc = fit_encoders(db, MissingPolicy(mode))
    encoded = enc.encode(db)
    decoded = enc.decode(encoded)
    for table, frame in decoded.items():
        orig = attribute_frame(db, table)
        for col in orig.columns:
            a, b = orig[col], frame[col]
            if mode == "indicator" or not a.isna().any():
                assert a.isna().tolist() == b.isna().tolist(), (table, col)
            keep = a.notna() & b.notna()
            if pd.api.types.is_numeric_dtype(a):
                np.testing.assert_allclose(b[keep].to_numpy(float), a[keep].to_numpy(float), rtol=1e-9, atol=1e-6)
            elif pd.api.types.is_datetime64_any_dtype(a):
                assert (a[keep] == b[keep]).all()
            else:
                assert a[keep].tolist() == b[keep].tolist()


def test_serialization_round_trip(toy_db):
    enc = fit_encoders(toy_db)
    again = EncoderSet.from_dict(enc.to_dict())
    a, b = enc.encode(toy_db), again.encode(toy_db)
    for t in a:
        assert np.array_equal(a[t].num, b[t].num) and np.array_equal(a[t].cat, b[t].cat)
