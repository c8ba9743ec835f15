import numpy as np
import pandas as pd
import pytest

from relsynth.database import IntegrityError, load_database
from relsynth.datasets import toy_dir
from relsynth.schema import load_schema


def write(tmp_path, store_rows, sales_rows):
    (tmp_path / "store.csv").write_text("store_id,region,size,opened\n" + "".join(r + "\n" for r in store_rows))
    (tmp_path / "sales.csv").write_text("sale_id,amount,channel,date,store_id\n"
                                        + "".join(r + "\n" for r in sales_rows))
    return load_schema(toy_dir() / "schema.json")


def test_seven_entities(tmp_path):
    schema = write(tmp_path, ["A,north,10,2020-01-01", "B,south,,2020-02-01"],
                   [f"s{i},{i}.5,web,2021-01-0{i + 1},A" for i in range(5)])
    db = load_database(schema, tmp_path)
    assert db.n_entities() == 7
    assert db.row_counts == {"store": 2, "sales": 5}
    assert np.isnan(db["store"]["size"][1])
    assert db["sales"]["date"].dtype == np.dtype("datetime64[ns]")
    e = db.entity("sales", 0)
    assert e.foreign_keys == {"store_id": "A"}


def test_integrity_violation(tmp_path):
    schema = write(tmp_path, ["A,north,10,2020-01-01"], ["s0,1,web,2021-01-01,Z"])
    with pytest.raises(IntegrityError, match="referential integrity violation"):
        load_database(schema, tmp_path)


def test_empty_child_table(tmp_path):
    schema = write(tmp_path, ["A,north,10,2020-01-01", "B,south,3,2020-02-01"], [])
    db = load_database(schema, tmp_path)
    assert db.row_counts["sales"] == 0
    from relsynth.graph import build_entity_graph
    g = build_entity_graph(db)
    rel = g.relations["sales.store_id->store"]
    assert rel.degrees(0, 2)[1].tolist() == [0, 0]


@pytest.mark.parametrize("store,sales,msg", [
    (["A,north,10,2020-01-01", "A,south,3,2020-02-01"], [], "duplicate primary key"),
    (["A,north,ten,2020-01-01"], [], "unparseable numeric"),
    (["A,north,10,yesterday"], [], "unparseable datetime"),
])
def test_load_errors(tmp_path, store, sales, msg):
    schema = write(tmp_path, store, sales)
    with pytest.raises(IntegrityError, match=msg):
        load_database(schema, tmp_path)


def test_missing_file(tmp_path):
    schema = load_schema(toy_dir() / "schema.json")
    with pytest.raises(IntegrityError, match="missing file"):
        load_database(schema, tmp_path)


def test_missing_cells_are_legal(tmp_path):
    schema = write(tmp_path, ["A,,,"], ["s0,,,,"])
    db = load_database(schema, tmp_path)
    assert db["store"]["region"][0] is None
    assert db["sales"]["store_id"][0] is None
    assert pd.isna(db["sales"]["date"][0])


def test_write_then_reload_is_identical(tmp_path, toy_db):
    toy_db.write(tmp_path / "a")
    again = load_database(toy_db.schema, tmp_path / "a")
    again.write(tmp_path / "b")
    for t in toy_db.schema.table_names:
        assert (tmp_path / "a" / f"{t}.csv").read_bytes() == (tmp_path / "b" / f"{t}.csv").read_bytes()
        pd.testing.assert_frame_equal(toy_db[t], again[t])
