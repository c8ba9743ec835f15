"""Heterogeneous entity graph built from a database, the junction-table transform and reassembly."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .database import Database, IntegrityError, format_table, validate_database
from .schema import Link, Schema


@dataclass
class Relation:
    """Typed forward edges ``src (in side0) -> dst (in side1)``; the inverse edges are the mirror image.

    For ``kind == "fk"`` side0 is the child table and ``edge_ids`` equals ``src``.
    For ``kind == "m2m"`` the relation replaces a junction table and ``edge_ids``
    holds the junction row each edge came from.
    """

    name: str
    kind: str
    side0: str
    side1: str
    columns: tuple[str, ...]
    src: np.ndarray
    dst: np.ndarray
    edge_ids: np.ndarray

    @property
    def m(self) -> int:
        return len(self.src)

    def degrees(self, n0: int, n1: int) -> tuple[np.ndarray, np.ndarray]:
        return (np.bincount(self.src, minlength=n0).astype(np.int64),
                np.bincount(self.dst, minlength=n1).astype(np.int64))

    def inverse(self) -> tuple[np.ndarray, np.ndarray]:
        return self.dst, self.src

    def __eq__(self, other):
        if not isinstance(other, Relation):
            return NotImplemented
        return (self.name, self.kind, self.side0, self.side1, self.columns) == \
            (other.name, other.kind, other.side0, other.side1, other.columns) and \
            np.array_equal(self.src, other.src) and np.array_equal(self.dst, other.dst) and \
            np.array_equal(self.edge_ids, other.edge_ids)


@dataclass
class EntityGraph:
    schema: Schema
    node_counts: dict[str, int]
    relations: dict[str, Relation]
    keys: dict[str, np.ndarray] = field(default_factory=dict)
    attributes: dict[str, pd.DataFrame] = field(default_factory=dict)

    def node_type(self, table: str) -> int:
        return list(self.node_counts).index(table)

    @property
    def n_nodes(self) -> int:
        return sum(self.node_counts.values())

    def offsets(self) -> dict[str, int]:
        """Global node id of row 0 of each table."""
        out, acc = {}, 0
        for name, n in self.node_counts.items():
            out[name] = acc
            acc += n
        return out

    def structural(self) -> list[Relation]:
        """Relations between non-dimension tables (the resampled edge sets)."""
        return [r for r in self.relations.values()
                if not self.schema[r.side1].dimension and not self.schema[r.side0].dimension]

    def copy(self) -> EntityGraph:
        return EntityGraph(
            self.schema, dict(self.node_counts),
            {k: Relation(r.name, r.kind, r.side0, r.side1, r.columns, r.src.copy(), r.dst.copy(),
                         r.edge_ids.copy()) for k, r in self.relations.items()},
            dict(self.keys), dict(self.attributes))

    def check(self) -> None:
        """Every edge endpoint exists."""
        for r in self.relations.values():
            for arr, side in ((r.src, r.side0), (r.dst, r.side1)):
                if len(arr) and (arr.min() < 0 or arr.max() >= self.node_counts[side]):
                    raise IntegrityError(f"relation {r.name}: edge endpoint outside {side}")

    def __eq__(self, other):
        if not isinstance(other, EntityGraph):
            return NotImplemented
        if self.node_counts != other.node_counts or self.relations != other.relations:
            return False
        if set(self.keys) != set(other.keys) or set(self.attributes) != set(other.attributes):
            return False
        if any(not np.array_equal(self.keys[k], other.keys[k]) for k in self.keys):
            return False
        return all(self.attributes[k].equals(other.attributes[k]) for k in self.attributes)


def attribute_frame(db: Database, table: str) -> pd.DataFrame:
    """Attribute columns plus foreign keys into dimension tables (those are modeled as categoricals)."""
    spec = db.schema[table]
    cols = [c.name for c in spec.attributes]
    cols += [fk.column for fk in spec.foreign_keys if db.schema[fk.references_table].dimension]
    return db.tables[table][cols].reset_index(drop=True)


def build_entity_graph(db: Database) -> EntityGraph:
    schema = db.schema
    counts = {t.name: len(db.tables[t.name]) for t in schema.tables}
    keys = {t.name: db.tables[t.name][t.primary_key].to_numpy(dtype=object) for t in schema.tables}
    index = {name: {k: i for i, k in enumerate(keys[name])} for name in keys}
    relations = {}
    for lk in schema.links:
        fk_vals = db.tables[lk.child][lk.column].to_numpy(dtype=object)
        lookup = index[lk.parent]
        src, dst = [], []
        for i, v in enumerate(fk_vals):
            if v is None:
                continue
            src.append(i)
            dst.append(lookup[v])
        src = np.asarray(src, dtype=np.int64)
        relations[lk.name] = Relation(lk.name, "fk", lk.child, lk.parent, (lk.column,), src,
                                      np.asarray(dst, dtype=np.int64), src.copy())
    attrs = {t.name: attribute_frame(db, t.name) for t in schema.tables}
    return EntityGraph(schema, counts, relations, keys, attrs)


@dataclass
class JunctionRecord:
    table: str
    parents: tuple[str, str]
    links: tuple[Link, Link]
    n_rows: int
    keys: np.ndarray | None
    attributes: pd.DataFrame | None
    relations: tuple[Relation, Relation]


@dataclass
class M2MTransformLog:
    records: list[JunctionRecord] = field(default_factory=list)

    @property
    def tables(self) -> list[str]:
        return [r.table for r in self.records]


def junction_tables(schema: Schema, g: EntityGraph | None = None) -> list[str]:
    """Non-dimension tables with exactly two structural parents and no children."""
    out = []
    for t in schema.tables:
        if t.dimension or schema.children_of(t.name):
            continue
        parents = [lk for lk in schema.parents_of(t.name) if not schema[lk.parent].dimension]
        if len(parents) != 2:
            continue
        if g is not None:
            n = g.node_counts[t.name]
            if any(g.relations[lk.name].m != n for lk in parents):
                continue  # null keys cannot be represented as an edge
        out.append(t.name)
    return out


def m2m_transform(g: EntityGraph) -> tuple[EntityGraph, M2MTransformLog]:
    schema = g.schema
    out = g.copy()
    log = M2MTransformLog()
    for name in junction_tables(schema, g):
        links = [lk for lk in schema.parents_of(name) if not schema[lk.parent].dimension]
        r0, r1 = (out.relations.pop(lk.name) for lk in links)
        n = out.node_counts.pop(name)
        # FK relations are stored in row order, so src == edge_ids == row index.
        rows = r0.src
        pos1 = np.empty(n, dtype=np.int64)
        pos1[r1.src] = r1.dst
        edge = Relation(name, "m2m", links[0].parent, links[1].parent, (links[0].column, links[1].column),
                        r0.dst.copy(), pos1[rows], rows.copy())
        out.relations[name] = edge
        log.records.append(JunctionRecord(
            name, (links[0].parent, links[1].parent), (links[0], links[1]), n,
            out.keys.pop(name, None), out.attributes.pop(name, None), (r0, r1)))
    return out, log


def m2m_invert(g: EntityGraph, log: M2MTransformLog) -> EntityGraph:
    """Restore junction tables; their rows are the m2m edges ordered by edge id."""
    out = g.copy()
    for rec in reversed(log.records):
        edge = out.relations.pop(rec.table)
        order = np.argsort(edge.edge_ids, kind="stable")
        n = rec.n_rows
        if len(order) != n:
            raise IntegrityError(f"junction {rec.table}: {len(order)} edges for {n} rows")
        rows = edge.edge_ids[order]
        out.node_counts[rec.table] = n
        for lk, side, original in zip(rec.links, (edge.src, edge.dst), rec.relations):
            out.relations[lk.name] = Relation(lk.name, "fk", rec.table, lk.parent, (lk.column,),
                                              rows.copy(), side[order].copy(), rows.copy())
        if rec.keys is not None:
            out.keys[rec.table] = rec.keys
        if rec.attributes is not None:
            out.attributes[rec.table] = rec.attributes
    # restore schema order so that invert(transform(g)) == g including iteration order
    out.node_counts = {t: out.node_counts[t] for t in g.schema.table_names if t in out.node_counts}
    names = [lk.name for lk in g.schema.links]
    extra = [k for k in out.relations if k not in names]
    out.relations = {k: out.relations[k] for k in names + extra if k in out.relations}
    return out


def assemble_database(g: EntityGraph, attrs: dict[str, pd.DataFrame], schema: Schema) -> Database:
    """Materialize tables from a graph: fresh dense primary keys, FK columns from edges."""
    if any(r.kind != "fk" for r in g.relations.values()):
        raise IntegrityError("assemble_database needs a graph without junction edges (invert first)")
    tables = {}
    for spec in schema.tables:
        n = g.node_counts[spec.name]
        frame = attrs.get(spec.name)
        if spec.dimension:
            if frame is None or spec.primary_key not in frame:
                raise IntegrityError(f"dimension table {spec.name}: rows must be supplied verbatim")
            tables[spec.name] = frame[[c.name for c in spec.all_columns()]].reset_index(drop=True)
            continue
        if frame is None or len(frame) != n:
            raise IntegrityError(f"{spec.name}: node with missing attribute (got "
                                 f"{0 if frame is None else len(frame)} rows for {n} nodes)")
        data = {spec.primary_key: np.array([str(i) for i in range(n)], dtype=object)}
        for c in spec.attributes:
            if c.name not in frame:
                raise IntegrityError(f"{spec.name}: node with missing attribute {c.name!r}")
            data[c.name] = frame[c.name].to_numpy()
        for fk in spec.foreign_keys:
            if schema[fk.references_table].dimension:
                if fk.column not in frame:
                    raise IntegrityError(f"{spec.name}: node with missing attribute {fk.column!r}")
                data[fk.column] = frame[fk.column].to_numpy(dtype=object)
                continue
            rel = g.relations[f"{spec.name}.{fk.column}->{fk.references_table}"]
            if len(rel.src) and np.bincount(rel.src, minlength=n).max() > 1:
                raise IntegrityError(f"{rel.name}: node has more forward edges than FK columns")
            col = np.full(n, None, dtype=object)
            parent_keys = _output_keys(g, schema, fk.references_table)
            col[rel.src] = parent_keys[rel.dst]
            data[fk.column] = col
        tables[spec.name] = pd.DataFrame(data)[[c.name for c in spec.all_columns()]]
    db = Database(schema, tables)
    validate_database(db)
    return db


def _output_keys(g: EntityGraph, schema: Schema, table: str) -> np.ndarray:
    if schema[table].dimension:
        return np.asarray(g.keys[table], dtype=object)
    return np.array([str(i) for i in range(g.node_counts[table])], dtype=object)


def dimension_frames(db: Database) -> dict[str, pd.DataFrame]:
    return {t.name: db.tables[t.name].copy() for t in db.schema.tables if t.dimension}


def relabel_keys(db: Database) -> Database:
    """Replace non-dimension keys by their dense row index (the canonical form used on output)."""
    schema = db.schema
    maps = {}
    for t in schema.tables:
        if t.dimension:
            continue
        pk = db.tables[t.name][t.primary_key]
        maps[t.name] = {k: str(i) for i, k in enumerate(pk)}
    tables = {}
    for t in schema.tables:
        frame = db.tables[t.name].copy()
        if not t.dimension:
            frame[t.primary_key] = frame[t.primary_key].map(maps[t.name]).astype(object)
            for fk in t.foreign_keys:
                if fk.references_table in maps:
                    m = maps[fk.references_table]
                    frame[fk.column] = frame[fk.column].map(lambda v: None if v is None else m[v]).astype(object)
        tables[t.name] = frame
    return Database(schema, tables)


def roundtrip_check(db: Database) -> tuple[bool, str]:
    """load -> build -> assemble with identity attributes must reproduce the database up to key relabeling."""
    g = build_entity_graph(db)
    g2, log = m2m_transform(g)
    g3 = m2m_invert(g2, log)
    if g3 != g:
        return False, "junction transform is not invertible on this graph"
    attrs = dict(g.attributes)
    attrs.update(dimension_frames(db))
    rebuilt = assemble_database(g3, attrs, db.schema)
    expected = relabel_keys(db)
    for t in db.schema.tables:
        a = format_table(t, expected.tables[t.name])
        b = format_table(t, rebuilt.tables[t.name])
        if not a.reset_index(drop=True).equals(b.reset_index(drop=True)):
            return False, f"table {t.name} differs after round trip"
    return True, "ok"
