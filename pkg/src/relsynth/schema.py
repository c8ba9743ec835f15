"""Schema model: tables, column roles and the foreign-key links between tables."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

ATTRIBUTE_KINDS = ("numerical", "categorical", "datetime")


class SchemaError(ValueError):
    """Raised for malformed or inconsistent schema definitions."""


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # numerical | categorical | datetime | primary_key | foreign_key
    references: tuple[str, str] | None = None


@dataclass(frozen=True)
class ForeignKey:
    column: str
    references_table: str
    references_column: str


@dataclass
class TableSpec:
    name: str
    primary_key: str
    columns: list[ColumnSpec]
    foreign_keys: list[ForeignKey] = field(default_factory=list)
    dimension: bool = False
    order_column: str | None = None

    @property
    def attributes(self) -> list[ColumnSpec]:
        return [c for c in self.columns if c.kind in ATTRIBUTE_KINDS]

    def column(self, name: str) -> ColumnSpec:
        for c in self.all_columns():
            if c.name == name:
                return c
        raise KeyError(name)

    def all_columns(self) -> list[ColumnSpec]:
        """Primary key, attributes and foreign keys in output order."""
        cols = [ColumnSpec(self.primary_key, "primary_key")]
        cols += self.columns
        cols += [
            ColumnSpec(fk.column, "foreign_key", (fk.references_table, fk.references_column))
            for fk in self.foreign_keys
        ]
        return cols


@dataclass(frozen=True)
class Link:
    """A foreign-key link (child table, fk column) -> parent table."""

    child: str
    column: str
    parent: str

    @property
    def name(self) -> str:
        return f"{self.child}.{self.column}->{self.parent}"


@dataclass
class Schema:
    tables: list[TableSpec]

    def __post_init__(self):
        self._by_name = {t.name: t for t in self.tables}

    def __getitem__(self, name: str) -> TableSpec:
        return self._by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    @property
    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    @property
    def links(self) -> list[Link]:
        """All FK links L, in file order."""
        return [Link(t.name, fk.column, fk.references_table) for t in self.tables for fk in t.foreign_keys]

    @property
    def relations(self) -> list[tuple[Link, bool]]:
        """Schema-graph edge set R = L u L^-1 as (link, inverse) pairs."""
        return [(lk, inv) for lk in self.links for inv in (False, True)]

    @property
    def structural_links(self) -> list[Link]:
        """Links between non-dimension tables; these are the graph edges that get resampled."""
        return [lk for lk in self.links if not self[lk.parent].dimension]

    def dimension_links(self) -> list[Link]:
        return [lk for lk in self.links if self[lk.parent].dimension]

    def children_of(self, table: str) -> list[Link]:
        return [lk for lk in self.links if lk.parent == table]

    def parents_of(self, table: str) -> list[Link]:
        return [lk for lk in self.links if lk.child == table]

    def to_dict(self) -> dict:
        out = []
        for t in self.tables:
            d = {"name": t.name, "primary_key": t.primary_key}
            if t.dimension:
                d["dimension"] = True
            if t.order_column:
                d["order_column"] = t.order_column
            d["columns"] = [{"name": c.name, "type": c.kind} for c in t.columns]
            d["foreign_keys"] = [
                {"column": fk.column, "references_table": fk.references_table,
                 "references_column": fk.references_column}
                for fk in t.foreign_keys
            ]
            out.append(d)
        return {"tables": out}

    def fingerprint(self) -> bytes:
        """SHA-256 of the canonical JSON form; stored in checkpoints."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()


def parse_schema(doc: dict) -> Schema:
    if not isinstance(doc, dict) or not isinstance(doc.get("tables"), list):
        raise SchemaError("schema must be an object with a 'tables' list")
    tables = []
    seen = set()
    for raw in doc["tables"]:
        try:
            name = raw["name"]
            pk = raw["primary_key"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"table entry missing field {exc}") from None
        if not isinstance(pk, str):
            raise SchemaError(f"table {name!r}: composite primary keys are not supported")
        if name in seen:
            raise SchemaError(f"duplicate table name {name!r}")
        seen.add(name)
        cols = []
        colnames = {pk}
        for c in raw.get("columns", []):
            kind = c.get("type")
            if kind not in ATTRIBUTE_KINDS:
                raise SchemaError(f"{name}.{c.get('name')}: unknown column type {kind!r}")
            if c["name"] in colnames:
                raise SchemaError(f"duplicate column name {name}.{c['name']}")
            colnames.add(c["name"])
            cols.append(ColumnSpec(c["name"], kind))
        fks = []
        for f in raw.get("foreign_keys", []):
            col = f.get("column")
            if not isinstance(col, str):
                raise SchemaError(f"table {name!r}: composite foreign keys are not supported")
            if col in colnames:
                raise SchemaError(f"duplicate column name {name}.{col}")
            colnames.add(col)
            fks.append(ForeignKey(col, f["references_table"], f["references_column"]))
        order = raw.get("order_column")
        if order is not None and order not in {c.name for c in cols}:
            raise SchemaError(f"table {name!r}: order_column {order!r} is not an attribute column")
        tables.append(TableSpec(name, pk, cols, fks, bool(raw.get("dimension", False)), order))

    schema = Schema(tables)
    for t in tables:
        for fk in t.foreign_keys:
            if fk.references_table not in schema:
                raise SchemaError(
                    f"dangling reference: {t.name}.{fk.column} -> {fk.references_table} (no such table)")
            target = schema[fk.references_table]
            if fk.references_column != target.primary_key:
                raise SchemaError(
                    f"dangling reference: {t.name}.{fk.column} -> "
                    f"{fk.references_table}.{fk.references_column} is not a primary key")
            if t.dimension and not target.dimension:
                raise SchemaError(f"dimension table {t.name!r} may only reference dimension tables")
    return schema


def load_schema(path: str | Path) -> Schema:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"cannot parse schema {path}: {exc}") from None
    return parse_schema(doc)
