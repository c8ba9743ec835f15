"""In-memory relational database: CSV ingestion, typing and referential-integrity checks."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .schema import Schema, TableSpec

log = logging.getLogger(__name__)


class IntegrityError(ValueError):
    """Raised when data violates the schema or referential integrity."""


@dataclass(frozen=True)
class Entity:
    table: str
    primary_key: str
    foreign_keys: dict
    attributes: tuple


class Database:
    """Typed tables keyed by name.

    Keys are kept as strings (opaque ids, ``None`` for a null foreign key).
    Numerical columns are float64 with NaN for missing, categoricals are
    object columns of str/None, datetimes are ``datetime64[ns]``.
    """

    def __init__(self, schema: Schema, tables: dict[str, pd.DataFrame]):
        self.schema = schema
        self.tables = tables

    def __getitem__(self, name: str) -> pd.DataFrame:
        return self.tables[name]

    @property
    def row_counts(self) -> dict[str, int]:
        return {name: len(self.tables[name]) for name in self.schema.table_names}

    def n_entities(self) -> int:
        return sum(self.row_counts.values())

    def entity(self, table: str, i: int) -> Entity:
        spec = self.schema[table]
        row = self.tables[table].iloc[i]
        return Entity(
            table,
            row[spec.primary_key],
            {fk.column: row[fk.column] for fk in spec.foreign_keys},
            tuple(row[c.name] for c in spec.attributes),
        )

    def validate(self) -> None:
        validate_database(self)

    def write(self, directory: str | Path) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for spec in self.schema.tables:
            frame = format_table(spec, self.tables[spec.name])
            frame.to_csv(out / f"{spec.name}.csv", index=False, lineterminator="\n")


def _parse_numeric(spec: TableSpec, col: str, raw: pd.Series) -> pd.Series:
    blank = raw == ""
    vals = pd.to_numeric(raw.where(~blank, None), errors="coerce")
    bad = vals.isna() & ~blank
    if bad.any():
        cell = raw[bad].iloc[0]
        raise IntegrityError(f"{spec.name}.{col}: unparseable numeric cell {cell!r}")
    return vals.astype(np.float64)


def _parse_datetime(spec: TableSpec, col: str, raw: pd.Series) -> pd.Series:
    blank = raw == ""
    try:
        vals = pd.to_datetime(raw.where(~blank, None), format="ISO8601", utc=True)
    except (ValueError, TypeError) as exc:
        raise IntegrityError(f"{spec.name}.{col}: unparseable datetime ({exc})") from None
    return vals.dt.tz_localize(None).astype("datetime64[ns]")


def _parse_key(raw: pd.Series) -> pd.Series:
    return raw.astype(object).where(raw != "", None)


def type_table(spec: TableSpec, raw: pd.DataFrame) -> pd.DataFrame:
    """Convert a frame of raw strings into typed columns, in output column order."""
    missing = [c.name for c in spec.all_columns() if c.name not in raw.columns]
    if missing:
        raise IntegrityError(f"{spec.name}: missing columns {missing}")
    out = {}
    for c in spec.all_columns():
        col = raw[c.name].astype(str)
        if c.kind == "numerical":
            out[c.name] = _parse_numeric(spec, c.name, col)
        elif c.kind == "datetime":
            out[c.name] = _parse_datetime(spec, c.name, col)
        elif c.kind == "categorical":
            out[c.name] = col.astype(object).where(col != "", None)
        else:
            out[c.name] = _parse_key(col)
    return pd.DataFrame(out, index=pd.RangeIndex(len(raw)))


def validate_database(db: Database) -> None:
    """Primary keys unique and non-null, every non-null foreign key resolves."""
    keysets = {}
    for spec in db.schema.tables:
        frame = db.tables.get(spec.name)
        if frame is None:
            raise IntegrityError(f"missing table {spec.name!r}")
        pk = frame[spec.primary_key]
        if pk.isna().any():
            raise IntegrityError(f"{spec.name}: null primary key")
        if pk.duplicated().any():
            dup = pk[pk.duplicated()].iloc[0]
            raise IntegrityError(f"{spec.name}: duplicate primary key {dup!r}")
        keysets[spec.name] = set(pk)
    for spec in db.schema.tables:
        frame = db.tables[spec.name]
        for fk in spec.foreign_keys:
            vals = frame[fk.column].dropna()
            bad = ~vals.isin(keysets[fk.references_table])
            if bad.any():
                raise IntegrityError(
                    f"referential integrity violation: {spec.name}.{fk.column}={vals[bad].iloc[0]!r} "
                    f"not found in {fk.references_table}")


def load_database(schema: Schema, directory: str | Path) -> Database:
    root = Path(directory)
    tables = {}
    for spec in schema.tables:
        path = root / f"{spec.name}.csv"
        if not path.exists():
            raise IntegrityError(f"missing file {path}")
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
        tables[spec.name] = type_table(spec, raw)
    db = Database(schema, tables)
    validate_database(db)
    log.info("loaded %d entities from %s", db.n_entities(), root)
    return db


def _format_number(values: pd.Series) -> pd.Series:
    finite = values.dropna()
    if len(finite) and np.all(np.isfinite(finite)) and np.all(finite == np.round(finite)) \
            and np.all(np.abs(finite) < 2**53):
        return values.map(lambda v: "" if pd.isna(v) else str(int(v)))
    return values.map(lambda v: "" if pd.isna(v) else repr(float(v)))


def _format_datetime(values: pd.Series) -> pd.Series:
    finite = values.dropna()
    date_only = len(finite) > 0 and bool((finite == finite.dt.normalize()).all())
    fmt = "%Y-%m-%d" if date_only else "%Y-%m-%dT%H:%M:%S"
    return values.map(lambda v: "" if pd.isna(v) else v.strftime(fmt))


def format_table(spec: TableSpec, frame: pd.DataFrame) -> pd.DataFrame:
    """Render a typed table as strings (empty string for missing)."""
    out = {}
    for c in spec.all_columns():
        col = frame[c.name]
        if c.kind == "numerical":
            out[c.name] = _format_number(col)
        elif c.kind == "datetime":
            out[c.name] = _format_datetime(col)
        else:
            out[c.name] = col.map(lambda v: "" if v is None or (isinstance(v, float) and np.isnan(v)) else str(v))
    return pd.DataFrame(out)
