"""Reversible per-column preprocessing into a mixed numeric/categorical state."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import ndtr, ndtri

from .database import Database
from .schema import Schema

MISSING_LABELS = ("present", "missing")


class EncodingError(ValueError):
    pass


class QuantileEncoder:
    """Empirical CDF followed by the inverse normal CDF.

    Tied training values share the mean of their quantile levels, so a
    constant column maps to 0.  The CDF is clipped to ``[1/(4n), 1-1/(4n)]``.
    """

    def __init__(self, values: np.ndarray | None = None):
        if values is not None:
            self.fit(values)

    def fit(self, values):
        x = np.sort(np.asarray(values, dtype=np.float64))
        if x.size == 0:
            raise EncodingError("numeric column has no non-missing values")
        n = x.size
        levels = (np.arange(n) + 0.5) / n
        uniq, inverse = np.unique(x, return_inverse=True)
        self.knots = uniq
        self.levels = np.bincount(inverse, weights=levels) / np.bincount(inverse)
        self.n = n
        return self

    @property
    def clip(self) -> float:
        return 1.0 / (4 * self.n)

    def encode(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.knots.size == 1:
            return np.zeros_like(x)
        p = np.interp(x, self.knots, self.levels)
        return ndtri(np.clip(p, self.clip, 1 - self.clip))

    def decode(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.knots.size == 1:
            return np.full_like(z, self.knots[0])
        return np.interp(ndtr(z), self.levels, self.knots)

    def to_dict(self) -> dict:
        return {"knots": self.knots.tolist(), "levels": self.levels.tolist(), "n": self.n}

    @classmethod
    def from_dict(cls, d) -> QuantileEncoder:
        enc = cls()
        enc.knots = np.asarray(d["knots"], dtype=np.float64)
        enc.levels = np.asarray(d["levels"], dtype=np.float64)
        enc.n = int(d["n"])
        return enc


@dataclass
class CategoryVocab:
    categories: list[str]

    def __post_init__(self):
        self._index = {c: i for i, c in enumerate(self.categories)}

    @property
    def size(self) -> int:
        return len(self.categories)

    @property
    def mask_index(self) -> int:
        return len(self.categories)

    def encode(self, values) -> np.ndarray:
        try:
            return np.array([self._index[v] for v in values], dtype=np.int64)
        except KeyError as exc:
            raise EncodingError(f"unknown category {exc.args[0]!r}") from None

    def decode(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        if idx.size and (idx.min() < 0 or idx.max() >= self.size):
            raise EncodingError("MASK or out-of-range index cannot be decoded")
        cats = np.array(self.categories, dtype=object)
        return cats[idx]


@dataclass
class MissingPolicy:
    mode: str = "indicator"  # indicator | impute

    def __post_init__(self):
        if self.mode not in ("indicator", "impute"):
            raise ValueError(f"unknown missing-value mode {self.mode!r}")


@dataclass
class DimensionLookup:
    """Vocabulary over a dimension table's primary keys; the table itself is copied verbatim."""

    table: str
    vocab: CategoryVocab
    rows: pd.DataFrame | None = None


@dataclass
class ColumnEncoder:
    name: str
    kind: str  # numerical | datetime | categorical | dimension
    quantile: QuantileEncoder | None = None
    vocab: CategoryVocab | None = None
    mean: float = 0.0
    integer: bool = False
    origin: int = 0  # datetime: epoch seconds of the column minimum
    date_only: bool = False
    nullable: bool = False
    impute: str | None = None  # categorical fill value used when an indicator carries missingness
    dimension: str | None = None

    @property
    def numeric(self) -> bool:
        return self.kind in ("numerical", "datetime")


@dataclass
class EncodedTable:
    num: np.ndarray  # (n, M_num) float64
    cat: np.ndarray  # (n, M_cat) int64, MASK == vocab size


@dataclass
class TableEncoder:
    table: str
    columns: list[ColumnEncoder]
    indicators: list[str] = field(default_factory=list)  # columns with a missingness indicator

    @property
    def numeric_columns(self) -> list[ColumnEncoder]:
        return [c for c in self.columns if c.numeric]

    @property
    def categorical_columns(self) -> list[ColumnEncoder]:
        return [c for c in self.columns if not c.numeric]

    @property
    def cat_sizes(self) -> list[int]:
        return [c.vocab.size for c in self.categorical_columns] + [2] * len(self.indicators)

    @property
    def cat_names(self) -> list[str]:
        return [c.name for c in self.categorical_columns] + [f"{c}__missing" for c in self.indicators]

    @property
    def num_names(self) -> list[str]:
        return [c.name for c in self.numeric_columns]

    @property
    def dimension_of_cat(self) -> list[str | None]:
        """Per categorical slot, the dimension table it indexes (None for ordinary categoricals)."""
        return [c.dimension for c in self.categorical_columns] + [None] * len(self.indicators)

    def encode(self, frame: pd.DataFrame) -> EncodedTable:
        n = len(frame)
        nums, cats = [], []
        for c in self.numeric_columns:
            nums.append(c.quantile.encode(_to_number(c, frame[c.name], fill=True)))
        for c in self.categorical_columns:
            vals = frame[c.name].to_numpy(dtype=object)
            vals = np.array([_fill_cat(c, v) for v in vals], dtype=object)
            cats.append(c.vocab.encode(vals))
        for name in self.indicators:
            cats.append(_isnull(frame[name]).astype(np.int64))
        num = np.stack(nums, axis=1) if nums else np.zeros((n, 0))
        cat = np.stack(cats, axis=1) if cats else np.zeros((n, 0), dtype=np.int64)
        return EncodedTable(num.astype(np.float64), cat.astype(np.int64))

    def decode(self, enc: EncodedTable) -> pd.DataFrame:
        n = enc.num.shape[0] if enc.num.size else enc.cat.shape[0]
        out = {}
        ind = {name: enc.cat[:, len(self.categorical_columns) + j].astype(bool)
               for j, name in enumerate(self.indicators)}
        ni = ci = 0
        for c in self.columns:
            if c.numeric:
                vals = c.quantile.decode(enc.num[:, ni])
                ni += 1
                if c.integer:
                    vals = np.round(vals)
                if c.kind == "datetime":
                    secs = np.round(vals).astype(np.int64) + c.origin
                    col = pd.Series(pd.to_datetime(secs, unit="s"))
                    if c.date_only:
                        col = col.dt.normalize()
                    if c.name in ind:
                        col[ind[c.name]] = pd.NaT
                else:
                    col = pd.Series(vals.astype(np.float64))
                    if c.name in ind:
                        col[ind[c.name]] = np.nan
            else:
                col = pd.Series(c.vocab.decode(enc.cat[:, ci]), dtype=object)
                ci += 1
                if c.impute == _NA:
                    col = col.where(col != _NA, None)
                if c.name in ind:
                    col[ind[c.name]] = None
            out[c.name] = col.to_numpy()
        frame = pd.DataFrame(out, index=pd.RangeIndex(n))
        for c in self.columns:
            if c.kind == "categorical" or c.kind == "dimension":
                frame[c.name] = frame[c.name].astype(object)
        return frame


_NA = "__missing__"


def _isnull(series: pd.Series) -> np.ndarray:
    return series.isna().to_numpy()


def _to_number(c: ColumnEncoder, series: pd.Series, fill: bool) -> np.ndarray:
    if c.kind == "datetime":
        mask = series.isna().to_numpy()
        secs = np.zeros(len(series))
        if (~mask).any():
            secs[~mask] = series[~mask].astype("datetime64[s]").astype(np.int64).to_numpy() - c.origin
        vals = np.where(mask, np.nan, secs)
    else:
        vals = series.to_numpy(dtype=np.float64)
    if fill:
        vals = np.where(np.isnan(vals), c.mean, vals)
    return vals


def _fill_cat(c: ColumnEncoder, v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return c.impute
    return v


@dataclass
class EncoderSet:
    policy: MissingPolicy
    tables: dict[str, TableEncoder]
    dimensions: dict[str, DimensionLookup]

    def encode(self, db: Database) -> dict[str, EncodedTable]:
        from .graph import attribute_frame
        return {name: enc.encode(attribute_frame(db, name)) for name, enc in self.tables.items()}

    def decode(self, encoded: dict[str, EncodedTable]) -> dict[str, pd.DataFrame]:
        return {name: self.tables[name].decode(e) for name, e in encoded.items()}

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.mode,
            "dimensions": {k: d.vocab.categories for k, d in self.dimensions.items()},
            "tables": {
                name: {
                    "indicators": t.indicators,
                    "columns": [_column_to_dict(c) for c in t.columns],
                }
                for name, t in self.tables.items()
            },
        }

    @classmethod
    def from_dict(cls, d) -> EncoderSet:
        dims = {k: DimensionLookup(k, CategoryVocab(list(v))) for k, v in d["dimensions"].items()}
        tables = {
            name: TableEncoder(name, [_column_from_dict(c) for c in t["columns"]], list(t["indicators"]))
            for name, t in d["tables"].items()
        }
        return cls(MissingPolicy(d["policy"]), tables, dims)


def _column_to_dict(c: ColumnEncoder) -> dict:
    d = {"name": c.name, "kind": c.kind, "mean": c.mean, "integer": c.integer, "origin": c.origin,
         "date_only": c.date_only, "nullable": c.nullable, "impute": c.impute, "dimension": c.dimension}
    if c.quantile is not None:
        d["quantile"] = c.quantile.to_dict()
    if c.vocab is not None:
        d["vocab"] = c.vocab.categories
    return d


def _column_from_dict(d) -> ColumnEncoder:
    return ColumnEncoder(
        d["name"], d["kind"],
        QuantileEncoder.from_dict(d["quantile"]) if "quantile" in d else None,
        CategoryVocab(list(d["vocab"])) if "vocab" in d else None,
        d["mean"], d["integer"], d["origin"], d["date_only"], d["nullable"], d["impute"], d["dimension"])


def _fit_numeric(name, kind, series: pd.Series) -> ColumnEncoder:
    c = ColumnEncoder(name, kind, nullable=bool(series.isna().any()))
    if kind == "datetime":
        present = series.dropna()
        if present.empty:
            raise EncodingError(f"{name}: numeric column with zero non-missing values")
        secs = present.astype("datetime64[s]").astype(np.int64).to_numpy()
        c.origin = int(secs.min())
        c.date_only = bool((present == present.dt.normalize()).all())
        c.integer = True
        vals = (secs - c.origin).astype(np.float64)
    else:
        vals = series.dropna().to_numpy(dtype=np.float64)
        if vals.size == 0:
            raise EncodingError(f"{name}: numeric column with zero non-missing values")
        c.integer = bool(np.all(vals == np.round(vals)))
    c.mean = float(vals.mean())
    c.quantile = QuantileEncoder(vals)
    return c


def _fit_categorical(name, series: pd.Series, policy: MissingPolicy, vocab=None, dimension=None):
    nullable = bool(series.isna().any())
    c = ColumnEncoder(name, "dimension" if dimension else "categorical", nullable=nullable, dimension=dimension)
    present = series.dropna()
    if vocab is not None:
        cats = list(vocab.categories)
    else:
        cats = sorted(set(present.astype(str)))
    if nullable:
        if policy.mode == "indicator" and len(present):
            counts = present.value_counts()
            c.impute = str(sorted(counts[counts == counts.max()].index)[0])
        else:
            c.impute = _NA
            cats = cats + [_NA]
    c.vocab = CategoryVocab(cats) if vocab is None or c.impute == _NA else vocab
    return c


def fit_encoders(db: Database, policy: MissingPolicy | None = None) -> EncoderSet:
    """One encoder per attribute column of every non-dimension table; column order is schema order."""
    policy = policy or MissingPolicy()
    schema: Schema = db.schema
    dims = {}
    for t in schema.tables:
        if t.dimension:
            keys = [str(k) for k in db.tables[t.name][t.primary_key]]
            dims[t.name] = DimensionLookup(t.name, CategoryVocab(keys), db.tables[t.name])
    tables = {}
    for t in schema.tables:
        if t.dimension:
            continue
        frame = db.tables[t.name]
        cols, indicators = [], []
        for spec in t.attributes:
            series = frame[spec.name]
            if spec.kind in ("numerical", "datetime"):
                c = _fit_numeric(spec.name, spec.kind, series)
            else:
                c = _fit_categorical(spec.name, series, policy)
            cols.append(c)
        for fk in t.foreign_keys:
            if fk.references_table in dims:
                c = _fit_categorical(fk.column, frame[fk.column], policy,
                                     vocab=dims[fk.references_table].vocab, dimension=fk.references_table)
                cols.append(c)
        if policy.mode == "indicator":
            indicators = [c.name for c in cols if c.nullable]
        tables[t.name] = TableEncoder(t.name, cols, indicators)
    return EncoderSet(policy, tables, dims)
