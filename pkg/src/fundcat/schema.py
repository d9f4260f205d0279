"""Fund-universe data model and CSV ingestion.

The universe is stored column-wise: a float matrix for percentage and
count features (NaN marks a missing cell) and an object matrix for
categorical features (``None`` marks a missing cell). ``FundRecord`` views
are materialised on demand.

CSV contract::

    fund_id,fund_type,global_category,<group>::<feature>,...

Empty cells are missing values. ``fund_type`` is one of ``ETF``, ``MM``,
``OE``. Files destined for prediction may omit ``global_category``.
"""

from __future__ import annotations

import csv
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

PERCENTAGE = "percentage"
COUNT = "count"
CATEGORICAL = "categorical"
KINDS = (PERCENTAGE, COUNT, CATEGORICAL)

FUND_TYPES = ("ETF", "MM", "OE")
LEADING_COLUMNS = ("fund_id", "fund_type", "global_category")
SEPARATOR = "::"


class IngestError(ValueError):
    """Raised for malformed or invalid fund-universe data."""


class SchemaError(IngestError):
    """Raised when a header or column set does not match the schema."""


@dataclass(frozen=True)
class FeatureGroup:
    name: str
    kind: str
    declared_arity: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.declared_arity < 0:
            raise ValueError("declared_arity must be nonnegative")


# Table of holdings groups as extracted from the vendor data.
DEFAULT_SCHEMA: tuple[FeatureGroup, ...] = (
    FeatureGroup("Asset Allocation", PERCENTAGE, 8),
    FeatureGroup("Benchmark", CATEGORICAL, 2),
    FeatureGroup("Coupons", PERCENTAGE, 4),
    FeatureGroup("Calculated Credit Rating", PERCENTAGE, 7),
    FeatureGroup("Equity Industry", PERCENTAGE, 148),
    FeatureGroup("Equity Country", PERCENTAGE, 53),
    FeatureGroup("Equity Region", PERCENTAGE, 16),
    FeatureGroup("Equity Style", PERCENTAGE, 15),
    FeatureGroup("Fixed-Inc Secondary Sector", PERCENTAGE, 183),
    FeatureGroup("Fixed-Inc Country", PERCENTAGE, 54),
    FeatureGroup("Fixed-Inc Region", PERCENTAGE, 3),
    FeatureGroup("Fixed-Inc Sector Government", PERCENTAGE, 68),
    FeatureGroup("Holdings", COUNT, 4),
    FeatureGroup("Market Cap", PERCENTAGE, 12),
    FeatureGroup("Maturity", PERCENTAGE, 13),
    FeatureGroup("MSCI Country", PERCENTAGE, 156),
    FeatureGroup("Muni", PERCENTAGE, 59),
    FeatureGroup("Product Involvement", PERCENTAGE, 15),
)


@dataclass(frozen=True)
class FundRecord:
    fund_id: str
    fund_type: str
    category: str | None
    features: Mapping[tuple[str, str], float | str | None]


@dataclass(frozen=True)
class CategoryVocabulary:
    """Sorted category names with their record counts."""

    names: tuple[str, ...]
    counts: tuple[int, ...]
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "CategoryVocabulary":
        counter = Counter(labels)
        names = tuple(sorted(counter))
        return cls(names, tuple(counter[n] for n in names))

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown category {name!r}") from None

    def encode(self, labels: Sequence[str]) -> np.ndarray:
        return np.array([self.index(lab) for lab in labels], dtype=np.int64)


def split_column(name: str) -> tuple[str, str]:
    group, sep, feature = name.partition(SEPARATOR)
    if not sep or not group or not feature:
        raise SchemaError(f"feature column {name!r} is not of the form <group>::<feature>")
    return group, feature


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class FundUniverse:
    """Immutable labeled (or unlabeled) fund universe.

    Parameters
    ----------
    schema : sequence of FeatureGroup
        Declared groups. Every column must belong to one of them.
    columns : sequence of (group, feature)
        Observed feature columns in file order.
    fund_ids, fund_types : sequences of str
    categories : sequence of str or None
        Category label per record; ``None`` for unlabeled input.
    values : dict
        ``"numeric"`` -> float array (n, n_numeric columns), NaN = missing;
        ``"categorical"`` -> object array (n, n_categorical columns).
    """

    def __init__(self, schema, columns, fund_ids, fund_types, categories, numeric, categorical):
        self.schema = tuple(schema)
        self._groups = {g.name: g for g in self.schema}
        self.columns = tuple(tuple(c) for c in columns)
        for col in self.columns:
            if col[0] not in self._groups:
                raise SchemaError(f"column {SEPARATOR.join(col)!r} belongs to no declared group")
        if len(set(self.columns)) != len(self.columns):
            raise SchemaError("duplicate feature column")
        self.numeric_columns = tuple(c for c in self.columns if self.kind_of(c) != CATEGORICAL)
        self.categorical_columns = tuple(c for c in self.columns if self.kind_of(c) == CATEGORICAL)
        self.fund_ids = tuple(fund_ids)
        self.fund_types = tuple(fund_types)
        self.categories = None if categories is None else tuple(categories)
        n = len(self.fund_ids)
        numeric = np.asarray(numeric, dtype=np.float64).reshape(n, len(self.numeric_columns))
        categorical = np.asarray(categorical, dtype=object).reshape(n, len(self.categorical_columns))
        self.numeric = _frozen(numeric.copy())
        self.categorical = _frozen(categorical.copy())
        if len(set(self.fund_ids)) != n:
            dup = next(k for k, v in Counter(self.fund_ids).items() if v > 1)
            raise IngestError(f"duplicate fund_id {dup!r}")
        if any(not f for f in self.fund_ids):
            raise IngestError("empty fund_id")
        if len(self.fund_types) != n or (self.categories is not None and len(self.categories) != n):
            raise IngestError("record field lengths disagree")
        self.category_vocab = (
            CategoryVocabulary.from_labels(self.categories) if self.categories is not None else None
        )

    # -- structure ---------------------------------------------------------

    def __len__(self):
        return len(self.fund_ids)

    def __eq__(self, other):
        if not isinstance(other, FundUniverse):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.columns == other.columns
            and self.fund_ids == other.fund_ids
            and self.fund_types == other.fund_types
            and self.categories == other.categories
            and np.array_equal(self.numeric, other.numeric, equal_nan=True)
            and self.categorical.shape == other.categorical.shape
            and all(a == b for a, b in zip(self.categorical.ravel(), other.categorical.ravel()))
        )

    @property
    def labeled(self) -> bool:
        return self.categories is not None

    def kind_of(self, column: tuple[str, str]) -> str:
        return self._groups[column[0]].kind

    def group(self, name: str) -> FeatureGroup:
        return self._groups[name]

    def labels(self, vocab: CategoryVocabulary | None = None) -> np.ndarray:
        """Category index per record against ``vocab`` (default: own vocabulary)."""
        if self.categories is None:
            raise IngestError("universe has no category labels")
        return (vocab or self.category_vocab).encode(self.categories)

    @property
    def records(self) -> tuple[FundRecord, ...]:
        return tuple(self.record(i) for i in range(len(self)))

    def record(self, i: int) -> FundRecord:
        feats: dict = {}
        for j, col in enumerate(self.numeric_columns):
            v = self.numeric[i, j]
            feats[col] = None if math.isnan(v) else float(v)
        for j, col in enumerate(self.categorical_columns):
            feats[col] = self.categorical[i, j]
        return FundRecord(
            self.fund_ids[i],
            self.fund_types[i],
            None if self.categories is None else self.categories[i],
            feats,
        )

    def replace(self, numeric=None, categorical=None) -> "FundUniverse":
        return FundUniverse(
            self.schema,
            self.columns,
            self.fund_ids,
            self.fund_types,
            self.categories,
            self.numeric if numeric is None else numeric,
            self.categorical if categorical is None else categorical,
        )

    def subset(self, indices: Sequence[int]) -> "FundUniverse":
        """Records at ``indices``, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return FundUniverse(
            self.schema,
            self.columns,
            [self.fund_ids[i] for i in idx],
            [self.fund_types[i] for i in idx],
            None if self.categories is None else [self.categories[i] for i in idx],
            self.numeric[idx],
            self.categorical[idx],
        )

    # -- serialization -----------------------------------------------------

    def to_csv(self, path: str | os.PathLike) -> None:
        num_pos = {c: j for j, c in enumerate(self.numeric_columns)}
        cat_pos = {c: j for j, c in enumerate(self.categorical_columns)}
        lead = list(LEADING_COLUMNS if self.labeled else LEADING_COLUMNS[:2])
        tmp = f"{os.fspath(path)}.tmp"
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(lead + [SEPARATOR.join(c) for c in self.columns])
            for i in range(len(self)):
                row = [self.fund_ids[i], self.fund_types[i]]
                if self.labeled:
                    row.append(self.categories[i])
                for col in self.columns:
                    if col in cat_pos:
                        v = self.categorical[i, cat_pos[col]]
                        row.append("" if v is None else v)
                    else:
                        v = self.numeric[i, num_pos[col]]
                        if math.isnan(v):
                            row.append("")
                        elif self.kind_of(col) == COUNT:
                            row.append(str(int(v)))
                        else:
                            row.append(repr(float(v)))
                w.writerow(row)
        os.replace(tmp, path)


def _parse_number(token: str, kind: str, row: int, column: str) -> float:
    try:
        v = float(token)
    except ValueError:
        raise IngestError(f"row {row}, column {column!r}: non-numeric value {token!r}") from None
    if not math.isfinite(v):
        raise IngestError(f"row {row}, column {column!r}: non-finite value {token!r}")
    if kind == PERCENTAGE and not 0.0 <= v <= 100.0:
        raise IngestError(f"row {row}, column {column!r}: percentage {v} outside [0, 100]")
    if kind == COUNT and (v < 0 or v != int(v)):
        raise IngestError(f"row {row}, column {column!r}: count {token!r} is not a nonnegative integer")
    return v


def load_csv(
    path: str | os.PathLike,
    schema: Sequence[FeatureGroup] = DEFAULT_SCHEMA,
    require_label: bool = True,
) -> FundUniverse:
    """Read a fund-universe CSV.

    Row numbers in error messages are 1-based file lines (the header is
    line 1). Set ``require_label=False`` to accept files without the
    ``global_category`` column.
    """
    groups = {g.name: g for g in schema}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        labeled = header[:3] == list(LEADING_COLUMNS)
        if not labeled:
            if require_label or header[:2] != list(LEADING_COLUMNS[:2]):
                expected = LEADING_COLUMNS if require_label else LEADING_COLUMNS[:2]
                raise SchemaError(f"{path}: header must start with {','.join(expected)}")
        n_lead = 3 if labeled else 2
        columns = [split_column(h) for h in header[n_lead:]]
        for col in columns:
            if col[0] not in groups:
                raise SchemaError(f"{path}: column {SEPARATOR.join(col)!r} belongs to no declared group")
        kinds = [groups[g].kind for g, _ in columns]
        names = header[n_lead:]
        num_slots = [j for j, k in enumerate(kinds) if k != CATEGORICAL]
        cat_slots = [j for j, k in enumerate(kinds) if k == CATEGORICAL]

        fund_ids, fund_types, categories, numeric, categorical = [], [], [], [], []
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(
                    f"row {lineno}: expected {len(header)} columns, found {len(row)}"
                )
            fid = row[0].strip()
            if not fid:
                raise IngestError(f"row {lineno}: empty fund_id")
            if fid in seen:
                raise IngestError(f"row {lineno}: duplicate fund_id {fid!r}")
            seen.add(fid)
            ftype = row[1].strip()
            if ftype not in FUND_TYPES:
                raise IngestError(f"row {lineno}: fund_type {ftype!r} not in {FUND_TYPES}")
            if labeled:
                cat = row[2].strip()
                if not cat:
                    raise IngestError(f"row {lineno}: empty global_category")
                categories.append(cat)
            cells = row[n_lead:]
            num_row = []
            for j in num_slots:
                tok = cells[j].strip()
                num_row.append(_parse_number(tok, kinds[j], lineno, names[j]) if tok else math.nan)
            numeric.append(num_row)
            categorical.append([cells[j].strip() or None for j in cat_slots])
            fund_ids.append(fid)
            fund_types.append(ftype)

    n = len(fund_ids)
    num_cols = [columns[j] for j in num_slots]
    cat_cols = [columns[j] for j in cat_slots]
    numeric_arr = np.array(numeric, dtype=np.float64).reshape(n, len(num_cols))
    categorical_arr = np.empty((n, len(cat_cols)), dtype=object)
    for i, row in enumerate(categorical):
        categorical_arr[i, :] = row
    # FundUniverse splits columns by kind in file order, matching num_slots/cat_slots.
    return FundUniverse(
        schema,
        columns,
        fund_ids,
        fund_types,
        categories if labeled else None,
        numeric_arr,
        categorical_arr,
    )


def filter_min_category_count(universe: FundUniverse, min_count: int) -> FundUniverse:
    """Drop records of categories with fewer than ``min_count`` members."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    vocab = universe.category_vocab
    keep_names = {n for n, c in zip(vocab.names, vocab.counts) if c >= min_count}
    if not keep_names:
        raise IngestError("no category meets threshold")
    if len(keep_names) == len(vocab):
        return universe
    keep = [i for i, c in enumerate(universe.categories) if c in keep_names]
    return universe.subset(keep)


def universe_summary(universe: FundUniverse) -> list[tuple[str, int]]:
    """(category, count) rows, largest first, ties in name order."""
    if len(universe) == 0:
        raise IngestError("empty universe")
    vocab = universe.category_vocab
    return sorted(zip(vocab.names, vocab.counts), key=lambda r: (-r[1], r[0]))
