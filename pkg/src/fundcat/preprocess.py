"""Rounding, zero imputation, one-hot encoding and MinMax scaling."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

import numpy as np

from .schema import SEPARATOR, FundUniverse, IngestError, SchemaError

MISSING_LEVEL = "__MISSING__"
FUND_TYPE_COLUMN = ("Fund Type", "fund_type")
DECIMALS = 4
_SCALE = 10.0**DECIMALS
_QUANTUM = Decimal(1).scaleb(-DECIMALS)


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Round to 4 decimals, ties away from zero, by decimal-string semantics.

    Values whose scaled fractional part is close to one half are decided
    with ``decimal`` on their shortest repr, so ``0.00005`` rounds up even
    though its binary value is slightly below the tie.
    """
    x = np.asarray(values, dtype=np.float64)
    out = np.array(x, copy=True)
    finite = np.isfinite(x)
    y = np.abs(x[finite]) * _SCALE
    whole = np.floor(y)
    frac = y - whole
    r = whole + (frac > 0.5)
    res = np.copysign(r / _SCALE, x[finite])
    near_tie = np.abs(frac - 0.5) < 1e-6
    if near_tie.any():
        src = x[finite][near_tie]
        res[near_tie] = [
            float(Decimal(repr(float(v))).quantize(_QUANTUM, rounding=ROUND_HALF_UP)) for v in src
        ]
    out[finite] = res
    return out


def impute_and_round(universe: FundUniverse) -> FundUniverse:
    """Round numeric cells, fill numeric gaps with 0 and categorical gaps with a reserved level."""
    numeric = round_half_away(universe.numeric)
    numeric[np.isnan(numeric)] = 0.0
    categorical = np.array(universe.categorical, copy=True)
    for idx in zip(*np.nonzero(categorical == None)):  # noqa: E711 - elementwise on object arrays
        categorical[idx] = MISSING_LEVEL
    return universe.replace(numeric=numeric, categorical=categorical)


@dataclass(frozen=True)
class ColumnSpec:
    group: str
    feature: str
    level: str | None = None

    @property
    def name(self) -> str:
        base = f"{self.group}{SEPARATOR}{self.feature}"
        return base if self.level is None else f"{base}={self.level}"


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    row_ids: tuple[str, ...]
    labels: np.ndarray | None
    column_names: tuple[str, ...]

    @property
    def shape(self):
        return self.values.shape

    def dump_csv(self, path: str | os.PathLike) -> None:
        tmp = f"{os.fspath(path)}.tmp"
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["fund_id", "label", *self.column_names])
            for i, rid in enumerate(self.row_ids):
                lab = "" if self.labels is None else int(self.labels[i])
                w.writerow([rid, lab, *map(repr, self.values[i].tolist())])
        os.replace(tmp, path)


@dataclass(frozen=True)
class FittedPreprocessor:
    """Frozen column layout and scaling statistics from the fit rows.

    ``mins``/``maxs`` cover the numeric columns, which come first in the
    layout; one-hot blocks follow in categorical-column order and are left
    unscaled.
    """

    numeric_columns: tuple[tuple[str, str], ...]
    categorical_columns: tuple[tuple[str, str], ...]
    one_hot_vocab: tuple[tuple[str, ...], ...]
    mins: np.ndarray
    maxs: np.ndarray
    categories: tuple[str, ...]
    include_fund_type: bool = False

    @property
    def layout(self) -> tuple[ColumnSpec, ...]:
        specs = [ColumnSpec(g, f) for g, f in self.numeric_columns]
        for (g, f), levels in zip(self.categorical_columns, self.one_hot_vocab):
            specs.extend(ColumnSpec(g, f, lev) for lev in levels)
        return tuple(specs)

    @property
    def n_columns(self) -> int:
        return len(self.numeric_columns) + sum(len(v) for v in self.one_hot_vocab)

    def to_dict(self) -> dict:
        return {
            "numeric_columns": [list(c) for c in self.numeric_columns],
            "categorical_columns": [list(c) for c in self.categorical_columns],
            "one_hot_vocab": [list(v) for v in self.one_hot_vocab],
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
            "categories": list(self.categories),
            "include_fund_type": self.include_fund_type,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedPreprocessor":
        return cls(
            tuple(tuple(c) for c in d["numeric_columns"]),
            tuple(tuple(c) for c in d["categorical_columns"]),
            tuple(tuple(v) for v in d["one_hot_vocab"]),
            np.array(d["mins"], dtype=np.float64),
            np.array(d["maxs"], dtype=np.float64),
            tuple(d["categories"]),
            bool(d["include_fund_type"]),
        )


def _categorical_block(data: FundUniverse, include_fund_type: bool):
    cols = list(data.categorical_columns)
    block = data.categorical
    if include_fund_type:
        cols.append(FUND_TYPE_COLUMN)
        block = np.column_stack([block, np.array(data.fund_types, dtype=object)])
    return tuple(cols), block


def _check_imputed(data: FundUniverse) -> None:
    if np.isnan(data.numeric).any() or (data.categorical == None).any():  # noqa: E711
        raise IngestError("universe has missing values; run impute_and_round first")


def fit_preprocessor(
    train: FundUniverse,
    categories: Sequence[str] | None = None,
    include_fund_type: bool = False,
) -> FittedPreprocessor:
    """Learn the column layout and per-column min/max from ``train``.

    ``categories`` fixes the label vocabulary; it defaults to the categories
    observed in ``train``.
    """
    if len(train) == 0:
        raise IngestError("cannot fit preprocessor on an empty universe")
    _check_imputed(train)
    cat_cols, block = _categorical_block(train, include_fund_type)
    vocab = tuple(tuple(sorted(set(block[:, j].tolist()))) for j in range(block.shape[1]))
    if categories is None:
        categories = train.category_vocab.names if train.labeled else ()
    return FittedPreprocessor(
        numeric_columns=train.numeric_columns,
        categorical_columns=cat_cols,
        one_hot_vocab=vocab,
        mins=train.numeric.min(axis=0) if len(train.numeric_columns) else np.zeros(0),
        maxs=train.numeric.max(axis=0) if len(train.numeric_columns) else np.zeros(0),
        categories=tuple(categories),
        include_fund_type=include_fund_type,
    )


def transform(prep: FittedPreprocessor, data: FundUniverse) -> DesignMatrix:
    """Apply the fitted layout and scaling to ``data``.

    Constant fit-set columns map to 0. Test values outside the fit range
    are not clipped. Categorical levels unseen at fit time encode as an
    all-zero block.
    """
    _check_imputed(data)
    cat_cols, block = _categorical_block(data, prep.include_fund_type)
    expected = set(prep.numeric_columns) | set(prep.categorical_columns)
    got = set(data.numeric_columns) | set(cat_cols)
    unknown = sorted(got - expected)
    if unknown:
        listed = ", ".join(repr(SEPARATOR.join(c)) for c in unknown)
        raise SchemaError(f"unknown feature key{'s' if len(unknown) > 1 else ''} {listed}")
    absent = sorted(expected - got)
    if absent:
        raise SchemaError(f"missing feature key {SEPARATOR.join(absent[0])!r}")

    n = len(data)
    pos = {c: j for j, c in enumerate(data.numeric_columns)}
    raw = data.numeric[:, [pos[c] for c in prep.numeric_columns]]
    span = prep.maxs - prep.mins
    constant = span == 0
    scaled = (raw - prep.mins) / np.where(constant, 1.0, span)
    scaled[:, constant] = 0.0

    cpos = {c: j for j, c in enumerate(cat_cols)}
    blocks = [scaled]
    for col, levels in zip(prep.categorical_columns, prep.one_hot_vocab):
        onehot = np.zeros((n, len(levels)))
        lookup = {lev: k for k, lev in enumerate(levels)}
        for i, v in enumerate(block[:, cpos[col]]):
            k = lookup.get(v)
            if k is not None:
                onehot[i, k] = 1.0
        blocks.append(onehot)
    values = np.hstack(blocks) if blocks else np.zeros((n, 0))

    labels = None
    if data.labeled:
        lookup = {c: i for i, c in enumerate(prep.categories)}
        try:
            labels = np.array([lookup[c] for c in data.categories], dtype=np.int64)
        except KeyError as exc:
            raise IngestError(f"category {exc.args[0]!r} unknown to the preprocessor") from None
    return DesignMatrix(
        values=np.ascontiguousarray(values),
        row_ids=data.fund_ids,
        labels=labels,
        column_names=tuple(s.name for s in prep.layout),
    )
