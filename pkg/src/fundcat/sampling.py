"""Stratified splitting, k-fold plans and balanced class weights.

Shuffles use PCG64 seeded per category via :func:`fundcat.rng.derive_seed`,
so a category's assignment does not depend on the other categories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import generator


@dataclass(frozen=True)
class StratifiedSplit:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int


@dataclass(frozen=True)
class FoldPlan:
    k: int
    fold_of_row: np.ndarray

    def folds(self):
        """Yield ``(train_indices, validation_indices)`` for each fold."""
        for f in range(self.k):
            yield np.flatnonzero(self.fold_of_row != f), np.flatnonzero(self.fold_of_row == f)


@dataclass(frozen=True)
class ClassWeights:
    """Balanced weights ``n / (C * n_i)`` over the categories present.

    ``weights`` is indexed by category; categories absent from the labels
    carry weight 0 and count 0 and do not enter ``C``.
    """

    weights: np.ndarray
    counts: np.ndarray
    n: int
    C: int

    def sample_weights(self, labels) -> np.ndarray:
        return self.weights[np.asarray(labels)]


def _as_labels(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if y.size and y.min() < 0:
        raise ValueError("labels must be nonnegative category indices")
    return y


def n_test_members(n_members: int, frac: float) -> int:
    """Per-category test size: round half up, at least 1, leaving at least 1 for training."""
    return min(max(1, math.floor(frac * n_members + 0.5)), n_members - 1)


def stratified_split(labels, test_frac: float, seed: int, *, _stream: str = "split") -> StratifiedSplit:
    y = _as_labels(labels)
    if not 0.0 < test_frac < 1.0:
        raise ValueError("test_frac must lie in (0, 1)")
    test = []
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        if members.size < 2:
            raise ValueError(f"cannot stratify singleton category {int(c)}")
        perm = generator(seed, _stream, int(c)).permutation(members)
        test.append(perm[: n_test_members(members.size, test_frac)])
    test_idx = np.sort(np.concatenate(test)) if test else np.zeros(0, dtype=np.int64)
    mask = np.ones(y.size, dtype=bool)
    mask[test_idx] = False
    return StratifiedSplit(np.flatnonzero(mask), test_idx, seed)


def stratified_kfold(labels, k: int, seed: int) -> FoldPlan:
    """Round-robin fold assignment after a per-category shuffle.

    Each category starts where the previous one stopped, which keeps the
    overall fold sizes within one of each other as well.
    """
    y = _as_labels(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    fold = np.empty(y.size, dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        members = generator(seed, "kfold", int(c)).permutation(np.flatnonzero(y == c))
        fold[members] = (offset + np.arange(members.size)) % k
        offset += members.size
    return FoldPlan(k, fold)


def class_weights(labels, n_categories: int | None = None) -> ClassWeights:
    y = _as_labels(labels)
    if y.size == 0:
        raise ValueError("class weights of an empty label list are undefined")
    size = int(y.max()) + 1 if n_categories is None else n_categories
    counts = np.bincount(y, minlength=size)
    present = counts > 0
    C = int(present.sum())
    n = int(y.size)
    weights = np.zeros(size)
    weights[present] = n / (C * counts[present])
    return ClassWeights(weights, counts, n, C)


def holdout(train_indices, labels, frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified carve-out of ``frac`` of ``train_indices``; returns (fit, validation)."""
    idx = np.asarray(train_indices, dtype=np.int64)
    split = stratified_split(np.asarray(labels)[idx], frac, seed, _stream="holdout")
    return idx[split.train_indices], idx[split.test_indices]
