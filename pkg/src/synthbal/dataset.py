"""Labeled tabular datasets: loading, validation, splitting, imbalance accounting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed input data or invalid dataset operations."""


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class TabularDataset:
    """Rows of named continuous features plus one text class label per row.

    Immutable after construction; the backing arrays are marked read-only so
    instances can be shared freely across threads.
    """

    feature_names: tuple[str, ...]
    rows: np.ndarray
    labels: np.ndarray
    class_index: dict[str, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=str)
        names = tuple(str(n) for n in self.feature_names)
        if rows.ndim != 2:
            raise DatasetError(f"rows must be a 2-D matrix, got shape {rows.shape}")
        if rows.shape[1] != len(names):
            raise DatasetError(
                f"{len(names)} feature names but rows have {rows.shape[1]} columns"
            )
        if labels.shape != (rows.shape[0],):
            raise DatasetError(
                f"labels length {labels.shape} does not match row count {rows.shape[0]}"
            )
        if len(set(names)) != len(names):
            raise DatasetError("feature names must be unique")
        if any(not n for n in names):
            raise DatasetError("feature names must be non-empty")
        if rows.size and not np.all(np.isfinite(rows)):
            r, c = np.argwhere(~np.isfinite(rows))[0]
            raise DatasetError(
                f"non-finite value at row {int(r)}, feature '{names[int(c)]}'"
            )
        rows = rows.copy()
        rows.setflags(write=False)
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        index: dict[str, np.ndarray] = {}
        for i, lab in enumerate(labels):
            index.setdefault(str(lab), []).append(i)
        object.__setattr__(
            self,
            "class_index",
            {c: np.asarray(ix, dtype=np.int64) for c, ix in index.items()},
        )

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    @property
    def classes(self) -> tuple[str, ...]:
        # First-appearance order; doubles as the dense integer id order.
        return tuple(self.class_index.keys())

    def class_rows(self, name: str) -> np.ndarray:
        if name not in self.class_index:
            raise DatasetError(f"unknown class '{name}'")
        return self.rows[self.class_index[name]]

    def subset(self, indices: np.ndarray) -> "TabularDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return TabularDataset(self.feature_names, self.rows[idx], self.labels[idx])

    def label_ids(self) -> np.ndarray:
        """Labels as dense integer ids in first-appearance order."""
        mapping = {c: i for i, c in enumerate(self.classes)}
        return np.asarray([mapping[str(l)] for l in self.labels], dtype=np.int64)


@dataclass(frozen=True)
class ClassDistribution:
    counts: dict[str, int]
    majority_class: str
    imbalance_ratios: dict[str, float]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DatasetError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )


def load_csv(path: str | Path, label_column: str) -> TabularDataset:
    """Read a UTF-8 comma-separated file with a header row into a dataset.

    The label column is removed from the features; row order is preserved.
    Every non-label cell must parse as a finite real number.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise DatasetError(f"{path}: duplicate header names {dupes}")
        if label_column not in header:
            raise DatasetError(f"{path}: no column named '{label_column}'")
        label_pos = header.index(label_column)
        feature_names = tuple(h for i, h in enumerate(header) if i != label_pos)

        rows: list[list[float]] = []
        labels: list[str] = []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise DatasetError(
                    f"{path}, line {line_no}: expected {len(header)} cells, got {len(record)}"
                )
            values = []
            for i, cell in enumerate(record):
                if i == label_pos:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DatasetError(
                        f"{path}, line {line_no}, column '{header[i]}': "
                        f"cannot parse '{cell}' as a finite number"
                    )
                values.append(v)
            rows.append(values)
            labels.append(record[label_pos].strip())
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return TabularDataset(feature_names, np.asarray(rows), np.asarray(labels))


def save_csv(ds: TabularDataset, path: str | Path, label_column: str = "label") -> None:
    """Write a dataset back out with the label as the final column."""
    if label_column in ds.feature_names:
        raise DatasetError(f"label column '{label_column}' collides with a feature")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + [label_column])
        for row, lab in zip(ds.rows, ds.labels):
            writer.writerow([repr(float(v)) for v in row] + [str(lab)])


def imbalance_ratios(ds: TabularDataset) -> ClassDistribution:
    """Per-class sample count divided by the majority-class count.

    The majority class attains the maximum count; ties are broken by
    lexicographically smallest class name.
    """
    if ds.n_rows == 0:
        raise DatasetError("empty dataset")
    counts = {c: int(len(ix)) for c, ix in ds.class_index.items()}
    max_count = max(counts.values())
    majority = min(c for c, n in counts.items() if n == max_count)
    ratios = {c: n / max_count for c, n in counts.items()}
    return ClassDistribution(counts=counts, majority_class=majority, imbalance_ratios=ratios)


def stratified_split(
    ds: TabularDataset, spec: SplitSpec
) -> tuple[TabularDataset, TabularDataset]:
    """Partition into (train, test) with ~train_fraction of each class in train.

    Per-class train counts are round(fraction * n_c), clamped to keep at least
    one sample on each side. Deterministic for a fixed seed; each side keeps
    the original row order.
    """
    if ds.n_rows < 2:
        raise DatasetError("need at least 2 rows to split")
    rng = np.random.default_rng(spec.seed)
    train_idx: list[np.ndarray] = []
    if spec.stratified:
        for c in ds.classes:
            idx = ds.class_index[c]
            n_c = len(idx)
            if n_c < 2:
                raise DatasetError(
                    f"class '{c}' has {n_c} sample(s); stratified split needs >= 2"
                )
            n_train = min(n_c - 1, max(1, _round_half_up(spec.train_fraction * n_c)))
            perm = rng.permutation(n_c)
            train_idx.append(idx[perm[:n_train]])
    else:
        n_train = min(ds.n_rows - 1, max(1, _round_half_up(spec.train_fraction * ds.n_rows)))
        perm = rng.permutation(ds.n_rows)
        train_idx.append(perm[:n_train])
    train_mask = np.zeros(ds.n_rows, dtype=bool)
    train_mask[np.concatenate(train_idx)] = True
    return ds.subset(np.flatnonzero(train_mask)), ds.subset(np.flatnonzero(~train_mask))


def kfold_indices(
    n: int, k: int, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled k-fold partition of range(n); fold sizes differ by at most 1."""
    if k < 2:
        raise DatasetError(f"k must be >= 2, got {k}")
    if k > n:
        raise DatasetError(f"k={k} exceeds n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    sizes = np.full(k, n // k, dtype=np.int64)
    sizes[: n % k] += 1
    folds = []
    start = 0
    for size in sizes:
        val = np.sort(perm[start : start + size])
        mask = np.ones(n, dtype=bool)
        mask[val] = False
        folds.append((np.flatnonzero(mask), val))
        start += size
    return folds


def stratified_kfold_indices(
    labels: np.ndarray, k: int, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """k-fold partition keeping per-class proportions; every class needs >= k rows."""
    labels = np.asarray(labels, dtype=str)
    n = len(labels)
    if k < 2:
        raise DatasetError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    for c in dict.fromkeys(str(l) for l in labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < k:
            raise DatasetError(
                f"class '{c}' has {len(idx)} sample(s), fewer than k={k} folds"
            )
        perm = rng.permutation(len(idx))
        fold_of[idx[perm]] = np.arange(len(idx)) % k
    folds = []
    for f in range(k):
        val = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        folds.append((train, val))
    return folds


def concat(a: TabularDataset, b: TabularDataset) -> TabularDataset:
    """Stack two datasets with identical feature schemas."""
    if a.feature_names != b.feature_names:
        raise DatasetError("feature schemas differ")
    return TabularDataset(
        a.feature_names,
        np.vstack([a.rows, b.rows]),
        np.concatenate([a.labels, b.labels]),
    )
