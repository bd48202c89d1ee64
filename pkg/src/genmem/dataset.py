"""Datasets, label noise and split plans for the experiment protocols."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed or unusable input data."""


class CapacityError(DatasetError):
    """A class does not hold enough samples for the requested split."""


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    name: str = "dataset"
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y)
        if X.ndim != 2:
            raise DatasetError(f"X must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DatasetError(f"{X.shape[0]} rows in X but {y.shape} labels")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DatasetError("empty dataset")
        if not np.all((y == 1) | (y == -1)):
            raise DatasetError("labels must be -1 or +1")
        X.setflags(write=False)
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    def subset(self, indices, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], name or self.name, self.feature_names)

    def with_labels(self, y) -> "Dataset":
        return Dataset(self.X, y, self.name, self.feature_names)


@dataclass(frozen=True)
class SplitPlan:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int = 0
    descriptor: str = ""

    def __post_init__(self):
        tr = np.asarray(self.train_indices, dtype=np.int64)
        te = np.asarray(self.test_indices, dtype=np.int64)
        if np.intersect1d(tr, te).size:
            raise DatasetError("train and test indices overlap")
        object.__setattr__(self, "train_indices", tr)
        object.__setattr__(self, "test_indices", te)

    def check(self, m: int) -> None:
        for idx in (self.train_indices, self.test_indices):
            if idx.size and (idx.min() < 0 or idx.max() >= m):
                raise DatasetError(f"split index out of range [0, {m})")


def _parse_label(token: str, lineno: int) -> int:
    try:
        value = float(token)
    except ValueError:
        raise DatasetError(f"line {lineno}: label {token!r} is not numeric") from None
    if value in (1.0, -1.0, 0.0):
        return -1 if value == 0.0 else int(value)
    raise DatasetError(f"line {lineno}: label {token!r} not in {{-1, +1, 0}}")


def load_csv(path, label_column: int = 0, has_header: bool = False, name: str | None = None) -> Dataset:
    """Read a comma-separated file with one label column.

    Labels may be given as -1/+1 or as 0/1 (0 maps to -1). No scaling is
    applied and feature order is preserved. An empty file (or a header
    with no rows) raises :class:`DatasetError`.
    """
    path = Path(path)
    rows, labels = [], []
    header = None
    width = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not tok.strip() for tok in row):
                continue
            if has_header and header is None:
                header = [tok.strip() for tok in row]
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise DatasetError(f"line {lineno}: need a label and at least one feature")
            elif len(row) != width:
                raise DatasetError(f"line {lineno}: expected {width} columns, got {len(row)}")
            col = label_column if label_column >= 0 else width + label_column
            if not 0 <= col < width:
                raise DatasetError(f"label column {label_column} out of range for {width} columns")
            labels.append(_parse_label(row[col].strip(), lineno))
            try:
                rows.append([float(tok) for k, tok in enumerate(row) if k != col])
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: {exc}") from None
    if not rows:
        raise DatasetError(f"{path}: empty dataset")
    feature_names = None
    if header is not None:
        feature_names = tuple(h for k, h in enumerate(header) if k != col)
    return Dataset(np.array(rows), np.array(labels), name or path.stem, feature_names)


def write_csv(ds: Dataset, path, label_column: int = 0, header: bool = False) -> None:
    """Write ``ds`` in the format read by :func:`load_csv` (17 significant digits)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            names = list(ds.feature_names or [f"x{k}" for k in range(ds.n)])
            names.insert(label_column, "label")
            writer.writerow(names)
        for xi, yi in zip(ds.X, ds.y):
            row = [f"{v:.17g}" for v in xi]
            row.insert(label_column, str(int(yi)))
            writer.writerow(row)


def minmax_params(X) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature (offset, span) mapping the columns of ``X`` onto [0, 1]."""
    X = np.asarray(X, dtype=float)
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    span[span == 0] = 1.0
    return lo, span


def minmax_scale(ds: Dataset, params=None) -> Dataset:
    """Rescale each feature to [0, 1]; constant columns become 0.

    ``params`` reuses an (offset, span) pair fitted elsewhere, e.g. the
    training file's when scaling test data.
    """
    lo, span = minmax_params(ds.X) if params is None else params
    return Dataset((ds.X - lo) / span, ds.y, ds.name, ds.feature_names)


def noise_count(m: int, fraction: float) -> int:
    return int(np.floor(fraction * m + 0.5))


def flip_indices(m: int, fraction: float, seed: int) -> np.ndarray:
    if not 0.0 <= fraction <= 1.0:
        raise DatasetError(f"noise fraction {fraction} outside [0, 1]")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(m, size=noise_count(m, fraction), replace=False))


def inject_label_noise(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Return a copy of ``ds`` with round(fraction * m) labels negated."""
    idx = flip_indices(ds.m, fraction, seed)
    y = ds.y.copy()
    y[idx] = -y[idx]
    return ds.with_labels(y)


def stratified_subsample(ds: Dataset, per_class: int, seed: int) -> SplitPlan:
    rng = np.random.default_rng(seed)
    picked = []
    for label in (1, -1):
        members = np.flatnonzero(ds.y == label)
        if members.size < per_class:
            name = "positive" if label == 1 else "negative"
            raise CapacityError(
                f"{ds.name}: {name} class has {members.size} samples, {per_class} requested"
            )
        picked.append(rng.choice(members, size=per_class, replace=False))
    train = np.sort(np.concatenate(picked))
    test = np.setdiff1d(np.arange(ds.m), train)
    return SplitPlan(train, test, seed, f"subsample-{2 * per_class}-seed-{seed}")


def random_subsample(ds: Dataset, size: int, seed: int) -> SplitPlan:
    """Uniform train draw of ``size`` samples, remainder as test."""
    if size > ds.m:
        raise CapacityError(f"{ds.name}: {size} training samples requested, {ds.m} available")
    rng = np.random.default_rng(seed)
    train = np.sort(rng.choice(ds.m, size=size, replace=False))
    test = np.setdiff1d(np.arange(ds.m), train)
    return SplitPlan(train, test, seed, f"random-{size}-seed-{seed}")


def loo_splits(ds: Dataset) -> list[SplitPlan]:
    if ds.m < 2:
        raise DatasetError("leave-one-out needs at least 2 samples")
    everything = np.arange(ds.m)
    return [
        SplitPlan(np.delete(everything, i), np.array([i]), 0, f"loo-fold-{i}")
        for i in range(ds.m)
    ]
