"""Tabular classification data: loading, subsetting, and splitting.

A :class:`Dataset` is the player set of the valuation game. Instances are
immutable after construction (the backing arrays are marked read-only), so
they can be shared freely across parallel workers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .randomness import stream

DEFAULT_LABEL_COLUMN = "label"


class CsvFormatError(ValueError):
    """A CSV file violates the expected layout."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, dense class labels, and stable per-tuple ids.

    Labels are nonnegative integers densely encoded as ``{0..C-1}``; ids are
    unique and survive subsetting, so a tuple keeps its identity through
    splits and coalition selections.
    """

    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray

    def __post_init__(self) -> None:
        features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        ids = np.ascontiguousarray(np.asarray(self.ids, dtype=np.int64))
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n = features.shape[0]
        if labels.shape != (n,) or ids.shape != (n,):
            raise ValueError("labels and ids must have exactly one entry per feature row")
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite (no NaN or infinity)")
        if n and labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        if np.unique(ids).size != ids.size:
            raise ValueError("ids must be unique")
        for arr in (features, labels, ids):
            arr.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        """Size of the dense label encoding (0 for an empty dataset)."""
        return int(self.labels.max()) + 1 if len(self) else 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.ids, other.ids)
        )


@dataclass(frozen=True)
class SplitConfig:
    """How to carve a test set out of a dataset: size and split seed."""

    test_count: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.test_count < 0:
            raise ValueError("test_count must be nonnegative")


def load_csv(path: str | Path, label_column: str = DEFAULT_LABEL_COLUMN) -> Dataset:
    """Load a headered CSV into a Dataset.

    All non-label columns are parsed as 64-bit floats. Labels are re-encoded
    densely to ``{0..C-1}`` in order of first appearance; the original body
    row index becomes the tuple id.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: missing header row (file is empty)")
    header = rows[0]
    if len(set(header)) != len(header):
        dupes = sorted({c for c in header if header.count(c) > 1})
        raise CsvFormatError(f"{path}: duplicate header column(s) {dupes}")
    if label_column not in header:
        raise CsvFormatError(f"{path}: label column {label_column!r} not found in header")
    body = rows[1:]
    if not body:
        raise CsvFormatError(f"{path}: empty body (no data rows)")

    label_idx = header.index(label_column)
    feature_idx = [j for j in range(len(header)) if j != label_idx]

    features = np.empty((len(body), len(feature_idx)), dtype=np.float64)
    codes: dict[str, int] = {}
    labels = np.empty(len(body), dtype=np.int64)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise CsvFormatError(
                f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}"
            )
        for out_j, j in enumerate(feature_idx):
            cell = row[j]
            try:
                value = float(cell)
            except ValueError:
                value = float("nan")
            if not np.isfinite(value):
                raise CsvFormatError(
                    f"{path}: non-numeric feature value {cell!r} "
                    f"at row {i + 2}, column {header[j]!r}"
                )
            features[i, out_j] = value
        labels[i] = codes.setdefault(row[label_idx], len(codes))

    return Dataset(features, labels, np.arange(len(body), dtype=np.int64))


def save_csv(
    ds: Dataset,
    path: str | Path,
    label_column: str = DEFAULT_LABEL_COLUMN,
    feature_names: Sequence[str] | None = None,
) -> None:
    """Write a Dataset in the format :func:`load_csv` reads.

    Float cells use ``repr`` so values round-trip exactly; labels are written
    as their integer codes. Ids are positional and not persisted.
    """
    if feature_names is None:
        feature_names = [f"x{j + 1}" for j in range(ds.num_features)]
    if len(feature_names) != ds.num_features:
        raise ValueError("feature_names must match the feature count")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*feature_names, label_column])
        for x, y in zip(ds.features, ds.labels):
            writer.writerow([*(repr(float(v)) for v in x), int(y)])


def iris_path() -> Path:
    """Path of the bundled 150-row Iris fixture."""
    return Path(str(resources.files("datavalue").joinpath("data/iris.csv")))


def load_iris() -> Dataset:
    """The bundled Iris dataset: 150 rows, 4 features, 3 classes."""
    return load_csv(iris_path())


def filter_iris_2d(ds: Dataset) -> Dataset:
    """Reduce full Iris to the two-feature, two-class toy slice.

    Keeps the 100 rows of the first two species and only the first two
    feature columns (sepal length and width); ids are preserved.
    """
    if len(ds) != 150 or ds.num_features != 4 or np.unique(ds.labels).size != 3:
        raise ValueError(
            "expected the 150-row, 4-feature, 3-class Iris dataset, got "
            f"{len(ds)} rows, {ds.num_features} features, "
            f"{np.unique(ds.labels).size} classes"
        )
    keep = ds.labels < 2
    return Dataset(ds.features[keep][:, :2], ds.labels[keep], ds.ids[keep])


def train_test_split(ds: Dataset, cfg: SplitConfig) -> tuple[Dataset, Dataset]:
    """Deterministically partition ``ds`` into (train, test).

    Test rows are chosen uniformly without replacement by the stream seeded
    with ``cfg.seed``; both parts keep their rows in original order.
    """
    n = len(ds)
    if cfg.test_count > n:
        raise ValueError(f"test_count {cfg.test_count} exceeds dataset size {n}")
    order = stream(cfg.seed).permutation(n)
    test_pos = np.sort(order[: cfg.test_count])
    train_pos = np.sort(order[cfg.test_count :])
    return subset(ds, train_pos), subset(ds, test_pos)


def subset(ds: Dataset, indices: Sequence[int] | np.ndarray) -> Dataset:
    """Rows at the given strictly increasing positions, ids preserved."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("indices must be one-dimensional")
    if idx.size:
        if idx.min() < 0 or idx.max() >= len(ds):
            raise ValueError(f"index out of range for dataset of size {len(ds)}")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly increasing")
    return Dataset(ds.features[idx], ds.labels[idx], ds.ids[idx])
