"""Labelled datasets and their partition into sequential, class-disjoint tasks."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyDatasetError, ParseError, ProtocolError, ShapeError
from .numerics import Rng


@dataclass(frozen=True, eq=False)
class Sample:
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class LabeledData:
    """Row-aligned inputs ``x`` (n, d) and integer labels ``y`` (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ShapeError(f"inputs {self.x.shape} and labels {self.y.shape} are not row-aligned")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def classes(self) -> list[int]:
        return sorted(set(self.y.tolist()))

    def by_class(self) -> dict[int, np.ndarray]:
        return {c: self.x[self.y == c] for c in self.classes}

    def subset(self, idx) -> "LabeledData":
        return LabeledData(self.x[idx], self.y[idx])

    def samples(self) -> list[Sample]:
        return [Sample(self.x[i].copy(), int(self.y[i])) for i in range(len(self))]

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "LabeledData":
        if not samples:
            raise EmptyDatasetError("no samples")
        x = np.stack([np.asarray(s.features, dtype=np.float64) for s in samples])
        y = np.array([s.label for s in samples], dtype=np.int64)
        return cls(x, y)

    @classmethod
    def concat(cls, parts: Iterable["LabeledData"]) -> "LabeledData":
        parts = list(parts)
        return cls(np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]))


@dataclass(frozen=True, eq=False)
class Task:
    classes: tuple[int, ...]
    train: LabeledData
    test: LabeledData


@dataclass(frozen=True, eq=False)
class TaskStream:
    tasks: list[Task]
    d_in: int
    total_classes: int

    def __len__(self) -> int:
        return len(self.tasks)

    def seen_classes(self, k: int) -> list[int]:
        """Classes of tasks ``0..k`` (0-based)."""
        return sorted(c for t in self.tasks[:k + 1] for c in t.classes)


def _resolve_order(classes: list[int], class_order) -> list[int]:
    if class_order is None:
        return classes
    if isinstance(class_order, np.random.Generator):
        return [classes[i] for i in class_order.permutation(len(classes))]
    order = [int(c) for c in class_order]
    if sorted(order) != classes:
        raise ProtocolError(f"class_order {order} is not a permutation of {classes}")
    return order


def build_stream(train: LabeledData, test: LabeledData, classes_per_task: int,
                 class_order: Sequence[int] | Rng | None = None) -> TaskStream:
    """Group an already split dataset into tasks of consecutive classes.

    ``class_order`` is an explicit permutation, a generator for a seeded
    shuffle, or ``None`` for natural order.
    """
    classes = sorted(set(train.classes) | set(test.classes))
    if classes_per_task < 1 or len(classes) % classes_per_task:
        raise ProtocolError(f"{len(classes)} classes cannot be split into tasks of {classes_per_task}")
    order = _resolve_order(classes, class_order)
    tasks = []
    for start in range(0, len(order), classes_per_task):
        group = tuple(order[start:start + classes_per_task])
        tasks.append(Task(group, train.subset(np.isin(train.y, group)), test.subset(np.isin(test.y, group))))
    total = max(classes) + 1
    return TaskStream(tasks, train.x.shape[1], total)


def split_protocol(data: LabeledData, classes_per_task: int,
                   class_order: Sequence[int] | Rng | None = None,
                   rng: Rng | None = None, train_fraction: float = 0.8) -> TaskStream:
    """Per-class seeded train/test split, then grouping into tasks.

    ``rng`` drives the split only (seed 0 when omitted). Each class keeps at
    least one sample on each side.
    """
    classes = data.classes
    if classes_per_task < 1 or len(classes) % classes_per_task:
        raise ProtocolError(f"{len(classes)} classes cannot be split into tasks of {classes_per_task}")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(0))
    train_idx, test_idx = [], []
    for c in classes:
        idx = np.flatnonzero(data.y == c)
        if idx.size < 2:
            raise ProtocolError(f"class {c} has {idx.size} sample(s); need at least 2")
        idx = idx[rng.permutation(idx.size)]
        n_train = min(max(int(round(train_fraction * idx.size)), 1), idx.size - 1)
        train_idx.append(np.sort(idx[:n_train]))
        test_idx.append(np.sort(idx[n_train:]))
    train = data.subset(np.concatenate(train_idx))
    test = data.subset(np.concatenate(test_idx))
    return build_stream(train, test, classes_per_task, class_order)


def synth_gaussians(n_classes: int, d_in: int, per_class_train: int, per_class_test: int,
                    spread: float, rng: Rng, radius: float = 4.0) -> tuple[LabeledData, LabeledData]:
    """Isotropic Gaussian blobs with means drawn uniformly on a sphere.

    Returns ``(train, test)``; rows are grouped by class in ascending order.
    """
    if n_classes < 2 or d_in < 2:
        raise ValueError("need at least 2 classes and 2 input dimensions")
    means = rng.standard_normal((n_classes, d_in))
    means *= radius / np.linalg.norm(means, axis=1, keepdims=True)

    def draw(per_class: int) -> LabeledData:
        y = np.repeat(np.arange(n_classes), per_class)
        x = means[y] + spread * rng.standard_normal((y.size, d_in))
        return LabeledData(x, y)

    train = draw(per_class_train)
    test = draw(per_class_test)
    return train, test


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path) -> LabeledData:
    """Read rows of ``label,f1,...,fd``. A leading non-numeric row is a header."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if not rows and width is None and not _is_number(row[0]):
                width = -1  # header seen
                continue
            if len(row) < 2:
                raise ParseError("expected a label and at least one feature", lineno)
            if width is None or width == -1:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"expected {width} fields, found {len(row)}", lineno)
            try:
                label = int(row[0])
            except ValueError:
                raise ParseError(f"label {row[0]!r} is not an integer", lineno) from None
            if label < 0:
                raise ParseError(f"label {label} is negative", lineno)
            try:
                feats = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(f"non-numeric feature ({exc})", lineno) from None
            if not all(np.isfinite(feats)):
                raise ParseError("non-finite feature", lineno)
            rows.append((label, feats))
    if not rows:
        raise EmptyDatasetError(f"{path}: no samples")
    y = np.array([r[0] for r in rows], dtype=np.int64)
    x = np.array([r[1] for r in rows], dtype=np.float64)
    return LabeledData(x, y)


def save_csv(data: LabeledData, path, header: bool = True) -> None:
    """Write ``data`` with 17 significant digits, enough to reload bit-exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["label"] + [f"f{i + 1}" for i in range(data.x.shape[1])])
        for label, feats in zip(data.y.tolist(), data.x):
            w.writerow([label] + [format(v, ".17g") for v in feats])
