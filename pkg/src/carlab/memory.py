"""Class-balanced exemplar memory.

Raw inputs are stored, not features, so replayed samples are re-embedded by
the current extractor at every step.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DuplicateClassError, EmptyBufferError, ShapeError
from .numerics import Rng


class ReplayBuffer:
    """At most ``capacity_per_class`` stored inputs per class."""

    def __init__(self, capacity_per_class: int = 20, selection: str = "random"):
        if capacity_per_class < 0:
            raise ValueError("capacity_per_class must be >= 0")
        if selection != "random":
            raise ValueError(f"unknown exemplar selection policy {selection!r}")
        self.capacity_per_class = capacity_per_class
        self.selection = selection
        self.per_class: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return sum(x.shape[0] for x in self.per_class.values())

    @property
    def classes(self) -> list[int]:
        return sorted(self.per_class)

    def add_exemplars(self, task_train_data: Mapping[int, np.ndarray], rng: Rng) -> "ReplayBuffer":
        """Store ``min(capacity, class size)`` inputs per new class, uniformly without replacement."""
        clash = set(task_train_data) & set(self.per_class)
        if clash:
            raise DuplicateClassError(f"classes already in buffer: {sorted(clash)}")
        if self.capacity_per_class == 0:
            return self
        for c in sorted(task_train_data):
            x = np.asarray(task_train_data[c], dtype=np.float64)
            if x.ndim != 2:
                raise ShapeError("class inputs must be a 2-D matrix")
            k = min(self.capacity_per_class, x.shape[0])
            if k == 0:
                continue
            pick = np.sort(rng.choice(x.shape[0], size=k, replace=False))
            self.per_class[int(c)] = x[pick].copy()
        return self

    def sample(self, n: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
        """Round-robin over a shuffled class order, one uniform draw per visit.

        Per-class counts in the result differ by at most one.
        """
        if not self.per_class:
            raise EmptyBufferError("replay buffer is empty")
        if n < 1:
            raise ValueError("n must be >= 1")
        classes = np.array(self.classes)
        order = classes[rng.permutation(classes.size)]
        visits = order[np.arange(n) % order.size]
        sizes = np.array([self.per_class[c].shape[0] for c in visits.tolist()])
        picks = rng.integers(0, sizes)
        x = np.stack([self.per_class[c][i] for c, i in zip(visits.tolist(), picks.tolist())])
        return x, visits.astype(np.int64)

    def to_json(self) -> str:
        return json.dumps({
            "capacity_per_class": self.capacity_per_class,
            "selection": self.selection,
            "classes": {str(c): self.per_class[c].tolist() for c in self.classes},
        })

    @classmethod
    def from_json(cls, text: str) -> "ReplayBuffer":
        raw = json.loads(text)
        buf = cls(raw["capacity_per_class"], raw.get("selection", "random"))
        for c, rows in raw["classes"].items():
            x = np.asarray(rows, dtype=np.float64)
            if x.ndim != 2 or x.shape[0] > buf.capacity_per_class:
                raise ShapeError(f"class {c}: stored exemplars exceed capacity or are malformed")
            buf.per_class[int(c)] = x
        return buf

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ReplayBuffer":
        return cls.from_json(Path(path).read_text())


def add_exemplars(buffer: ReplayBuffer, task_train_data: Mapping[int, np.ndarray], rng: Rng) -> ReplayBuffer:
    return buffer.add_exemplars(task_train_data, rng)


def sample_replay_batch(buffer: ReplayBuffer, n: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    return buffer.sample(n, rng)
