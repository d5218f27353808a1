"""Class centroids on the unit sphere and the inter-cluster fitness penalty.

A centroid is the plain mean of a class's L2-normalised embeddings; it is not
projected back onto the sphere, so its norm is at most one. Centroids are
frozen once their task finishes: later feature drift is not tracked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DuplicateClassError, EmptyClassError, ShapeError
from .model import ModelParams, forward
from .numerics import (
    NORM_EPS,
    l2_normalize,
    l2_normalize_backward,
    l2_normalize_rows,
    l2_normalize_rows_backward,
)

# Below this distance to a centroid the norm is treated as non-differentiable
# and contributes a zero subgradient.
DIST_EPS = 1e-12


@dataclass(frozen=True)
class CentroidStore:
    d_feat: int
    entries: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for c, mu in self.entries.items():
            if mu.shape != (self.d_feat,):
                raise ShapeError(f"centroid for class {c} has shape {mu.shape}, expected ({self.d_feat},)")

    @property
    def frozen_classes(self) -> frozenset[int]:
        return frozenset(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def as_matrix(self) -> np.ndarray:
        """Centroids stacked in ascending class-id order, shape ``(n, d_feat)``."""
        if not self.entries:
            return np.zeros((0, self.d_feat))
        return np.stack([self.entries[c] for c in sorted(self.entries)])

    def with_centroids(self, new: Mapping[int, np.ndarray]) -> "CentroidStore":
        clash = set(new) & set(self.entries)
        if clash:
            raise DuplicateClassError(f"classes already frozen: {sorted(clash)}")
        merged = dict(self.entries)
        merged.update({int(c): np.asarray(mu, dtype=np.float64) for c, mu in new.items()})
        return CentroidStore(self.d_feat, merged)

    def to_json(self) -> str:
        return json.dumps({str(c): self.entries[c].tolist() for c in sorted(self.entries)})

    @classmethod
    def from_json(cls, text: str, d_feat: int | None = None) -> "CentroidStore":
        raw = json.loads(text)
        entries = {int(c): np.asarray(v, dtype=np.float64) for c, v in raw.items()}
        if d_feat is None:
            if not entries:
                raise ValueError("cannot infer d_feat from an empty centroid export")
            d_feat = len(next(iter(entries.values())))
        return cls(d_feat, entries)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path, d_feat: int | None = None) -> "CentroidStore":
        return cls.from_json(Path(path).read_text(), d_feat)


def compute_centroid(class_features) -> np.ndarray:
    feats = np.asarray(class_features, dtype=np.float64)
    if feats.ndim != 2:
        raise ShapeError("class features must be a 2-D matrix")
    if feats.shape[0] == 0:
        raise EmptyClassError("cannot compute the centroid of an empty class")
    unit, _ = l2_normalize_rows(feats)
    return unit.mean(axis=0)


def update_store(store: CentroidStore, params: ModelParams,
                 task_train_data: Mapping[int, np.ndarray]) -> CentroidStore:
    """Freeze centroids for the classes of a just-finished task.

    ``task_train_data`` maps class id to that class's raw training inputs.
    """
    clash = set(task_train_data) & store.frozen_classes
    if clash:
        raise DuplicateClassError(f"classes already frozen: {sorted(clash)}")
    new = {}
    for c in sorted(task_train_data):
        new[c] = compute_centroid(forward(params, task_train_data[c]).features)
    return store.with_centroids(new)


def icf_loss(z, store: CentroidStore) -> tuple[float, np.ndarray]:
    """Negative summed distance from the normalised ``z`` to every stored centroid."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (store.d_feat,):
        raise ShapeError(f"feature vector shape {z.shape} does not match d_feat={store.d_feat}")
    if not store.entries or np.linalg.norm(z) <= NORM_EPS:
        return 0.0, np.zeros_like(z)
    z_hat = l2_normalize(z)
    loss = 0.0
    grad_hat = np.zeros_like(z)
    for c in sorted(store.entries):
        diff = z_hat - store.entries[c]
        dist = np.sqrt(np.dot(diff, diff))
        loss -= dist
        if dist > DIST_EPS:
            grad_hat -= diff / dist
    return float(loss), l2_normalize_backward(z, grad_hat)


def icf_loss_rows(features: np.ndarray, store: CentroidStore) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``icf_loss`` over a feature matrix; returns (losses, gradients)."""
    z = np.asarray(features, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != store.d_feat:
        raise ShapeError(f"feature matrix shape {z.shape} does not match d_feat={store.d_feat}")
    if not store.entries or z.shape[0] == 0:
        return np.zeros(z.shape[0]), np.zeros_like(z)
    unit, norms = l2_normalize_rows(z)
    diff = unit[:, None, :] - store.as_matrix()[None, :, :]
    dist = np.sqrt(np.einsum("ncd,ncd->nc", diff, diff))
    live = norms > NORM_EPS
    losses = np.where(live, -dist.sum(axis=1), 0.0)
    inv = np.divide(1.0, dist, out=np.zeros_like(dist), where=dist > DIST_EPS)
    grad_unit = -np.einsum("ncd,nc->nd", diff, inv)
    grads = l2_normalize_rows_backward(unit, norms, grad_unit)
    return losses, grads
