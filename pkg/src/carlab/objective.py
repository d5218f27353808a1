"""Masked cross-entropy and the lambda-weighted CE + ICF objective.

Both terms are batch means. Logits of inactive classes are treated as
``-inf``: they receive no probability mass and no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import LabelError, ShapeError
from .geometry import CentroidStore, icf_loss_rows
from .model import ForwardCache


@dataclass(frozen=True)
class LossBreakdown:
    ce: float
    icf: float
    total: float
    lam: float

    @classmethod
    def combine(cls, ce: float, icf: float, lam: float) -> "LossBreakdown":
        return cls(float(ce), float(icf), float(ce + lam * icf), float(lam))


def class_mask(active: Iterable[int], n_classes: int) -> np.ndarray:
    mask = np.zeros(n_classes, dtype=bool)
    idx = np.fromiter(active, dtype=np.int64)
    if idx.size == 0:
        raise LabelError("active class set is empty")
    if idx.min() < 0 or idx.max() >= n_classes:
        raise LabelError(f"active classes {sorted(idx.tolist())} outside 0..{n_classes - 1}")
    mask[idx] = True
    return mask


def _as_mask(mask, n_classes: int) -> np.ndarray:
    if isinstance(mask, np.ndarray) and mask.dtype == bool:
        if mask.shape != (n_classes,):
            raise ShapeError(f"mask shape {mask.shape} != ({n_classes},)")
        if not mask.any():
            raise LabelError("active class set is empty")
        return mask
    return class_mask(mask, n_classes)


def cross_entropy(logits, labels, mask) -> tuple[float, np.ndarray]:
    """Mean NLL of ``labels`` under a softmax restricted to ``mask``.

    ``mask`` is either a boolean vector over classes or an iterable of class ids.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"{labels.shape[0] if labels.ndim else 0} labels for {n} logit rows")
    active = _as_mask(mask, k)
    if np.any((labels < 0) | (labels >= k)) or not np.all(active[labels]):
        raise LabelError("label outside the active class set")

    shifted = np.where(active, logits, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1)
    rows = np.arange(n)
    loss = float(np.mean(np.log(denom) - shifted[rows, labels]))
    grad = exp / denom[:, None]
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad


def total_loss(cache: ForwardCache, labels, store: CentroidStore, lam: float, mask,
               icf_rows=None) -> tuple[LossBreakdown, np.ndarray, np.ndarray]:
    """CE over every row plus ``lam`` times the mean ICF over ``icf_rows``.

    ``icf_rows`` is a boolean row selector; ``None`` selects every row.
    Returns the breakdown and the gradients at the logits and at the features.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    ce, dlogits = cross_entropy(cache.logits, labels, mask)
    feats = cache.features
    dfeat = np.zeros_like(feats)
    icf = 0.0
    if len(store):
        sel = np.ones(feats.shape[0], dtype=bool) if icf_rows is None else np.asarray(icf_rows, dtype=bool)
        count = int(sel.sum())
        if count:
            losses, grads = icf_loss_rows(feats[sel], store)
            icf = float(losses.sum() / count)
            dfeat[sel] = (lam / count) * grads
    return LossBreakdown.combine(ce, icf, lam), dlogits, dfeat
