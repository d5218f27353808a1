"""Small MLP split into a feature extractor and a linear classifier head.

Weights are stored ``(fan_out, fan_in)``, so an affine layer is
``x @ W.T + b``. Hidden extractor layers use ReLU; the last extractor layer
(the feature layer) is affine only, so embeddings can point anywhere on the
unit sphere after normalisation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ShapeError
from .numerics import Rng

CHECKPOINT_FORMAT = "carlab-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    """``layer_dims`` is ``(d_in, *hidden, d_feat, n_classes)``."""

    layer_dims: tuple[int, ...]
    extractor: list[tuple[np.ndarray, np.ndarray]]
    classifier: tuple[np.ndarray, np.ndarray]

    @property
    def d_in(self) -> int:
        return self.layer_dims[0]

    @property
    def d_feat(self) -> int:
        return self.layer_dims[-2]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in self.extractor:
            out += [w, b]
        out += list(self.classifier)
        return out

    @classmethod
    def from_arrays(cls, layer_dims: Sequence[int], arrays: Sequence[np.ndarray]) -> "ModelParams":
        arrays = list(arrays)
        pairs = [(arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)]
        return cls(tuple(layer_dims), pairs[:-1], pairs[-1])

    def map(self, fn) -> "ModelParams":
        return ModelParams.from_arrays(self.layer_dims, [fn(a) for a in self.arrays()])

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for a in self.arrays()])

    def unflatten(self, flat: np.ndarray) -> "ModelParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.size:
            raise ShapeError(f"expected {self.size} values, got {flat.size}")
        out, pos = [], 0
        for a in self.arrays():
            out.append(flat[pos:pos + a.size].reshape(a.shape).copy())
            pos += a.size
        return ModelParams.from_arrays(self.layer_dims, out)

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    features: np.ndarray
    logits: np.ndarray


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ModelParams, **hyper) -> "AdamState":
        return cls(params.map(np.zeros_like), params.map(np.zeros_like), **hyper)


def init_model(layer_dims: Sequence[int], rng: Rng) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 3:
        raise ShapeError("layer_dims needs at least (d_in, d_feat, n_classes)")
    if any(d < 1 for d in dims):
        raise ShapeError(f"all layer dims must be >= 1, got {dims}")
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append((w, np.zeros(fan_out)))
    return ModelParams(dims, layers[:-1], layers[-1])


def forward(params: ModelParams, batch) -> ForwardCache:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise ShapeError(f"batch shape {x.shape} does not match d_in={params.d_in}")
    pre, acts = [], [x]
    h = x
    last = len(params.extractor) - 1
    for i, (w, b) in enumerate(params.extractor):
        a = h @ w.T + b
        pre.append(a)
        h = a if i == last else np.maximum(a, 0.0)
        acts.append(h)
    wc, bc = params.classifier
    logits = h @ wc.T + bc
    return ForwardCache(x, pre, acts, h, logits)


def backward(params: ModelParams, cache: ForwardCache, dL_dlogits, dL_dfeatures) -> ModelParams:
    """Gradients w.r.t. every parameter; returned in a ``ModelParams`` container.

    ``dL_dfeatures`` is added to the classifier-backpropagated gradient at the
    feature layer, which is where feature-space penalties enter.
    """
    dlog = np.asarray(dL_dlogits, dtype=np.float64)
    dfeat = np.asarray(dL_dfeatures, dtype=np.float64)
    if dlog.shape != cache.logits.shape:
        raise ShapeError(f"dL_dlogits {dlog.shape} != logits {cache.logits.shape}")
    if dfeat.shape != cache.features.shape:
        raise ShapeError(f"dL_dfeatures {dfeat.shape} != features {cache.features.shape}")

    wc, _ = params.classifier
    classifier_grad = (dlog.T @ cache.features, dlog.sum(axis=0))
    delta = dlog @ wc + dfeat

    grads: list[tuple[np.ndarray, np.ndarray]] = []
    last = len(params.extractor) - 1
    for i in range(last, -1, -1):
        if i != last:
            delta = delta * (cache.pre_activations[i] > 0)
        w, _ = params.extractor[i]
        grads.append((delta.T @ cache.activations[i], delta.sum(axis=0)))
        if i > 0:
            delta = delta @ w
    grads.reverse()
    return ModelParams(params.layer_dims, grads, classifier_grad)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if [a.shape for a in p_arrays] != [g.shape for g in g_arrays]:
        raise ShapeError("gradient shapes do not match parameter shapes")
    t = state.t + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arrays, g_arrays, state.m.arrays(), state.v.arrays()):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_p.append(p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    dims = params.layer_dims
    new_state = AdamState(
        ModelParams.from_arrays(dims, new_m), ModelParams.from_arrays(dims, new_v),
        t, state.lr, state.beta1, state.beta2, state.eps,
    )
    return ModelParams.from_arrays(dims, new_p), new_state


def save_checkpoint(params: ModelParams, path) -> None:
    """JSON checkpoint: layer dims plus each array flattened in row-major order.

    Floats are written with ``repr`` precision so loading is bit-exact.
    """
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_dims": list(params.layer_dims),
        "arrays": [a.reshape(-1).tolist() for a in params.arrays()],
    }
    Path(path).write_text(json.dumps(record))


def load_checkpoint(path) -> ModelParams:
    record = json.loads(Path(path).read_text())
    if record.get("format") != CHECKPOINT_FORMAT or record.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version {CHECKPOINT_VERSION} carlab checkpoint")
    dims = tuple(record["layer_dims"])
    shapes = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        shapes += [(fan_out, fan_in), (fan_out,)]
    if len(shapes) != len(record["arrays"]):
        raise ShapeError("checkpoint array count does not match layer_dims")
    arrays = []
    for shape, flat in zip(shapes, record["arrays"]):
        a = np.asarray(flat, dtype=np.float64)
        if a.size != int(np.prod(shape)):
            raise ShapeError(f"checkpoint array of {a.size} values cannot take shape {shape}")
        arrays.append(a.reshape(shape))
    return ModelParams.from_arrays(dims, arrays)
