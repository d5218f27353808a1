"""Dense float64 helpers, L2 normalisation and a central-difference oracle.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. Random
streams use numpy's ``Generator`` over the PCG64 bit generator, seeded through
``SeedSequence`` so that independent purposes (shuffling, exemplar selection,
...) draw from independent, reproducible streams.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ShapeError

NORM_EPS = 1e-12

Rng = np.random.Generator


def make_rng(seed: int, *stream: int) -> Rng:
    """PCG64 generator for ``seed``; ``stream`` keys derive independent substreams."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def as_matrix(data, cols: int | None = None) -> np.ndarray:
    m = np.asarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1) if cols is None else m.reshape(-1, cols)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got {m.ndim} dimensions")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("matmul produced non-finite entries")
    return out


def l2_normalize(v) -> np.ndarray:
    """Return ``v / ||v||``, or zeros when the norm is at most ``NORM_EPS``."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ShapeError("cannot normalise an empty vector")
    norm = np.sqrt(np.dot(v, v))
    if norm <= NORM_EPS:
        return np.zeros_like(v)
    return v / norm


def l2_normalize_backward(v, upstream_grad) -> np.ndarray:
    """Vector-Jacobian product of ``l2_normalize`` at ``v``.

    The Jacobian is ``(I - u u^T) / ||v||`` with ``u = v / ||v||``; it is
    symmetric, so this is also ``J @ upstream_grad``.
    """
    v = np.asarray(v, dtype=np.float64)
    g = np.asarray(upstream_grad, dtype=np.float64)
    if v.shape != g.shape:
        raise ShapeError(f"vector {v.shape} and gradient {g.shape} differ")
    norm = np.sqrt(np.dot(v, v))
    if norm <= NORM_EPS:
        return np.zeros_like(v)
    u = v / norm
    return (g - u * np.dot(u, g)) / norm


def l2_normalize_rows(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``l2_normalize``; also returns the row norms."""
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    safe = np.where(norms > NORM_EPS, norms, 1.0)
    out = m / safe[:, None]
    out[norms <= NORM_EPS] = 0.0
    return out, norms


def l2_normalize_rows_backward(unit: np.ndarray, norms: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    proj = np.einsum("ij,ij->i", unit, upstream)
    safe = np.where(norms > NORM_EPS, norms, 1.0)
    out = (upstream - unit * proj[:, None]) / safe[:, None]
    out[norms <= NORM_EPS] = 0.0
    return out


def finite_difference_gradient(f: Callable[[np.ndarray], float], at, step: float = 1e-5) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` for every coordinate.

    ``f`` may compute in a wider float type; the difference is formed before
    narrowing to float64.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x0 = np.array(at, dtype=np.float64)
    flat = x0.reshape(-1)
    grad = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fplus = f(x0.copy())
        flat[i] = orig - step
        fminus = f(x0.copy())
        flat[i] = orig
        grad[i] = (fplus - fminus) / (2.0 * step)
    return grad.reshape(x0.shape)


def gradient_mismatch(analytic, numeric, rel_tol: float, abs_floor: float = 1e-8) -> np.ndarray:
    """Boolean mask of coordinates failing a per-coordinate gradient comparison.

    Coordinates whose analytic magnitude is below ``abs_floor`` are judged by
    absolute error against ``abs_floor``; all others by relative error.
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    diff = np.abs(a - n)
    small = np.abs(a) < abs_floor
    rel = diff / np.maximum(np.abs(a), np.abs(n)).clip(min=abs_floor)
    return np.where(small, diff >= abs_floor, rel >= rel_tol)
