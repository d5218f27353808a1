import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from carlab.errors import ShapeError
from carlab.numerics import (
    finite_difference_gradient,
    gradient_mismatch,
    l2_normalize,
    l2_normalize_backward,
    l2_normalize_rows,
    make_rng,
    matmul,
)


def test_matmul_examples():
    assert np.array_equal(matmul(np.eye(2), [[3.0], [4.0]]), [[3.0], [4.0]])
    assert np.array_equal(matmul([[1.0, 2.0]], [[3.0], [4.0]]), [[11.0]])
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_matmul_associative(rng):
    for _ in range(20):
        n, k, m, p = rng.integers(1, 12, size=4)
        a, b, c = rng.standard_normal((n, k)), rng.standard_normal((k, m)), rng.standard_normal((m, p))
        left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
        scale = np.abs(a) @ np.abs(b) @ np.abs(c)
        assert np.all(np.abs(left - right) <= 1e-9 * scale)


def test_l2_normalize_examples():
    assert np.array_equal(l2_normalize([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0])
    assert np.allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8], rtol=0, atol=1e-15)
    assert np.array_equal(l2_normalize([0.0, 0.0]), [0.0, 0.0])
    assert np.array_equal(l2_normalize([1e-13, 0.0]), [0.0, 0.0])


def test_l2_normalize_backward_examples():
    assert np.array_equal(l2_normalize_backward([1.0, 0.0], [0.0, 1.0]), [0.0, 1.0])
    assert np.array_equal(l2_normalize_backward([1.0, 0.0], [1.0, 0.0]), [0.0, 0.0])
    assert np.array_equal(l2_normalize_backward([0.0, 0.0], [1.0, 2.0]), [0.0, 0.0])
    with pytest.raises(ShapeError):
        l2_normalize_backward([1.0, 0.0], [1.0, 0.0, 0.0])


vectors = arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e3, 1e3))


@given(vectors, st.floats(1e-3, 1e3))
def test_normalize_unit_and_scale_invariant(v, alpha):
    if np.linalg.norm(v) <= 1e-6:
        return
    u = l2_normalize(v)
    assert abs(np.linalg.norm(u) - 1.0) <= 1e-12
    assert np.allclose(l2_normalize(alpha * v), u, rtol=0, atol=1e-12)


def test_rows_match_vector_version(rng):
    m = rng.standard_normal((7, 5))
    m[3] = 0.0
    unit, norms = l2_normalize_rows(m)
    for i in range(7):
        assert np.allclose(unit[i], l2_normalize(m[i]), rtol=0, atol=1e-15)
    assert norms[3] == 0.0


def test_normalize_backward_matches_finite_differences():
    rng = make_rng(7, 1)
    for _ in range(100):
        d = int(rng.integers(2, 65))
        v = rng.uniform(-5, 5, size=d)
        if np.linalg.norm(v) <= 0.1:
            continue
        g = rng.standard_normal(d)
        analytic = l2_normalize_backward(v, g)
        # long-double reference of <v/|v|, g>
        ref = lambda w: np.dot(w.astype(np.longdouble) / np.sqrt(np.sum(w.astype(np.longdouble) ** 2)), g)
        numeric = finite_difference_gradient(ref, v)
        assert not gradient_mismatch(analytic, numeric, 1e-6).any()


def test_finite_difference_examples():
    g = finite_difference_gradient(lambda x: float(x[0] ** 2), np.array([3.0]), 1e-5)
    assert abs(g[0] - 6.0) < 1e-8
    assert np.array_equal(finite_difference_gradient(lambda x: 4.2, np.ones(5)), np.zeros(5))
    with pytest.raises(ValueError):
        finite_difference_gradient(lambda x: 0.0, np.ones(2), 0.0)


def test_gradient_mismatch_uses_absolute_floor():
    assert not gradient_mismatch([1e-9], [5e-9], 1e-5).any()
    assert gradient_mismatch([1e-9], [2e-8], 1e-5).all()
    assert gradient_mismatch([1.0], [1.0 + 2e-5], 1e-5).all()
    assert not gradient_mismatch([1.0], [1.0 + 5e-6], 1e-5).any()


def test_rng_streams_reproducible_and_distinct():
    a = make_rng(5, 1, 2).random(4)
    assert np.array_equal(a, make_rng(5, 1, 2).random(4))
    assert not np.array_equal(a, make_rng(5, 1, 3).random(4))
    assert not np.array_equal(a, make_rng(6, 1, 2).random(4))
