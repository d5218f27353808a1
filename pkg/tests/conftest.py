import numpy as np
import pytest

from carlab.geometry import CentroidStore
from carlab.model import backward, forward, init_model
from carlab.numerics import finite_difference_gradient, gradient_mismatch, make_rng
from carlab.objective import total_loss

from reference import reference_total_loss


def random_store(rng, d_feat, n_centroids, first_class=0):
    # centroids are means of unit vectors, so keep them inside the unit ball
    entries = {}
    for j in range(n_centroids):
        v = rng.standard_normal(d_feat)
        entries[first_class + j] = v / np.linalg.norm(v) * rng.uniform(0.2, 1.0)
    return CentroidStore(d_feat, entries)


def random_problem(seed, lam=1.0, n_centroids=2, batch=6):
    """A small random network, batch, labels, mask and centroid store."""
    rng = make_rng(seed, 123)
    d_in = int(rng.integers(3, 9))
    hidden = tuple(int(h) for h in rng.integers(4, 17, size=int(rng.integers(1, 3))))
    d_feat = int(rng.integers(3, 9))
    n_classes = int(rng.integers(2, 5))
    params = init_model((d_in, *hidden, d_feat, n_classes), rng)
    # non-zero biases so no unit is dead at zero by construction
    params = params.map(lambda a: a + 0.1 * rng.standard_normal(a.shape))
    x = rng.standard_normal((batch, d_in))
    y = rng.integers(0, n_classes, size=batch)
    store = random_store(rng, d_feat, n_centroids, first_class=n_classes)
    icf_rows = rng.random(batch) < 0.7
    icf_rows[0] = True
    return params, x, y, store, lam, np.ones(n_classes, dtype=bool), icf_rows


def check_total_loss_gradient(params, x, y, store, lam, mask, icf_rows, rel_tol=1e-5):
    """Compare backprop gradients of the total loss with central differences.

    The differences are taken on the long-double reference objective, not on
    the production code path.
    """
    cache = forward(params, x)
    _, dlog, dfeat = total_loss(cache, y, store, lam, mask, icf_rows)
    analytic = backward(params, cache, dlog, dfeat).flatten()
    centroids = [store.entries[c] for c in sorted(store.entries)]

    def f(flat):
        return reference_total_loss(flat, params.layer_dims, x, y, centroids, lam, mask, icf_rows)

    numeric = finite_difference_gradient(f, params.flatten())
    bad = gradient_mismatch(analytic, numeric, rel_tol)
    return analytic, numeric, bad


@pytest.fixture
def rng():
    return make_rng(2024)


# Acceptance criteria register their verdicts here; printed at session end.
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
