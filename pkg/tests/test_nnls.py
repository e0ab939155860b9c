import itertools

import numpy as np

from facefuse.nnls import kkt_violation, nnls


def brute_force_nnls(a, b):
    """Enumerate every passive set, keep feasible solves, take the best.

    Exact for small n; the reference the iterative solver must match.
    """
    n = a.shape[1]
    best_x = np.zeros(n)
    best_obj = float(b @ b)
    for r in range(1, n + 1):
        for subset in itertools.combinations(range(n), r):
            sub = np.array(subset)
            z, *_ = np.linalg.lstsq(a[:, sub], b, rcond=None)
            if np.any(z < 0):
                continue
            x = np.zeros(n)
            x[sub] = z
            obj = float(np.sum((a @ x - b) ** 2))
            if obj < best_obj - 1e-12:
                best_obj = obj
                best_x = x
    return best_x, best_obj


def test_matches_exhaustive_enumeration(rng):
    for trial in range(200):
        m = int(rng.integers(3, 8))
        n = int(rng.integers(1, 4))
        a = rng.standard_normal((m, n))
        b = rng.standard_normal(m)
        x, rnorm = nnls(a, b)
        ref_x, ref_obj = brute_force_nnls(a, b)
        assert np.all(x >= 0)
        assert abs(rnorm ** 2 - ref_obj) < 1e-8 * max(ref_obj, 1.0)
        assert np.allclose(x, ref_x, atol=1e-6)


def test_recovers_interior_solution(rng):
    for _ in range(50):
        a = rng.standard_normal((20, 5))
        x_true = rng.uniform(0.5, 2.0, 5)
        b = a @ x_true
        x, rnorm = nnls(a, b)
        assert np.allclose(x, x_true, atol=1e-8)
        assert rnorm < 1e-8


def test_negative_component_clamps_to_exact_zero(rng):
    for _ in range(50):
        a = rng.standard_normal((20, 5))
        x_true = rng.uniform(0.5, 2.0, 5)
        x_true[2] = -1.0
        b = a @ x_true
        x, _ = nnls(a, b)
        # the infeasible coordinate must sit exactly on the boundary
        assert x[2] == 0.0


def test_kkt_conditions_hold(rng):
    for _ in range(100):
        m = int(rng.integers(5, 30))
        n = int(rng.integers(2, 10))
        a = rng.standard_normal((m, n)) * float(rng.uniform(0.5, 50))
        b = rng.standard_normal(m) * float(rng.uniform(0.5, 50))
        x, _ = nnls(a, b)
        scale = max(np.linalg.norm(a) * np.linalg.norm(b), 1.0)
        assert kkt_violation(a, b, x) <= 1e-8 * scale


def test_zero_rhs_gives_zero(rng):
    a = rng.standard_normal((10, 4))
    x, rnorm = nnls(a, np.zeros(10))
    assert np.array_equal(x, np.zeros(4))
    assert rnorm == 0.0


def test_all_negative_correlation_gives_zero():
    # gradient at 0 is non-negative everywhere, so 0 is optimal
    a = np.eye(3)
    b = np.array([-1.0, -2.0, -0.5])
    x, rnorm = nnls(a, b)
    assert np.array_equal(x, np.zeros(3))
    assert np.isclose(rnorm, np.linalg.norm(b))


def test_duplicate_columns_terminate(rng):
    # rank-deficient designs must not cycle
    col = rng.standard_normal(12)
    a = np.column_stack([col, col, rng.standard_normal(12)])
    b = rng.standard_normal(12)
    x, rnorm = nnls(a, b)
    assert np.all(x >= 0)
    ref_x, ref_obj = brute_force_nnls(a, b)
    assert abs(rnorm ** 2 - ref_obj) < 1e-8 * max(ref_obj, 1.0)


def test_kkt_violation_flags_bad_points(rng):
    a = rng.standard_normal((15, 4))
    x_true = rng.uniform(0.5, 2.0, 4)
    b = a @ x_true
    assert kkt_violation(a, b, x_true) < 1e-10
    assert kkt_violation(a, b, x_true + 0.1) > 1e-3
    bad = x_true.copy()
    bad[0] = -0.5
    assert kkt_violation(a, b, bad) >= 0.5  # primal infeasibility reported
