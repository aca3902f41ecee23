"""Simplex projections against closed forms, KKT conditions, and the lattice oracle."""

import numpy as np
import pytest

from mpglearn import project_rows_simplex, project_rows_xi_simplex, project_simplex, project_xi_simplex

from lattice_oracle import lattice_nearest, lattice_nearest_enumerated


def test_point_already_on_simplex_is_fixed():
    v = np.array([0.2, 0.5, 0.3])
    assert np.array_equal(project_simplex(v), v)


def test_nearest_vertex():
    assert np.allclose(project_simplex(np.array([2.0, 0.0])), [1.0, 0.0], atol=0)


def test_mixed_sign_example_kkt():
    v = np.array([0.5, 0.5, -1.0])
    p = project_simplex(v)
    assert np.allclose(p, [0.5, 0.5, 0.0], atol=1e-15)
    # KKT: active coordinates share one multiplier, inactive ones lie below it.
    active = p > 0
    tau = (v[active] - p[active]).mean()
    assert np.allclose(v[active] - p[active], tau, atol=1e-12)
    assert np.all(v[~active] <= tau + 1e-12)


def test_projection_rejects_nonfinite():
    with pytest.raises(ValueError):
        project_simplex(np.array([np.nan, 0.0]))
    with pytest.raises(ValueError):
        project_xi_simplex(np.array([np.inf, 0.0]), 0.1)


def test_idempotence_exact_and_numeric():
    rng = np.random.default_rng(5)
    for _ in range(300):
        v = rng.normal(scale=3.0, size=rng.integers(1, 7))
        p = project_simplex(v)
        q = project_simplex(p)
        assert np.max(np.abs(p - q)) <= 1e-12


def test_nonexpansiveness_on_random_pairs():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        a = int(rng.integers(1, 7))
        u = rng.normal(scale=3.0, size=a)
        v = rng.normal(scale=3.0, size=a)
        lhs = np.linalg.norm(project_simplex(u) - project_simplex(v))
        assert lhs <= np.linalg.norm(u - v) + 1e-12


def test_row_batched_projection_matches_single():
    rng = np.random.default_rng(7)
    rows = rng.normal(scale=2.0, size=(40, 5))
    batched = project_rows_simplex(rows)
    for k in range(rows.shape[0]):
        assert np.array_equal(batched[k], project_simplex(rows[k]))


def test_xi_zero_coincides_with_plain_projection():
    rng = np.random.default_rng(8)
    for _ in range(100):
        v = rng.normal(size=4)
        assert np.allclose(project_xi_simplex(v, 0.0), project_simplex(v), atol=1e-14)


def test_xi_one_returns_uniform():
    v = np.array([9.0, -3.0, 0.5])
    assert np.allclose(project_xi_simplex(v, 1.0), np.full(3, 1 / 3), atol=0)


def test_xi_half_two_dim_closed_form():
    got = project_xi_simplex(np.array([1.0, 0.0]), 0.5)
    assert np.allclose(got, [0.75, 0.25], atol=1e-15)


def test_xi_floor_respected():
    rng = np.random.default_rng(9)
    for _ in range(300):
        a = int(rng.integers(2, 7))
        xi = float(rng.uniform(0.0, 1.0))
        v = rng.normal(scale=4.0, size=a)
        p = project_xi_simplex(v, xi)
        assert p.min() >= xi / a - 1e-12
        assert abs(p.sum() - 1.0) <= 1e-10


def test_xi_out_of_range_rejected():
    with pytest.raises(ValueError):
        project_xi_simplex(np.ones(2), -0.1)
    with pytest.raises(ValueError):
        project_rows_xi_simplex(np.ones((1, 2)), 1.5)


def test_lattice_oracle_dp_matches_enumeration():
    rng = np.random.default_rng(10)
    for _ in range(25):
        v = rng.normal(scale=1.5, size=3)
        assert np.allclose(lattice_nearest(v, 60), lattice_nearest_enumerated(v, 60), atol=0)


def test_projection_beats_fine_lattice_small_sample():
    # The full 1000-vector sweep runs in the acceptance suite.
    rng = np.random.default_rng(11)
    m = 1000
    for _ in range(20):
        a = int(rng.integers(2, 6))
        v = rng.normal(scale=2.0, size=a)
        p = project_simplex(v)
        q = lattice_nearest(v, m)
        d_p = np.linalg.norm(p - v)
        d_q = np.linalg.norm(q - v)
        assert d_p <= d_q + 1e-12
        assert d_q <= d_p + np.sqrt(a) / m
