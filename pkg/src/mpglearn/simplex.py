"""Euclidean projections onto the probability simplex and its xi-greedy shrinkage.

Both projections use the sort-and-threshold rule: with the entries of v sorted
in descending order u_1 >= ... >= u_A, the projection is max(v - tau, 0) where
tau = (sum of the rho largest entries - 1) / rho and rho is the largest k with
u_k + (1 - sum_{j<=k} u_j) / k > 0. The threshold formula is stable under ties,
so ties need no special handling. Cost is O(A log A) per row.
"""

from __future__ import annotations

import numpy as np


def _validate_finite(v: np.ndarray) -> None:
    if not np.all(np.isfinite(v)):
        raise ValueError("projection input contains NaN or infinity")


def project_rows_simplex(points: np.ndarray) -> np.ndarray:
    """Project each row of a (..., A) array onto the probability simplex."""
    points = np.asarray(points, dtype=float)
    _validate_finite(points)
    a = points.shape[-1]
    u = np.sort(points, axis=-1)[..., ::-1]
    cumulative = np.cumsum(u, axis=-1)
    k = np.arange(1, a + 1)
    feasible = u + (1.0 - cumulative) / k > 0.0
    # The k=1 column is always feasible, so the last feasible index exists.
    rho = a - 1 - np.argmax(feasible[..., ::-1], axis=-1)
    chosen = np.take_along_axis(cumulative, rho[..., None], axis=-1)[..., 0]
    tau = (chosen - 1.0) / (rho + 1.0)
    return np.maximum(points - tau[..., None], 0.0)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a single vector onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    return project_rows_simplex(v)


def project_rows_xi_simplex(points: np.ndarray, xi: float) -> np.ndarray:
    """Project rows onto {p : p >= xi/A componentwise, sum(p) = 1}.

    Substituting q = (p - (xi/A) 1) / (1 - xi) maps the floor-constrained set
    onto the plain simplex, so the projection is solved there and mapped back.
    xi = 1 collapses the set to the uniform distribution.
    """
    points = np.asarray(points, dtype=float)
    _validate_finite(points)
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"exploration rate xi={xi} outside [0, 1]")
    a = points.shape[-1]
    floor = xi / a
    if xi == 1.0:
        return np.full_like(points, floor)
    shrunk = (points - floor) / (1.0 - xi)
    return (1.0 - xi) * project_rows_simplex(shrunk) + floor


def project_xi_simplex(v: np.ndarray, xi: float) -> np.ndarray:
    """Floor-constrained projection of a single vector; see project_rows_xi_simplex."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    return project_rows_xi_simplex(v, xi)
