"""Triangle quadrature rules.

Rules are built as conical products of Gauss-Jacobi (weight 1-x) and
Gauss-Legendre nodes, then symmetrized over the cyclic barycentric
rotations.  Nodes and weights come from eigenvalue solvers, so the rules
are exact to machine precision for their stated degree - no table
truncation.  Weights are normalized to sum to 1: integrating f over a
physical triangle T is |T| * sum(w_i * f(x_i)).
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = ["QuadRule", "quadrature", "refine", "edge_rule"]

_SUPPORTED = range(2, 11)


class QuadRule(NamedTuple):
    """Barycentric points (K, 3) and weights (K,) summing to 1."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def npoints(self) -> int:
        return self.points.shape[0]


def _conical(n: int):
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    x = 0.5 * (xj + 1.0)
    eta = 0.5 * (xl + 1.0)
    X = np.repeat(x, n)
    Y = np.outer(1.0 - x, eta).ravel()
    W = np.outer(wj, wl).ravel() / 8.0
    lam = np.stack([1.0 - X - Y, X, Y], axis=1)
    return lam, W / W.sum()  # normalize: conical weights sum to |T_ref| = 1/2


def quadrature(degree: int) -> QuadRule:
    """Symmetric rule exact for all polynomials up to `degree` (2..10)."""
    if degree not in _SUPPORTED:
        raise ValueError(f"unsupported quadrature degree {degree}; need 2..10")
    n = (degree + 2) // 2  # conical n-by-n product is exact through 2n-1
    lam, w = _conical(n)
    pts = np.concatenate([lam, lam[:, [1, 2, 0]], lam[:, [2, 0, 1]]])
    wts = np.concatenate([w, w, w]) / 3.0
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts)


# Barycentric vertices of the four congruent children of a triangle.
_CHILDREN = np.array([
    [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]],
    [[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]],
    [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]],
    [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]],
])


def refine(rule: QuadRule, levels: int = 1) -> QuadRule:
    """Composite rule on 4^levels congruent subtriangles.

    Same exactness degree as the base rule with the error constant cut by
    the subdivision; used for integrals of non-polynomial data.
    """
    pts, wts = rule.points, rule.weights
    for _ in range(levels):
        pts = np.concatenate([pts @ child for child in _CHILDREN])
        wts = np.tile(wts / 4.0, 4)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts)


def edge_rule(npoints: int):
    """Gauss-Legendre nodes/weights on [0, 1] for edge line integrals."""
    x, w = roots_legendre(npoints)
    return 0.5 * (x + 1.0), 0.5 * w
