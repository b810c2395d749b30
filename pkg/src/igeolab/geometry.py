"""Shared geometric quantities.

Unit-ball volumes, the constant of the linear/affine section identities,
and volumes of simplices spanned by point tuples.  Everything here is exact
up to floating point; Monte Carlo lives elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

# Relative singular-value cutoff below which a point tuple is treated as
# rank deficient and its simplex volume reported as exactly zero.
SV_RELATIVE_CUTOFF = 1e-12

__all__ = [
    "Dimensions",
    "unit_ball_volume",
    "unit_volume_radius",
    "bp_constant",
    "simplex0_volume",
    "simplex_volume",
]


@dataclass(frozen=True)
class Dimensions:
    """Ambient dimension n, section dimension k, and point count q.

    Validates 1 <= q <= k <= n.  The section identities are non-degenerate
    only for k <= n - 1; k == n is the endpoint where the constant collapses
    to 1 and is accepted so that the degenerate case stays testable.
    """

    n: int
    k: int
    q: int

    def __post_init__(self):
        n, k, q = self.n, self.k, self.q
        if not (isinstance(n, int) and isinstance(k, int) and isinstance(q, int)):
            raise TypeError("dimensions must be integers")
        if not 1 <= q <= k <= n:
            raise ValueError(f"need 1 <= q <= k <= n, got n={n} k={k} q={q}")


def unit_ball_volume(n: int) -> float:
    """Volume of the unit euclidean ball in dimension n (1.0 for n = 0)."""
    if not isinstance(n, (int, np.integer)) or n < 0:
        raise ValueError(f"dimension must be a non-negative integer, got {n!r}")
    return float(np.exp(0.5 * n * np.log(np.pi) - gammaln(0.5 * n + 1.0)))


def _log_unit_ball_volume(n: int) -> float:
    return 0.5 * n * np.log(np.pi) - float(gammaln(0.5 * n + 1.0))


def unit_volume_radius(n: int) -> float:
    """Radius of the n-dimensional ball of volume one."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n!r}")
    return float(np.exp(-_log_unit_ball_volume(n) / n))


def bp_constant(dims: Dimensions) -> float:
    """Constant relating an (R^n)^q integral to its section decomposition.

    Computed in log space as (q!)^(n-k) times the ratio of the top q unit
    ball volumes in dimension n to those in dimension k.  Equals 1 when
    n == k.  Note: checks that fit this constant empirically report the
    measured ratio against this value rather than assuming it.
    """
    n, k, q = dims.n, dims.k, dims.q
    if q > k or k > n:
        raise ValueError(f"need q <= k <= n, got n={n} k={k} q={q}")
    log_c = (n - k) * float(gammaln(q + 1.0))
    for m in range(n - q + 1, n + 1):
        log_c += _log_unit_ball_volume(m)
    for j in range(k - q + 1, k + 1):
        log_c -= _log_unit_ball_volume(j)
    return float(np.exp(log_c))


def _tuple_volumes(x: np.ndarray) -> np.ndarray:
    """Volumes of conv{0, rows of x[i]} for a stack x of shape (..., q, n).

    Uses singular values of each q x n matrix: the q-volume of the spanned
    parallelepiped is the product of singular values, divided by q!.
    Tuples whose smallest singular value falls below SV_RELATIVE_CUTOFF
    relative to the largest are reported as exactly zero.
    """
    x = np.asarray(x, dtype=float)
    q = x.shape[-2]
    sv = np.linalg.svd(x, compute_uv=False)
    top = sv[..., 0]
    degenerate = sv[..., -1] <= SV_RELATIVE_CUTOFF * top
    with np.errstate(divide="ignore"):
        logvol = np.sum(np.log(sv), axis=-1) - float(gammaln(q + 1.0))
    vol = np.exp(logvol)
    return np.where(degenerate | (top == 0.0), 0.0, vol)


def simplex0_volume(pts: np.ndarray) -> float:
    """q-volume of the simplex conv{0, x_1, ..., x_q}, points as rows."""
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2:
        raise ValueError("expected a (q, n) array of points")
    q, n = pts.shape
    if not 1 <= q <= n:
        raise ValueError(f"need 1 <= q <= n, got q={q} n={n}")
    return float(_tuple_volumes(pts))


def simplex_volume(pts: np.ndarray) -> float:
    """q-volume of the simplex conv{x_1, ..., x_{q+1}}, points as rows."""
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("expected a (q+1, n) array with q >= 1")
    return simplex0_volume(pts[1:] - pts[0])
