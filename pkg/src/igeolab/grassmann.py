"""Subspaces and flats: invariant sampling and geometry.

Haar measure on the set of k-dimensional linear subspaces of R^n is realized
by QR factorization of Gaussian matrices (sign-fixed so the factorization is
unique).  The invariant measure on affine k-flats is infinite; flats are
sampled inside a window of radius R around the origin and carry the
importance weight that makes window-supported integrands unbiased, with the
normalization fixed so that the measure of flats meeting the unit ball is
the unit-ball volume of the orthogonal dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import unit_ball_volume

# Orthonormality and perpendicularity tolerance for constructed frames.
FRAME_TOL = 1e-10
# Rejection budget for conditioned perturbation draws.
PERTURB_MAX_TRIES = 10_000

__all__ = [
    "Subspace",
    "Flat",
    "WeightedFlat",
    "sample_subspace",
    "project",
    "grassmann_distance",
    "sample_flat",
    "perturb_subspace",
    "haar_bases",
    "haar_frames",
    "flat_frames",
    "uniform_ball",
]


@dataclass(frozen=True, eq=False)
class Subspace:
    """A k-dimensional linear subspace of R^n, stored as an orthonormal basis.

    basis has shape (n, k) with orthonormal columns; the array is copied and
    frozen at construction.
    """

    basis: np.ndarray

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] < b.shape[1] or b.shape[1] < 1:
            raise ValueError(f"basis must be (n, k) with 1 <= k <= n, got {b.shape}")
        gram = b.T @ b
        if np.abs(gram - np.eye(b.shape[1])).max() > FRAME_TOL:
            raise ValueError("basis columns are not orthonormal")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    @cached_property
    def projector(self) -> np.ndarray:
        p = self.basis @ self.basis.T
        p.setflags(write=False)
        return p

    @cached_property
    def complement(self) -> "Subspace":
        """Orthogonal complement, from the full QR of the basis."""
        q, _ = np.linalg.qr(self.basis, mode="complete")
        return Subspace(q[:, self.k:])

    def coords(self, x: np.ndarray) -> np.ndarray:
        """Basis coordinates of the projection of x, shape (..., k)."""
        return np.asarray(x, dtype=float) @ self.basis

    def point(self, u: np.ndarray) -> np.ndarray:
        """Ambient point with basis coordinates u, shape (..., n)."""
        return np.asarray(u, dtype=float) @ self.basis.T


@dataclass(frozen=True, eq=False)
class Flat:
    """An affine k-flat offset + E, with the offset perpendicular to E."""

    subspace: Subspace
    offset: np.ndarray

    def __post_init__(self):
        z = np.array(self.offset, dtype=float)
        if z.shape != (self.subspace.n,):
            raise ValueError(f"offset must be an {self.subspace.n}-vector")
        if np.abs(self.subspace.coords(z)).max() > FRAME_TOL:
            raise ValueError("offset must be perpendicular to the subspace")
        z.setflags(write=False)
        object.__setattr__(self, "offset", z)

    @property
    def n(self) -> int:
        return self.subspace.n

    @property
    def k(self) -> int:
        return self.subspace.k

    @property
    def distance_to_origin(self) -> float:
        return float(np.linalg.norm(self.offset))

    def point(self, u: np.ndarray) -> np.ndarray:
        """Ambient point at flat coordinates u, shape (..., n)."""
        return self.subspace.point(u) + self.offset


@dataclass(frozen=True, eq=False)
class WeightedFlat:
    """A sampled flat with its importance weight for windowed integration."""

    flat: Flat
    weight: float


def sample_subspace(n: int, k: int, rng: np.random.Generator) -> Subspace:
    """Haar-distributed k-dimensional subspace of R^n."""
    return Subspace(haar_bases(n, k, 1, rng)[0])


def haar_bases(n: int, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of Haar orthonormal bases, shape (size, n, k)."""
    _check_nk(n, k)
    a = rng.standard_normal((size, n, k))
    q, r = np.linalg.qr(a)
    return q * _diag_signs(r)[..., None, :]


def haar_frames(n: int, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Stack of full frames (size, n, n): columns [:k] span a Haar subspace,
    columns [k:] its orthogonal complement."""
    _check_nk(n, k)
    a = rng.standard_normal((size, n, k))
    q, r = np.linalg.qr(a, mode="complete")
    q[..., :k] *= _diag_signs(r[..., :k, :])[..., None, :]
    return q


def _diag_signs(r: np.ndarray) -> np.ndarray:
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1)).copy()
    d[d == 0.0] = 1.0
    return d


def _check_nk(n: int, k: int):
    if not 1 <= k <= n - 1:
        raise ValueError(f"need 1 <= k <= n-1, got n={n} k={k}")


def project(E: Subspace, x: np.ndarray) -> np.ndarray:
    """Orthogonal projection of x onto E, as an ambient vector."""
    return E.point(E.coords(x))


def grassmann_distance(E: Subspace, F: Subspace) -> float:
    """Operator norm of the difference of the orthogonal projectors."""
    if E.n != F.n:
        raise ValueError("subspaces live in different ambient dimensions")
    return float(np.linalg.norm(E.projector - F.projector, 2))


def distances_to(E: Subspace, bases: np.ndarray) -> np.ndarray:
    """grassmann_distance from E to each same-dimension basis in a stack.

    For equal dimensions the projector-difference norm is the largest
    principal-angle sine, read off the singular values of B0^T B_i.
    """
    cos = np.linalg.svd(E.basis.T @ np.asarray(bases), compute_uv=False)
    smallest = np.clip(cos[..., -1], 0.0, 1.0)
    return np.sqrt(1.0 - smallest * smallest)


def uniform_ball(dim: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points in the unit ball of R^dim, shape (size, dim)."""
    g = rng.standard_normal((size, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = rng.random(size) ** (1.0 / dim)
    return g / norms * radii[:, None]


def flat_frames(n: int, k: int, R: float, size: int, rng: np.random.Generator):
    """Windowed invariant flats, batched.

    Returns (bases, offsets, weight): bases (size, n, k); offsets (size, n)
    perpendicular to the respective subspace, uniform in the radius-R ball
    of the complement; weight the common importance factor
    unit_ball_volume(n-k) * R^(n-k).  Estimators weight * mean(g) are
    unbiased for invariant-measure integrands vanishing on flats farther
    than R from the origin.
    """
    if R <= 0:
        raise ValueError("window radius must be positive")
    frames = haar_frames(n, k, size, rng)
    v = uniform_ball(n - k, size, rng) * R
    offsets = np.einsum("sij,sj->si", frames[..., k:], v)
    weight = unit_ball_volume(n - k) * R ** (n - k)
    return frames[..., :k], offsets, weight


def sample_flat(n: int, k: int, R: float, rng: np.random.Generator) -> WeightedFlat:
    """One windowed invariant flat with its importance weight."""
    bases, offsets, weight = flat_frames(n, k, R, 1, rng)
    return WeightedFlat(Flat(Subspace(bases[0]), offsets[0]), weight)


def perturb_subspace(E: Subspace, eta: float, rng: np.random.Generator) -> Subspace:
    """Draw a subspace conditioned to lie within eta of E.

    Proposal: orthonormalize E's basis plus a Gaussian matrix scaled so the
    typical displacement sits inside eta, then reject until
    grassmann_distance(E, draw) <= eta.  Raises after PERTURB_MAX_TRIES.
    """
    if not 0.0 < eta < 2.0:
        raise ValueError(f"eta must lie in (0, 2), got {eta}")
    n, k = E.n, E.k
    tau = 0.7 * eta / (np.sqrt(k) + np.sqrt(n - k))
    for _ in range(PERTURB_MAX_TRIES):
        g = rng.standard_normal((n, k))
        q, r = np.linalg.qr(E.basis + tau * g)
        candidate = Subspace(q * _diag_signs(r))
        if grassmann_distance(E, candidate) <= eta:
            return candidate
    raise RuntimeError(f"no draw within eta={eta} after {PERTURB_MAX_TRIES} tries")
