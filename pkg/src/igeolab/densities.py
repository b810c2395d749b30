"""Density models with exact section and marginal capabilities.

Every model knows its ambient dimension, total mass, sup, a support radius,
and how to sample its normalized law.  Families that admit closed forms
additionally expose three exact capabilities, and everything else in the
package is built from them:

* ``slice(S)``: the restriction of f to a subspace or flat, as a model on
  the section's own coordinates.  The mass of the slice of the fiber
  E-perp + x is exactly the marginal density of f at x, so marginals come
  for free.
* ``power(p)``: the pointwise power f^p as a model, so that the Lp norm of
  a section is ``f.power(p).slice(S).mass ** (1/p)``.
* ``superlevel_volume(t)``: |{f > t}|, which drives the layer-cake
  rearrangement.

Monte Carlo fallbacks cover models without a closed form; sampled sup
estimates are flagged biased low.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from scipy.special import gammaln
from scipy.stats import chi2

from .geometry import unit_ball_volume
from .grassmann import Flat, Subspace, uniform_ball
from .report import Estimate

# |det A| must match 1 to this tolerance for volume-preserving maps.
DET_TOL = 1e-10
# Basis entries below this are treated as exact zeros when recognizing
# coordinate-aligned sections of product densities.
AXIS_TOL = 1e-12
# Box-enumeration cap for exact product superlevel volumes.
PRODUCT_ENUM_CAP = 300_000

__all__ = [
    "DensityModel",
    "EllipsoidIndicator",
    "GaussianDensity",
    "TruncatedGaussian",
    "ProductDensity",
    "RadialGridDensity",
    "Grid1D",
    "Step1D",
    "affine_image",
    "sample_point",
    "restriction_stats",
    "marginal_density",
    "read_density_text",
    "write_density_text",
]


class DensityModel:
    """Base class; subclasses fill in the family specifics."""

    n: int

    # -- required family interface ------------------------------------
    def eval_many(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def mass(self) -> float:
        raise NotImplementedError

    @property
    def sup(self) -> float:
        raise NotImplementedError

    @property
    def support_radius(self) -> float:
        """Smallest R with f = 0 outside the centered ball of radius R
        (inf for full support)."""
        raise NotImplementedError

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw from the mass-normalized law of f, shape (size, n)."""
        raise NotImplementedError

    # -- optional exact capabilities -----------------------------------
    def slice(self, S):
        """Restriction to a Subspace or Flat as a model on the section
        coordinates, or None when no closed form exists."""
        return None

    def power(self, p: float):
        """The pointwise power f**p as a model, or None."""
        return None

    def superlevel_volume(self, t: float):
        """|{f > t}| for t > 0, or None."""
        return None

    def superlevel_volumes(self, ts: np.ndarray):
        out = np.empty(len(ts))
        for i, t in enumerate(ts):
            v = self.superlevel_volume(float(t))
            if v is None:
                return None
            out[i] = v
        return out

    def slice_stats_batch(self, bases: np.ndarray, offsets: np.ndarray):
        """(mass, sup) arrays for a stack of flats, exact families only."""
        k = bases.shape[-1]
        count = bases.shape[0]
        masses = np.empty(count)
        sups = np.empty(count)
        for i in range(count):
            sl = self.slice(Flat(Subspace(bases[i]), offsets[i])) if k < self.n \
                else None
            if sl is None:
                return None
            masses[i] = sl.mass
            sups[i] = sl.sup
        return masses, sups

    # -- shared plumbing ------------------------------------------------
    def eval(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(self.eval_many(x[None, :])[0])
        return self.eval_many(x)

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "n": self.n}


def _as_section(S) -> tuple[Subspace, np.ndarray]:
    if isinstance(S, Subspace):
        return S, np.zeros(S.n)
    if isinstance(S, Flat):
        return S.subspace, np.asarray(S.offset)
    raise TypeError(f"expected Subspace or Flat, got {type(S).__name__}")


class EllipsoidIndicator(DensityModel):
    """a * indicator((x-c)^T M (x-c) <= 1) for symmetric positive M."""

    def __init__(self, shape: np.ndarray, center=None, amplitude: float = 1.0):
        m = np.atleast_2d(np.asarray(shape, dtype=float))
        n = m.shape[0]
        if m.shape != (n, n) or np.abs(m - m.T).max() > 1e-12:
            raise ValueError("shape must be a symmetric (n, n) matrix")
        if amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        self.n = n
        self.shape_matrix = m
        self.center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        self.amplitude = float(amplitude)
        self._chol = np.linalg.cholesky(m)       # raises unless positive definite
        eigvals = np.linalg.eigvalsh(m)
        self._semiaxis_max = 1.0 / math.sqrt(float(eigvals[0]))
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    @classmethod
    def ball(cls, n: int, radius: float = 1.0, center=None, amplitude: float = 1.0):
        return cls(np.eye(n) / radius ** 2, center, amplitude)

    def eval_many(self, x):
        d = x - self.center
        quad = np.einsum("si,ij,sj->s", d, self.shape_matrix, d)
        return self.amplitude * (quad <= 1.0)

    @property
    def mass(self):
        return self.amplitude * unit_ball_volume(self.n) * math.exp(-0.5 * self._logdet)

    @property
    def sup(self):
        return self.amplitude

    @property
    def support_radius(self):
        if self.amplitude == 0.0:
            return 0.0
        return float(np.linalg.norm(self.center)) + self._semiaxis_max

    def sample(self, size, rng):
        u = uniform_ball(self.n, size, rng)
        y = np.linalg.solve(self._chol.T, u.T).T
        return self.center + y

    def power(self, p):
        return EllipsoidIndicator(self.shape_matrix, self.center, self.amplitude ** p)

    def slice(self, S):
        E, z = _as_section(S)
        b_mat = E.basis
        d = z - self.center
        g = b_mat.T @ self.shape_matrix @ b_mat
        rhs = b_mat.T @ (self.shape_matrix @ d)
        u0 = -np.linalg.solve(g, rhs)
        rho = 1.0 - float(d @ self.shape_matrix @ d) - float(rhs @ u0)
        if rho <= 0.0:
            return EllipsoidIndicator(g, u0, 0.0)
        return EllipsoidIndicator(g / rho, u0, self.amplitude)

    def superlevel_volume(self, t):
        if self.amplitude == 0.0 or t >= self.amplitude:
            return 0.0
        return unit_ball_volume(self.n) * math.exp(-0.5 * self._logdet)

    def slice_stats_batch(self, bases, offsets):
        m_mat = self.shape_matrix
        k = bases.shape[-1]
        d = offsets - self.center
        md = d @ m_mat
        g = np.einsum("sji,jl,slm->sim", bases, m_mat, bases)
        rhs = np.einsum("sji,sj->si", bases, md)
        u0 = -np.linalg.solve(g, rhs[..., None])[..., 0]
        rho = 1.0 - np.einsum("si,si->s", d, md) - np.einsum("si,si->s", rhs, u0)
        live = rho > 0.0
        sign, logdet = np.linalg.slogdet(g)
        masses = np.zeros(len(bases))
        masses[live] = self.amplitude * unit_ball_volume(k) * np.exp(
            0.5 * k * np.log(rho[live]) - 0.5 * logdet[live])
        sups = np.where(live, self.amplitude, 0.0)
        return masses, sups

    def describe(self):
        return {"kind": "ellipsoid_indicator", "n": self.n,
                "amplitude": self.amplitude,
                "center": self.center.tolist(),
                "shape": self.shape_matrix.tolist()}


class GaussianDensity(DensityModel):
    """a * N(mean, cov) density; full support, every section exact."""

    def __init__(self, mean, cov, amplitude: float = 1.0):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        n = mean.shape[0]
        if cov.shape != (n, n) or np.abs(cov - cov.T).max() > 1e-12:
            raise ValueError("cov must be a symmetric (n, n) matrix")
        self.n = n
        self.mean = mean
        self.cov = cov
        self.amplitude = float(amplitude)
        self._chol = np.linalg.cholesky(cov)
        self._prec = np.linalg.inv(cov)
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    @classmethod
    def standard(cls, n: int):
        return cls(np.zeros(n), np.eye(n))

    def eval_many(self, x):
        d = x - self.mean
        quad = np.einsum("si,ij,sj->s", d, self._prec, d)
        return self.sup * np.exp(-0.5 * quad)

    @property
    def mass(self):
        return self.amplitude

    @property
    def sup(self):
        return self.amplitude * math.exp(-0.5 * (self.n * math.log(2 * math.pi) + self._logdet))

    @property
    def support_radius(self):
        return math.inf

    def sample(self, size, rng):
        g = rng.standard_normal((size, self.n))
        return self.mean + g @ self._chol.T

    def power(self, p):
        log_a = (p * math.log(self.amplitude) if self.amplitude != 1.0 else 0.0) \
            + 0.5 * (1.0 - p) * (self.n * math.log(2 * math.pi) + self._logdet) \
            - 0.5 * self.n * math.log(p)
        return GaussianDensity(self.mean, self.cov / p, math.exp(log_a))

    def slice(self, S):
        E, z = _as_section(S)
        b_mat = E.basis
        d = z - self.mean
        h = b_mat.T @ self._prec @ b_mat
        g = b_mat.T @ (self._prec @ d)
        u_star = -np.linalg.solve(h, g)
        m0 = float(d @ self._prec @ d) + float(g @ u_star)
        k = b_mat.shape[1]
        sign, logdet_h = np.linalg.slogdet(h)
        log_sup = math.log(self.amplitude) - 0.5 * (
            self.n * math.log(2 * math.pi) + self._logdet + m0)
        log_amp = log_sup + 0.5 * (k * math.log(2 * math.pi) - logdet_h)
        return GaussianDensity(u_star, np.linalg.inv(h), math.exp(log_amp))

    def superlevel_volume(self, t):
        if t >= self.sup:
            return 0.0
        rho = 2.0 * math.log(self.sup / t)
        return unit_ball_volume(self.n) * rho ** (0.5 * self.n) * math.exp(0.5 * self._logdet)

    def describe(self):
        return {"kind": "gaussian", "n": self.n, "amplitude": self.amplitude,
                "mean": self.mean.tolist(), "cov": self.cov.tolist()}


class TruncatedGaussian(DensityModel):
    """a * isotropic Gaussian kernel about c, cut at radius R.

    eval = a * (2 pi tau^2)^(-n/2) exp(-|x-c|^2 / (2 tau^2)) on |x-c| <= R.
    Closed under sections, powers, and superlevel sets, which makes it the
    bounded-support stand-in for Gaussians in flat integrals.
    """

    def __init__(self, center, tau: float, radius: float, amplitude: float = 1.0):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if tau <= 0 or radius <= 0:
            raise ValueError("tau and radius must be positive")
        self.n = center.shape[0]
        self.center = center
        self.tau = float(tau)
        self.radius = float(radius)
        self.amplitude = float(amplitude)

    @classmethod
    def normalized(cls, center, tau, radius):
        """Mass exactly one (a truncated Gaussian probability density)."""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        n = center.shape[0]
        cut = chi2.cdf(radius ** 2 / tau ** 2, df=n)
        return cls(center, tau, radius, 1.0 / cut)

    def _kernel_height(self):
        return self.amplitude * (2 * math.pi * self.tau ** 2) ** (-0.5 * self.n)

    def eval_many(self, x):
        d = x - self.center
        r2 = np.einsum("si,si->s", d, d)
        vals = self._kernel_height() * np.exp(-0.5 * r2 / self.tau ** 2)
        return np.where(r2 <= self.radius ** 2, vals, 0.0)

    @property
    def mass(self):
        return self.amplitude * float(chi2.cdf(self.radius ** 2 / self.tau ** 2, df=self.n))

    @property
    def sup(self):
        return self._kernel_height() if self.amplitude > 0 else 0.0

    @property
    def support_radius(self):
        if self.amplitude == 0.0:
            return 0.0
        return float(np.linalg.norm(self.center)) + self.radius

    def sample(self, size, rng):
        cut = chi2.cdf(self.radius ** 2 / self.tau ** 2, df=self.n)
        r = self.tau * np.sqrt(chi2.ppf(rng.random(size) * cut, df=self.n))
        g = rng.standard_normal((size, self.n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return self.center + g * r[:, None]

    def power(self, p):
        log_a = (p * math.log(self.amplitude) if self.amplitude > 0 else -math.inf) \
            + 0.5 * self.n * ((1.0 - p) * math.log(2 * math.pi * self.tau ** 2)
                              - math.log(p))
        amp = 0.0 if self.amplitude == 0.0 else math.exp(log_a)
        return TruncatedGaussian(self.center, self.tau / math.sqrt(p), self.radius, amp)

    def slice(self, S):
        E, z = _as_section(S)
        d = z - self.center
        w = E.basis.T @ d
        v2 = float(d @ d) - float(w @ w)
        rho2 = self.radius ** 2 - v2
        k = E.k
        scale = (2 * math.pi * self.tau ** 2) ** (-0.5 * (self.n - k)) \
            * math.exp(-0.5 * v2 / self.tau ** 2)
        if rho2 <= 0.0:
            return TruncatedGaussian(-w, self.tau, self.radius, 0.0)
        return TruncatedGaussian(-w, self.tau, math.sqrt(rho2), self.amplitude * scale)

    def superlevel_volume(self, t):
        if self.amplitude == 0.0 or t >= self.sup:
            return 0.0
        r = self.tau * math.sqrt(2.0 * math.log(self.sup / t))
        return unit_ball_volume(self.n) * min(r, self.radius) ** self.n

    def slice_stats_batch(self, bases, offsets):
        k = bases.shape[-1]
        d = offsets - self.center
        w = np.einsum("snk,sn->sk", bases, d)
        v2 = np.einsum("si,si->s", d, d) - np.einsum("si,si->s", w, w)
        rho2 = self.radius ** 2 - v2
        live = rho2 > 0.0
        damp = np.exp(-0.5 * v2 / self.tau ** 2)
        scale = (2 * math.pi * self.tau ** 2) ** (-0.5 * (self.n - k))
        masses = np.zeros(len(bases))
        masses[live] = self.amplitude * scale * damp[live] * chi2.cdf(
            rho2[live] / self.tau ** 2, df=k)
        kernel = self.amplitude * (2 * math.pi * self.tau ** 2) ** (-0.5 * self.n)
        sups = np.where(live, kernel * damp, 0.0)
        return masses, sups

    def describe(self):
        return {"kind": "truncated_gaussian", "n": self.n,
                "center": self.center.tolist(), "tau": self.tau,
                "radius": self.radius, "amplitude": self.amplitude}


class Grid1D:
    """Piecewise-constant non-negative function on [lo, hi], uniform bins."""

    def __init__(self, lo: float, hi: float, heights):
        heights = np.asarray(heights, dtype=float)
        if hi <= lo:
            raise ValueError("need lo < hi")
        if heights.ndim != 1 or heights.size == 0:
            raise ValueError("heights must be a non-empty vector")
        if np.any(~np.isfinite(heights)) or np.any(heights < 0):
            raise ValueError("heights must be finite and non-negative")
        self.lo = float(lo)
        self.hi = float(hi)
        self.heights = heights
        self.width = (hi - lo) / heights.size

    @property
    def mass(self):
        return float(self.heights.sum() * self.width)

    @property
    def sup(self):
        return float(self.heights.max())

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.floor((x - self.lo) / self.width).astype(int)
        inside = (x >= self.lo) & (x < self.hi)
        idx = np.clip(idx, 0, self.heights.size - 1)
        return np.where(inside, self.heights[idx], 0.0)

    def sample(self, size, rng):
        probs = self.heights / self.heights.sum()
        bins = rng.choice(self.heights.size, size=size, p=probs)
        return self.lo + (bins + rng.random(size)) * self.width

    def power(self, p):
        return Grid1D(self.lo, self.hi, self.heights ** p)

    def flipped(self):
        return Grid1D(-self.hi, -self.lo, self.heights[::-1])


class Step1D(DensityModel):
    """Step function on the line with arbitrary increasing breakpoints.

    The one-dimensional sections of a product density land here: their
    breakpoints come from box crossings and are not equally spaced.
    """

    def __init__(self, edges, heights):
        edges = np.asarray(edges, dtype=float)
        heights = np.asarray(heights, dtype=float)
        if edges.ndim != 1 or edges.size != heights.size + 1:
            raise ValueError("need len(edges) == len(heights) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be increasing")
        if np.any(~np.isfinite(heights)) or np.any(heights < 0):
            raise ValueError("heights must be finite and non-negative")
        self.n = 1
        self.edges = edges
        self.heights = heights

    @classmethod
    def zero(cls):
        return cls(np.array([0.0, 1.0]), np.array([0.0]))

    def eval_many(self, x):
        r = x[:, 0]
        idx = np.searchsorted(self.edges, r, side="right") - 1
        inside = (r >= self.edges[0]) & (r < self.edges[-1])
        idx = np.clip(idx, 0, self.heights.size - 1)
        return np.where(inside, self.heights[idx], 0.0)

    @property
    def mass(self):
        return float(self.heights @ np.diff(self.edges))

    @property
    def sup(self):
        return float(self.heights.max())

    @property
    def support_radius(self):
        return float(max(abs(self.edges[0]), abs(self.edges[-1])))

    def sample(self, size, rng):
        weights = self.heights * np.diff(self.edges)
        total = weights.sum()
        if total <= 0:
            raise ValueError("cannot sample from a zero density")
        bins = rng.choice(self.heights.size, size=size, p=weights / total)
        lo = self.edges[bins]
        return (lo + rng.random(size) * (self.edges[bins + 1] - lo))[:, None]

    def power(self, p):
        return Step1D(self.edges, self.heights ** p)

    def superlevel_volume(self, t):
        return float(np.diff(self.edges)[self.heights > t].sum())

    def superlevel_volumes(self, ts):
        return _sorted_tail_volumes(self.heights, np.diff(self.edges),
                                    np.asarray(ts))

    def describe(self):
        return {"kind": "step1d", "n": 1, "bins": self.heights.size}


class ProductDensity(DensityModel):
    """Product of one-dimensional piecewise-constant factors."""

    def __init__(self, factors: list, amplitude: float = 1.0):
        if not factors:
            raise ValueError("need at least one factor")
        self.n = len(factors)
        self.factors = list(factors)
        self.amplitude = float(amplitude)

    def eval_many(self, x):
        vals = np.full(x.shape[0], self.amplitude)
        for i, f in enumerate(self.factors):
            vals = vals * f.eval(x[:, i])
        return vals

    @property
    def mass(self):
        return self.amplitude * math.prod(f.mass for f in self.factors)

    @property
    def sup(self):
        return self.amplitude * math.prod(f.sup for f in self.factors)

    @property
    def support_radius(self):
        return math.sqrt(sum(max(f.lo ** 2, f.hi ** 2) for f in self.factors))

    def sample(self, size, rng):
        cols = [f.sample(size, rng) for f in self.factors]
        return np.column_stack(cols)

    def power(self, p):
        return ProductDensity([f.power(p) for f in self.factors], self.amplitude ** p)

    def slice(self, S):
        """Exact for coordinate-aligned sections (factor selection) and for
        arbitrary one-dimensional sections (box crossings along the line)."""
        E, z = _as_section(S)
        aligned = self._aligned_slice(E, z)
        if aligned is not None:
            return aligned
        if E.k == 1:
            return self._line_slice(E.basis[:, 0], z)
        return None

    def _aligned_slice(self, E, z):
        b_mat = E.basis
        chosen = []
        used = set()
        for col in range(E.k):
            column = b_mat[:, col]
            axes = np.nonzero(np.abs(column) > AXIS_TOL)[0]
            if len(axes) != 1 or abs(abs(column[axes[0]]) - 1.0) > AXIS_TOL:
                return None
            axis = int(axes[0])
            if axis in used:
                return None
            used.add(axis)
            factor = self.factors[axis]
            chosen.append(factor if column[axis] > 0 else factor.flipped())
        amp = self.amplitude
        for axis in range(self.n):
            if axis not in used:
                amp *= float(self.factors[axis].eval(np.array([z[axis]]))[0])
        return ProductDensity(chosen, amp)

    def _line_slice(self, direction, z):
        """Restriction to the line t -> z + t * direction as a step function.

        Each factor contributes its bin edges as breakpoints in t; between
        consecutive breakpoints the product is constant, so evaluating at
        segment midpoints reproduces the restriction exactly.
        """
        lo_t, hi_t = -math.inf, math.inf
        cuts = []
        for i, fac in enumerate(self.factors):
            d = float(direction[i])
            if abs(d) <= AXIS_TOL:
                if fac.eval(np.array([z[i]]))[0] == 0.0:
                    return Step1D.zero()
                continue
            grid = (fac.lo + fac.width * np.arange(fac.heights.size + 1) - z[i]) / d
            lo_t = max(lo_t, min(grid[0], grid[-1]))
            hi_t = min(hi_t, max(grid[0], grid[-1]))
            cuts.append(grid)
        if not cuts or hi_t <= lo_t:
            return Step1D.zero()
        breaks = np.unique(np.concatenate(cuts))
        breaks = breaks[(breaks > lo_t) & (breaks < hi_t)]
        edges = np.concatenate([[lo_t], breaks, [hi_t]])
        mids = 0.5 * (edges[:-1] + edges[1:])
        pts = z[None, :] + mids[:, None] * direction[None, :]
        return Step1D(edges, self.eval_many(pts))

    def _box_values(self):
        total = math.prod(f.heights.size for f in self.factors)
        if total > PRODUCT_ENUM_CAP:
            return None
        vals = np.array([self.amplitude])
        vols = np.array([1.0])
        for f in self.factors:
            vals = np.multiply.outer(vals, f.heights).ravel()
            vols = np.multiply.outer(vols, np.full(f.heights.size, f.width)).ravel()
        return vals, vols

    def superlevel_volume(self, t):
        boxes = self._box_values()
        if boxes is None:
            return None
        vals, vols = boxes
        return float(vols[vals > t].sum())

    def superlevel_volumes(self, ts):
        boxes = self._box_values()
        if boxes is None:
            return None
        vals, vols = boxes
        return _sorted_tail_volumes(vals, vols, np.asarray(ts))

    def describe(self):
        return {"kind": "product", "n": self.n, "amplitude": self.amplitude,
                "factors": [{"lo": f.lo, "hi": f.hi, "bins": f.heights.size}
                            for f in self.factors]}


def _sorted_tail_volumes(vals: np.ndarray, vols: np.ndarray, ts: np.ndarray):
    """Sum of vols over {vals > t} for each t, strict at equality."""
    order = np.argsort(vals)[::-1]
    cum = np.cumsum(vols[order])
    counts = np.searchsorted(-vals[order], -ts, side="left")
    return np.where(counts > 0, cum[np.maximum(counts - 1, 0)], 0.0)


class RadialGridDensity(DensityModel):
    """Radial piecewise-constant density: f(x) = heights[shell(|x|)]."""

    def __init__(self, n: int, edges, heights):
        edges = np.asarray(edges, dtype=float)
        heights = np.asarray(heights, dtype=float)
        if edges.ndim != 1 or edges.size != heights.size + 1:
            raise ValueError("need len(edges) == len(heights) + 1")
        if edges[0] < 0 or np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be non-negative and increasing")
        if np.any(~np.isfinite(heights)) or np.any(heights < 0):
            raise ValueError("heights must be finite and non-negative")
        self.n = int(n)
        self.edges = edges
        self.heights = heights

    @classmethod
    def uniform(cls, n: int, radius: float, heights):
        heights = np.asarray(heights, dtype=float)
        return cls(n, np.linspace(0.0, radius, heights.size + 1), heights)

    def shell_volumes(self):
        return unit_ball_volume(self.n) * np.diff(self.edges ** self.n)

    def eval_many(self, x):
        r = np.linalg.norm(x, axis=1)
        idx = np.searchsorted(self.edges, r, side="right") - 1
        inside = (r >= self.edges[0]) & (r < self.edges[-1]) & (idx >= 0)
        idx = np.clip(idx, 0, self.heights.size - 1)
        return np.where(inside, self.heights[idx], 0.0)

    @property
    def mass(self):
        return float(self.heights @ self.shell_volumes())

    @property
    def sup(self):
        return float(self.heights.max())

    @property
    def support_radius(self):
        return float(self.edges[-1])

    def sample(self, size, rng):
        weights = self.heights * self.shell_volumes()
        total = weights.sum()
        if total <= 0:
            raise ValueError("cannot sample from a zero density")
        shells = rng.choice(self.heights.size, size=size, p=weights / total)
        lo = self.edges[shells] ** self.n
        hi = self.edges[shells + 1] ** self.n
        r = (lo + rng.random(size) * (hi - lo)) ** (1.0 / self.n)
        g = rng.standard_normal((size, self.n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * r[:, None]

    def power(self, p):
        return RadialGridDensity(self.n, self.edges, self.heights ** p)

    def slice(self, S):
        """Sections are radial about the foot point with shifted edges."""
        E, z = _as_section(S)
        dist2 = float(z @ z)
        keep = self.edges[1:] ** 2 > dist2
        if not np.any(keep):
            return RadialGridDensity(E.k, [0.0, 1.0], [0.0])
        new_edges = np.sqrt(np.maximum(self.edges ** 2 - dist2, 0.0))
        first = int(np.argmax(keep))
        return RadialGridDensity(E.k, new_edges[first:], self.heights[first:])

    def superlevel_volume(self, t):
        return float(self.shell_volumes()[self.heights > t].sum())

    def superlevel_volumes(self, ts):
        return _sorted_tail_volumes(self.heights, self.shell_volumes(), np.asarray(ts))

    def describe(self):
        return {"kind": "radial_grid", "n": self.n,
                "radius": float(self.edges[-1]), "bins": self.heights.size}


class PushforwardDensity(DensityModel):
    """Image of a base model under an invertible affine map x -> Ax + b."""

    def __init__(self, base: DensityModel, matrix: np.ndarray, shift: np.ndarray):
        self.n = base.n
        self.base = base
        self.matrix = np.asarray(matrix, dtype=float)
        self.shift = np.asarray(shift, dtype=float)
        self._inv = np.linalg.inv(self.matrix)
        self._op_norm = float(np.linalg.norm(self.matrix, 2))

    def eval_many(self, x):
        return self.base.eval_many((x - self.shift) @ self._inv.T)

    @property
    def mass(self):
        return self.base.mass          # |det A| = 1 by construction

    @property
    def sup(self):
        return self.base.sup

    @property
    def support_radius(self):
        r = self.base.support_radius
        if math.isinf(r):
            return math.inf
        return float(np.linalg.norm(self.shift)) + self._op_norm * r

    def sample(self, size, rng):
        return self.base.sample(size, rng) @ self.matrix.T + self.shift

    def power(self, p):
        base_p = self.base.power(p)
        return None if base_p is None else PushforwardDensity(base_p, self.matrix, self.shift)

    def superlevel_volume(self, t):
        return self.base.superlevel_volume(t)     # volume preserving

    def superlevel_volumes(self, ts):
        return self.base.superlevel_volumes(ts)

    def describe(self):
        return {"kind": "pushforward", "n": self.n, "base": self.base.describe()}


def affine_image(f: DensityModel, g) -> DensityModel:
    """Image density of f under the volume-preserving affine map (A, b).

    Requires |det A| = 1 within DET_TOL.  Families closed under the map are
    transformed in closed form; everything else gets a pushforward wrapper
    with identical mass and sup and a pushforward sampler.
    """
    a_mat, b_vec = g
    a_mat = np.asarray(a_mat, dtype=float)
    b_vec = np.zeros(f.n) if b_vec is None else np.asarray(b_vec, dtype=float)
    det = np.linalg.det(a_mat)
    if abs(abs(det) - 1.0) > DET_TOL:
        raise ValueError(f"map must be volume preserving, |det A| = {abs(det)}")
    if isinstance(f, EllipsoidIndicator):
        inv = np.linalg.inv(a_mat)
        shape = inv.T @ f.shape_matrix @ inv
        return EllipsoidIndicator(0.5 * (shape + shape.T),
                                  a_mat @ f.center + b_vec, f.amplitude)
    if isinstance(f, GaussianDensity):
        cov = a_mat @ f.cov @ a_mat.T
        return GaussianDensity(a_mat @ f.mean + b_vec, 0.5 * (cov + cov.T), f.amplitude)
    if isinstance(f, TruncatedGaussian) and _is_orthogonal(a_mat):
        return TruncatedGaussian(a_mat @ f.center + b_vec, f.tau, f.radius, f.amplitude)
    if isinstance(f, RadialGridDensity) and _is_orthogonal(a_mat) \
            and np.allclose(b_vec, 0.0):
        return f
    return PushforwardDensity(f, a_mat, b_vec)


def _is_orthogonal(a_mat):
    return np.abs(a_mat.T @ a_mat - np.eye(a_mat.shape[0])).max() <= DET_TOL


def sample_point(f: DensityModel, rng: np.random.Generator) -> np.ndarray:
    """One draw from the mass-normalized law of f."""
    return f.sample(1, rng)[0]


def _section_window(f: DensityModel, S) -> float:
    """Radius of the section ball outside which f vanishes, 0 if disjoint."""
    E, z = _as_section(S)
    r = f.support_radius
    if math.isinf(r):
        raise ValueError("Monte Carlo section stats need a bounded support")
    gap = r ** 2 - float(z @ z)
    return math.sqrt(gap) if gap > 0 else 0.0


def _stratified_ball(dim: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform unit-ball sample stratified into equal-volume radial shells."""
    g = rng.standard_normal((size, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    strata = (np.arange(size) + rng.random(size)) / size
    return g * strata[:, None] ** (1.0 / dim)


def restriction_stats(f: DensityModel, S, method="exact",
                      rng: np.random.Generator | None = None):
    """L1 and sup of f restricted to a subspace or flat.

    method is "exact" (closed form required) or ("mc", N).  The MC sup is
    a sampled maximum and therefore biased low; it is flagged as such.
    """
    if method == "exact":
        sl = f.slice(S)
        if sl is None:
            raise ValueError("no exact restriction for this family/section")
        return Estimate.exact(sl.mass), Estimate.exact(sl.sup)
    tag, count = method
    if tag != "mc" or count < 2:
        raise ValueError(f"method must be 'exact' or ('mc', N >= 2), got {method!r}")
    if rng is None:
        raise ValueError("Monte Carlo restriction stats need an rng")
    E, _ = _as_section(S)
    w = _section_window(f, S)
    if w == 0.0:
        return Estimate.exact(0.0), Estimate.exact(0.0)
    u = _stratified_ball(E.k, count, rng) * w
    pts = S.point(u) if isinstance(S, Flat) else E.point(u)
    vals = f.eval_many(pts)
    vol = unit_ball_volume(E.k) * w ** E.k
    sd = float(vals.std(ddof=1))
    l1 = Estimate(vol * float(vals.mean()), vol * sd / math.sqrt(count), count)
    linf = Estimate(float(vals.max()), 0.0, count, biased_low=True)
    return l1, linf


def marginal_density(f: DensityModel, E: Subspace, x, method="exact",
                     rng: np.random.Generator | None = None) -> Estimate:
    """Marginal density of f on E at the point x of E.

    The marginal at x is the integral of f over the fiber x + E-perp, i.e.
    the mass of the restriction of f to that flat.
    """
    x = np.asarray(x, dtype=float)
    foot = E.point(E.coords(x))
    if np.linalg.norm(x - foot) > 1e-8 * max(1.0, np.linalg.norm(x)):
        raise ValueError("x must lie on E")
    fiber = Flat(E.complement, foot)
    return restriction_stats(f, fiber, method, rng)[0]


# ---------------------------------------------------------------------------
# Text interchange format.
#
#   radial n=<n> R=<R> bins=<m>
#   h_1 ... h_m                      (shell heights on [0, R])
#
#   product n=<n>
#   h_1 ... h_m1                     (factor 1 heights on [-1/2, 1/2])
#   ...                              (one line per factor)
#
# Heights are non-negative reals; negatives and NaN are rejected.
# ---------------------------------------------------------------------------

def read_density_text(text: str) -> DensityModel:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty density text")
    header = lines[0].split()
    kind = header[0]
    fields = dict(part.split("=", 1) for part in header[1:])
    if kind == "radial":
        n = int(fields["n"])
        radius = float(fields["R"])
        bins = int(fields["bins"])
        if len(lines) != 2:
            raise ValueError("radial format wants exactly one height line")
        heights = _parse_heights(lines[1], line_no=2)
        if heights.size != bins:
            raise ValueError(f"expected {bins} heights, got {heights.size}")
        if radius <= 0:
            raise ValueError("R must be positive")
        return RadialGridDensity.uniform(n, radius, heights)
    if kind == "product":
        n = int(fields["n"])
        if len(lines) != n + 1:
            raise ValueError(f"product format wants {n} factor lines")
        factors = [Grid1D(-0.5, 0.5, _parse_heights(ln, line_no=i + 2))
                   for i, ln in enumerate(lines[1:])]
        return ProductDensity(factors)
    raise ValueError(f"unknown density kind {kind!r}")


def _parse_heights(line: str, line_no: int) -> np.ndarray:
    try:
        vals = np.array([float(tok) for tok in line.split()])
    except ValueError as exc:
        raise ValueError(f"line {line_no}: {exc}") from None
    if vals.size == 0:
        raise ValueError(f"line {line_no}: no values")
    if np.any(np.isnan(vals)) or np.any(vals < 0):
        raise ValueError(f"line {line_no}: heights must be non-negative and not NaN")
    return vals


def write_density_text(f: DensityModel) -> str:
    if isinstance(f, RadialGridDensity):
        widths = np.diff(f.edges)
        if f.edges[0] != 0.0 or np.abs(widths - widths[0]).max() > 1e-12 * widths[0]:
            raise ValueError("only uniform radial grids have a text form")
        head = f"radial n={f.n} R={float(f.edges[-1])!r} bins={f.heights.size}"
        return head + "\n" + " ".join(repr(h) for h in f.heights.tolist()) + "\n"
    if isinstance(f, ProductDensity):
        if f.amplitude != 1.0:
            raise ValueError("fold the amplitude into a factor before writing")
        lines = [f"product n={f.n}"]
        for fac in f.factors:
            if abs(fac.lo + 0.5) > 1e-12 or abs(fac.hi - 0.5) > 1e-12:
                raise ValueError("text form fixes factors to [-1/2, 1/2]")
            lines.append(" ".join(repr(h) for h in fac.heights.tolist()))
        return "\n".join(lines) + "\n"
    raise ValueError(f"no text form for {type(f).__name__}")
