"""Monte Carlo estimators for the integral functionals under study.

Covers the two simplex-moment functionals (with and without the origin as
a vertex), the Grassmannian and affine-Grassmannian averages of section
norms, the k-plane transform, and projected small-ball probabilities.
Every estimator returns an Estimate and is bit-reproducible given the
generator seed and substream count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import _tuple_volumes
from .grassmann import Flat, Subspace, flat_frames, haar_bases
from .densities import DensityModel, restriction_stats, _as_section, \
    _section_window, _stratified_ball
from .geometry import unit_ball_volume
from .report import Estimate, mc_estimate

SUM_TOL = 1e-10

__all__ = [
    "ExponentSpec",
    "delta0_p",
    "delta_p",
    "grassmann_average_I",
    "affine_average_I",
    "kplane_transform",
    "small_ball_probability",
    "powz",
    "section_norm",
]


@dataclass(frozen=True)
class ExponentSpec:
    """Integrability powers p_i and outer exponents alpha_i, one per slot.

    p_i may be math.inf for a sup-norm slot (it contributes nothing to the
    constraint sum).  The averages are invariant under volume-preserving
    maps exactly when sum(alpha_i / p_i) equals the ambient dimension
    (linear averages) or dimension + 1 (affine averages); require_sum
    asserts that before an invariance claim.
    """

    p_list: tuple
    alpha_list: tuple

    def __post_init__(self):
        p = tuple(float(v) for v in self.p_list)
        a = tuple(float(v) for v in self.alpha_list)
        if len(p) != len(a) or not p:
            raise ValueError("p_list and alpha_list must match and be non-empty")
        for v in p:
            if not (v > 0.0):
                raise ValueError(f"powers must be positive (or inf), got {v}")
        object.__setattr__(self, "p_list", p)
        object.__setattr__(self, "alpha_list", a)

    @property
    def constraint_sum(self) -> float:
        return sum(a / p for p, a in zip(self.p_list, self.alpha_list)
                   if math.isfinite(p))

    def require_sum(self, target: float):
        if abs(self.constraint_sum - target) > SUM_TOL:
            raise ValueError(
                f"exponent sum {self.constraint_sum!r} != required {target!r}")
        return self

    def __len__(self):
        return len(self.p_list)


def powz(values: np.ndarray, alpha: float) -> np.ndarray:
    """values**alpha with the zero-support convention: 0 maps to 0.

    Treats the exponent as a limit from above, so alpha = 0 yields the
    indicator of {values > 0}; negative alpha never produces infinities
    from empty sections.
    """
    values = np.asarray(values, dtype=float)
    pos = values > 0.0
    out = np.zeros(values.shape)
    if alpha == 0.0:
        out[pos] = 1.0
    else:
        out[pos] = values[pos] ** alpha
    return out


def section_norm(f: DensityModel, S, p: float) -> float:
    """Exact L_p norm of f restricted to a subspace or flat (p may be inf)."""
    if math.isinf(p):
        sl = f.slice(S)
        if sl is None:
            raise ValueError("no exact section for this family")
        return sl.sup
    fp = f.power(p)
    sl = fp.slice(S) if fp is not None else None
    if sl is None:
        raise ValueError("no exact section for this family")
    return sl.mass ** (1.0 / p)


def _section_norms_batch(f: DensityModel, p: float, bases: np.ndarray,
                         offsets: np.ndarray):
    """Per-section L_p norms for a stack of flats, or None if not exact."""
    model = f if math.isinf(p) else f.power(p)
    if model is None:
        return None
    stats = model.slice_stats_batch(bases, offsets)
    if stats is None:
        return None
    masses, sups = stats
    if math.isinf(p):
        return sups
    return powz(masses, 1.0 / p)


def _section_norm_mc(f: DensityModel, S, p: float, count: int,
                     rng: np.random.Generator) -> float:
    """Sampled section norm for families without a closed form.

    The sup estimate is a sampled maximum (biased low); callers that place
    it in a denominator therefore err on the conservative side.
    """
    E, _ = _as_section(S)
    w = _section_window(f, S)
    if w == 0.0:
        return 0.0
    u = _stratified_ball(E.k, count, rng) * w
    pts = S.point(u) if isinstance(S, Flat) else E.point(u)
    vals = f.eval_many(pts)
    if math.isinf(p):
        return float(vals.max())
    box = unit_ball_volume(E.k) * w ** E.k
    return float(box * np.mean(vals ** p)) ** (1.0 / p)


def _norm_product(f_list, spec: ExponentSpec, S, method, rng) -> float:
    total = 1.0
    for f, p, a in zip(f_list, spec.p_list, spec.alpha_list):
        if method == "exact":
            norm = section_norm(f, S, p)
        else:
            norm = _section_norm_mc(f, S, p, method[1], rng)
        total *= float(powz(np.array([norm]), a)[0])
    return total


def _common_dim(f_list) -> int:
    dims = {f.n for f in f_list}
    if len(dims) != 1:
        raise ValueError(f"models live in different dimensions: {sorted(dims)}")
    return dims.pop()


def delta0_p(f_list, p: float, n_samples: int, rng: np.random.Generator,
             substreams: int = 1) -> Estimate:
    """Simplex moment with the origin as a vertex.

    Estimates the integral over q-tuples of |conv{0, x_1, ..., x_q}|^p
    weighted by the product density: each x_i is drawn from f_i normalized,
    and the mean is rescaled by the product of masses.  Requires
    p > -(n - q + 1); for negative p the heavy-tail share of the estimate
    is attached as a diagnostic.
    """
    q = len(f_list)
    n = _common_dim(f_list)
    if not 1 <= q <= n:
        raise ValueError(f"need 1 <= q <= n, got q={q} n={n}")
    if p <= -(n - q + 1):
        raise ValueError(f"p must exceed -(n - q + 1) = {-(n - q + 1)}")

    def draw(stream, m):
        pts = np.stack([f.sample(m, stream) for f in f_list], axis=1)
        return powz(_tuple_volumes(pts), p)

    est = mc_estimate(draw, n_samples, rng, substreams, keep_values=(p < 0))
    scale = math.prod(f.mass for f in f_list)
    return est.scaled(scale)


def delta_p(f: DensityModel, k: int, p: float, n_samples: int,
            rng: np.random.Generator, substreams: int = 1) -> Estimate:
    """Simplex moment over k+1 free vertices, all drawn from the same f.

    Only p >= 1 is accepted: below that the rearrangement machinery the
    downstream inequalities rely on breaks down, so smaller exponents are
    rejected rather than silently extrapolated.
    """
    if p < 1.0:
        raise ValueError(f"need p >= 1, got {p}")
    if not 1 <= k <= f.n:
        raise ValueError(f"need 1 <= k <= n, got k={k} n={f.n}")

    def draw(stream, m):
        pts = f.sample(m * (k + 1), stream).reshape(m, k + 1, f.n)
        return _tuple_volumes(pts[:, 1:, :] - pts[:, :1, :]) ** p

    est = mc_estimate(draw, n_samples, rng, substreams)
    return est.scaled(f.mass ** (k + 1))


def grassmann_average_I(f_list, spec: ExponentSpec, k: int, n_subspaces: int,
                        rng: np.random.Generator, method="exact",
                        substreams: int = 1) -> Estimate:
    """Average over random k-subspaces of prod_i ||f_i restricted||_{p_i}^{alpha_i}.

    method "exact" uses closed-form section norms (available for the
    ellipsoid/Gaussian families everywhere and for products on lines and
    coordinate sections); ("mc", m) estimates each section norm from m
    window samples instead.
    """
    if len(spec) != len(f_list):
        raise ValueError("one (p, alpha) slot per density required")
    n = _common_dim(f_list)

    if method == "exact":
        def draw(stream, m):
            bases = haar_bases(n, k, m, stream)
            offsets = np.zeros((m, n))
            total = np.ones(m)
            for f, p, a in zip(f_list, spec.p_list, spec.alpha_list):
                norms = _section_norms_batch(f, p, bases, offsets)
                if norms is None:
                    total *= np.array([
                        powz(np.array([section_norm(f, Subspace(b), p)]), a)[0]
                        for b in bases])
                else:
                    total *= powz(norms, a)
            return total
    else:
        def draw(stream, m):
            out = np.empty(m)
            for j in range(m):
                E = Subspace(haar_bases(n, k, 1, stream)[0])
                out[j] = _norm_product(f_list, spec, E, method, stream)
            return out

    return mc_estimate(draw, n_subspaces, rng, substreams, keep_values=True)


def affine_average_I(f_list, spec: ExponentSpec, k: int, R: float,
                     n_flats: int, rng: np.random.Generator, method="exact",
                     substreams: int = 1) -> Estimate:
    """Invariant-measure average over k-flats of the section-norm product.

    Flats are drawn uniformly among those within distance R of the origin
    and reweighted by the window mass, so the estimate targets the infinite
    invariant measure directly.  All supports must fit in the R-window:
    flats outside it carry zero integrand only if every f_i vanishes there.
    """
    if len(spec) != len(f_list):
        raise ValueError("one (p, alpha) slot per density required")
    n = _common_dim(f_list)
    for f in f_list:
        if f.support_radius > R + 1e-9:
            raise ValueError(
                f"support radius {f.support_radius} exceeds the flat window R={R}")

    if method == "exact":
        def draw(stream, m):
            bases, offsets, weight = flat_frames(n, k, R, m, stream)
            total = np.full(m, weight)
            for f, p, a in zip(f_list, spec.p_list, spec.alpha_list):
                norms = _section_norms_batch(f, p, bases, offsets)
                if norms is None:
                    norms = np.array([
                        section_norm(f, Flat(Subspace(b), off), p)
                        for b, off in zip(bases, offsets)])
                total *= powz(norms, a)
            return total
    else:
        def draw(stream, m):
            bases, offsets, weight = flat_frames(n, k, R, m, stream)
            out = np.empty(m)
            for j in range(m):
                F = Flat(Subspace(bases[j]), offsets[j])
                out[j] = weight * _norm_product(f_list, spec, F, method, stream)
            return out

    return mc_estimate(draw, n_flats, rng, substreams, keep_values=True)


def kplane_transform(f: DensityModel, F: Flat, method="exact",
                     rng: np.random.Generator | None = None) -> Estimate:
    """Integral of f over the flat F (exact when the slice oracle exists)."""
    return restriction_stats(f, F, method, rng)[0]


def small_ball_probability(f: DensityModel, E: Subspace, z, eps: float,
                           n_samples: int, rng: np.random.Generator,
                           substreams: int = 1) -> Estimate:
    """P(|P_E X - z| <= eps * sqrt(k)) for X distributed as f normalized.

    z is a point of E in ambient coordinates.  Empirical fraction of draws,
    binomial standard error.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    z = np.asarray(z, dtype=float)
    z_coords = E.coords(z)
    if np.linalg.norm(z - E.point(z_coords)) > 1e-8 * max(1.0, np.linalg.norm(z)):
        raise ValueError("z must lie on E")
    threshold = eps * math.sqrt(E.k)

    def draw(stream, m):
        pts = f.sample(m, stream)
        dist = np.linalg.norm(pts @ E.basis - z_coords, axis=1)
        return (dist <= threshold).astype(float)

    return mc_estimate(draw, n_samples, rng, substreams)
