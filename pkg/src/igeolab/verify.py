"""Numerical experiments: identity, inequality, and invariance checks.

Each function turns one statement into a reproducible experiment with an
explicit decision rule and returns a CheckReport.  Conventions, fixed
across the module:

* one-sided inequalities pass at LHS <= RHS + 3 * stderr;
* equality cases pass inside a band of max(2%, 3 * relative stderr);
* identity checks (the two section decompositions) carry an unspecified
  normalization: the constant is *fitted* from the data and its ratio to
  the printed closed form is reported, and the verdict asks only that two
  independent replicas agree on the fit;
* unspecified O(1) constants are fitted and compared against a ceiling
  of 10;
* estimates whose top percentile carries half the total are flagged
  inconclusive rather than trusted.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import Dimensions, bp_constant, unit_ball_volume, \
    unit_volume_radius, _tuple_volumes
from .grassmann import Flat, Subspace, flat_frames, haar_bases, \
    perturb_subspace, distances_to
from .densities import DensityModel, EllipsoidIndicator, affine_image
from .functionals import ExponentSpec, powz, grassmann_average_I, \
    affine_average_I, delta0_p, delta_p
from .rearrange import rearrangement
from .report import PASS, FAIL, INCONCLUSIVE, CheckReport, Estimate, \
    mc_estimate, merge_estimates, ratio_estimate, power_estimate

EQUALITY_BAND = 0.02
TAIL_LIMIT = 0.5
CONSTANT_CEILING = 10.0
NOISE_FLOOR = 0.25     # relative stderr above which a null result is no result

__all__ = [
    "check_bp_subspace",
    "check_bp_flat",
    "check_linear_invariance",
    "check_affine_invariance",
    "check_rearrangement_monotonicity",
    "check_grinberg_functional",
    "check_schneider_functional",
    "marginal_bound_experiment",
    "gaussian_sharpness_experiment",
    "perturbation_experiment",
]


def _equality_verdict(lhs: Estimate, rhs: Estimate) -> tuple[str, float]:
    ratio = ratio_estimate(lhs, rhs)
    band = max(EQUALITY_BAND, 3.0 * ratio.rel_stderr)
    return (PASS if abs(ratio.value - 1.0) <= band else FAIL), band


def _one_sided_verdict(lhs: Estimate, rhs: Estimate) -> str:
    slack = 3.0 * math.hypot(lhs.stderr, rhs.stderr)
    return PASS if lhs.value <= rhs.value + slack else FAIL


def _spec_params(p_list) -> list:
    return ["inf" if math.isinf(p) else p for p in p_list]


def _heavy_tailed(*ests: Estimate) -> bool:
    return any(e.tail_share is not None and e.tail_share >= TAIL_LIMIT
               for e in ests)


# ---------------------------------------------------------------------------
# Section decompositions of simplex moments (subspace and flat versions).
# ---------------------------------------------------------------------------

def _slice_tuple_moment(slices, exponent, inner, rng) -> float:
    """One inner estimate: product of slice masses times the simplex-moment
    mean under the normalized slice laws, vertices at the origin."""
    mass = math.prod(s.mass for s in slices)
    if mass <= 0.0:
        return 0.0
    pts = np.stack([s.sample(inner, rng) for s in slices], axis=1)
    return mass * float(np.mean(powz(_tuple_volumes(pts), exponent)))


def _bp_subspace_replica(f_list, k, p, n_direct, n_subspaces, inner, rng):
    n = f_list[0].n
    q = len(f_list)
    lhs = delta0_p(f_list, p, n_direct, rng.spawn(1)[0])
    if k == n:
        # single degenerate section: the decomposition collapses to the
        # direct integral itself
        grass = delta0_p(f_list, p, n_subspaces * max(inner, 1),
                         rng.spawn(1)[0])
        return lhs, grass
    exponent = p + (n - k)

    def draw(stream, m):
        bases = haar_bases(n, k, m, stream)
        out = np.empty(m)
        for j in range(m):
            E = Subspace(bases[j])
            slices = []
            for f in f_list:
                sl = f.slice(E)
                if sl is None:
                    raise ValueError(
                        "section identity checks need exact slice models")
                slices.append(sl)
            out[j] = _slice_tuple_moment(slices, exponent, inner, stream)
        return out

    grass = mc_estimate(draw, n_subspaces, rng.spawn(1)[0], keep_values=True)
    return lhs, grass


def check_bp_subspace(f_list, k: int, p: float, n_direct: int,
                      n_subspaces: int, rng: np.random.Generator,
                      inner: int = 256) -> CheckReport:
    """Decomposition of a q-point simplex moment over k-dimensional sections.

    LHS integrates prod f_i(x_i) |conv{0, x}|^p over ambient tuples; RHS
    runs the two-stage route (random section, then points inside it) whose
    integrand carries the extra |conv|^(n-k) weight, scaled by the printed
    closed-form constant.  The measured constant is fitted as
    LHS / (section route) and reported against the printed value; the
    verdict requires two independent replicas to agree on the fit within
    3 combined stderr.
    """
    n = f_list[0].n
    q = len(f_list)
    dims = Dimensions(n, k, q)
    printed = bp_constant(dims)
    halves = rng.spawn(2)
    fits = []
    sides = []
    for half in halves:
        lhs, grass = _bp_subspace_replica(
            f_list, k, p, n_direct // 2, n_subspaces // 2, inner, half)
        fits.append(ratio_estimate(lhs, grass))
        sides.append((lhs, grass))
    gap = abs(fits[0].value - fits[1].value)
    tol = 3.0 * math.hypot(fits[0].stderr, fits[1].stderr)
    lhs_all = merge_estimates([s[0] for s in sides])
    grass_all = merge_estimates([s[1] for s in sides])
    fitted = ratio_estimate(lhs_all, grass_all)
    rhs_all = grass_all.scaled(printed)
    heavy = _heavy_tailed(lhs_all, *[s[1] for s in sides])
    verdict = INCONCLUSIVE if heavy else (PASS if gap <= tol else FAIL)
    return CheckReport(
        name="bp_subspace",
        parameters={"n": n, "k": k, "q": q, "p": p,
                    "n_direct": n_direct, "n_subspaces": n_subspaces},
        lhs=lhs_all, rhs=rhs_all,
        ratio=lhs_all.value / rhs_all.value if rhs_all.value else math.inf,
        verdict=verdict,
        diagnostics={
            "printed_constant": printed,
            "fitted_constant": fitted.value,
            "fitted_stderr": fitted.stderr,
            "fitted_over_printed": fitted.value / printed,
            "replica_fits": [e.value for e in fits],
            "replica_gap": gap,
            "replica_tolerance": tol,
            "tail_shares": [s[1].tail_share for s in sides],
        })


def check_bp_flat(f: DensityModel, k: int, n_direct: int, n_flats: int,
                  R: float, rng: np.random.Generator, p: float = 0.0,
                  inner: int = 256) -> CheckReport:
    """Flat-section decomposition with k+1 free vertices.

    With zero offset the ambient side is the exact power mass^(k+1) and
    the flat route must reproduce it through the |conv|^(n-k) weight and
    the invariant flat measure; positive offsets exercise the weighted
    version.  Constant handling as in check_bp_subspace.
    """
    n = f.n
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k} n={n}")
    if f.support_radius > R + 1e-9:
        raise ValueError("support must fit inside the flat window")
    if p != 0.0 and p < 1.0:
        raise ValueError("offset exponent must be 0 or >= 1")
    printed = bp_constant(Dimensions(n, k, k))
    if k == n and p == 0.0:
        # single degenerate flat (the whole space), zero exponent, unit
        # constant: both sides are the exact power of the mass
        lhs = Estimate.exact(f.mass ** (k + 1))
        return CheckReport(
            name="bp_flat",
            parameters={"n": n, "k": k, "q": k, "p": p, "R": R,
                        "n_direct": n_direct, "n_flats": n_flats},
            lhs=lhs, rhs=lhs, ratio=1.0, verdict=PASS,
            diagnostics={"printed_constant": printed,
                         "fitted_constant": 1.0,
                         "fitted_over_printed": 1.0 / printed,
                         "degenerate": True})
    if k == n:
        raise ValueError("offset exponents need k <= n-1")
    exponent = p + (n - k)

    def replica(stream):
        if p == 0.0:
            lhs = Estimate.exact(f.mass ** (k + 1))
        else:
            lhs = delta_p(f, k, p, n_direct // 2, stream.spawn(1)[0])

        def draw(sub, m):
            bases, offsets, weight = flat_frames(n, k, R, m, sub)
            out = np.empty(m)
            for j in range(m):
                sl = f.slice(Flat(Subspace(bases[j]), offsets[j]))
                if sl is None:
                    raise ValueError(
                        "section identity checks need exact slice models")
                mass = sl.mass
                if mass <= 0.0:
                    out[j] = 0.0
                    continue
                pts = sl.sample((k + 1) * inner, sub).reshape(inner, k + 1, k)
                vols = _tuple_volumes(pts[:, 1:, :] - pts[:, :1, :])
                out[j] = weight * mass ** (k + 1) * float(
                    np.mean(powz(vols, exponent)))
            return out

        flats = mc_estimate(draw, n_flats // 2, stream.spawn(1)[0],
                            keep_values=True)
        return lhs, flats

    halves = rng.spawn(2)
    sides = [replica(h) for h in halves]
    fits = [ratio_estimate(lhs, fl) for lhs, fl in sides]
    gap = abs(fits[0].value - fits[1].value)
    tol = 3.0 * math.hypot(fits[0].stderr, fits[1].stderr)
    lhs_all = sides[0][0] if p == 0.0 else merge_estimates([s[0] for s in sides])
    flats_all = merge_estimates([s[1] for s in sides])
    fitted = ratio_estimate(lhs_all, flats_all)
    rhs_all = flats_all.scaled(printed)
    heavy = _heavy_tailed(*[s[1] for s in sides])
    verdict = INCONCLUSIVE if heavy else (PASS if gap <= tol else FAIL)
    return CheckReport(
        name="bp_flat",
        parameters={"n": n, "k": k, "q": k, "p": p, "R": R,
                    "n_direct": n_direct, "n_flats": n_flats},
        lhs=lhs_all, rhs=rhs_all,
        ratio=lhs_all.value / rhs_all.value if rhs_all.value else math.inf,
        verdict=verdict,
        diagnostics={
            "printed_constant": printed,
            "fitted_constant": fitted.value,
            "fitted_stderr": fitted.stderr,
            "fitted_over_printed": fitted.value / printed,
            "replica_fits": [e.value for e in fits],
            "replica_gap": gap,
            "replica_tolerance": tol,
            "tail_shares": [s[1].tail_share for s in sides],
        })


# ---------------------------------------------------------------------------
# Invariance of the section-norm averages.
# ---------------------------------------------------------------------------

def _invariance_verdict(before: Estimate, after: Estimate):
    ratio = ratio_estimate(after, before)
    dev = abs(ratio.value - 1.0)
    if ratio.stderr > 0 and dev > 3.0 * ratio.stderr:
        verdict = FAIL
    elif _heavy_tailed(before, after) or ratio.rel_stderr > NOISE_FLOOR:
        verdict = INCONCLUSIVE
    else:
        verdict = PASS
    sigma = dev / ratio.stderr if ratio.stderr > 0 else math.inf
    return ratio, sigma, verdict


def check_linear_invariance(f_list, spec: ExponentSpec, k: int, g,
                            n_subspaces: int, rng: np.random.Generator,
                            method="exact", substreams: int = 1
                            ) -> CheckReport:
    """Subspace average of section norms before and after a volume-preserving
    linear map.

    The average is invariant when sum(alpha_i / p_i) = n; with any other
    exponent sum a departure is expected and the verdict turns FAIL, which
    negative-control tests assert as detection power.
    """
    n = f_list[0].n
    g = np.asarray(g, dtype=float)
    streams = rng.spawn(2)
    before = grassmann_average_I(f_list, spec, k, n_subspaces, streams[0],
                                 method, substreams)
    images = [affine_image(f, (g, None)) for f in f_list]
    after = grassmann_average_I(images, spec, k, n_subspaces, streams[1],
                                method, substreams)
    ratio, sigma, verdict = _invariance_verdict(before, after)
    return CheckReport(
        name="linear_invariance",
        parameters={"n": n, "k": k, "spec_p": _spec_params(spec.p_list),
                    "spec_alpha": list(spec.alpha_list),
                    "n_subspaces": n_subspaces},
        lhs=after, rhs=before, ratio=ratio.value, verdict=verdict,
        diagnostics={"departure_sigma": sigma,
                     "exponent_sum": spec.constraint_sum,
                     "invariant_sum": float(n),
                     "sum_matches": abs(spec.constraint_sum - n) <= 1e-10,
                     "tail_shares": [before.tail_share, after.tail_share]})


def check_affine_invariance(f_list, spec: ExponentSpec, k: int, g, R: float,
                            n_flats: int, rng: np.random.Generator,
                            method="exact", substreams: int = 1
                            ) -> CheckReport:
    """Flat average of section norms before and after a volume-preserving
    affine map; invariance requires sum(alpha_i / p_i) = n + 1.

    Each side gets its own sampling window just covering its support, so
    translations do not force a common oversized window.
    """
    n = f_list[0].n
    a_mat, shift = g
    streams = rng.spawn(2)
    r_before = max(R, max(f.support_radius for f in f_list))
    before = affine_average_I(f_list, spec, k, r_before, n_flats, streams[0],
                              method, substreams)
    images = [affine_image(f, (a_mat, shift)) for f in f_list]
    r_after = max(R, max(f.support_radius for f in images))
    after = affine_average_I(images, spec, k, r_after, n_flats, streams[1],
                             method, substreams)
    ratio, sigma, verdict = _invariance_verdict(before, after)
    return CheckReport(
        name="affine_invariance",
        parameters={"n": n, "k": k, "spec_p": _spec_params(spec.p_list),
                    "spec_alpha": list(spec.alpha_list), "R": R,
                    "n_flats": n_flats},
        lhs=after, rhs=before, ratio=ratio.value, verdict=verdict,
        diagnostics={"departure_sigma": sigma,
                     "exponent_sum": spec.constraint_sum,
                     "invariant_sum": float(n + 1),
                     "sum_matches": abs(spec.constraint_sum - (n + 1)) <= 1e-10,
                     "windows": [r_before, r_after],
                     "tail_shares": [before.tail_share, after.tail_share]})


# ---------------------------------------------------------------------------
# Rearrangement monotonicity of the normalized simplex functionals.
# ---------------------------------------------------------------------------

def _simplex_functional(f_list, p: float, origin: bool, n_samples: int,
                        rng: np.random.Generator,
                        substreams: int = 1) -> Estimate:
    """Normalized p-th-moment functional of the random simplex spanned by
    one draw from each density (with the origin as an extra vertex in the
    cone case), raised to 1/p."""

    def draw(stream, m):
        pts = np.stack([f.sample(m, stream) for f in f_list], axis=1)
        if not origin:
            pts = pts[:, 1:, :] - pts[:, :1, :]
        return _tuple_volumes(pts) ** p

    est = mc_estimate(draw, n_samples, rng, substreams)
    return power_estimate(est, 1.0 / p)


def check_rearrangement_monotonicity(f_list, p: float, case: str,
                                     n_samples: int,
                                     rng: np.random.Generator,
                                     levels: int = 1000,
                                     substreams: int = 1) -> CheckReport:
    """The two-step monotonicity chain of the simplex functionals.

    The functional may only drop when every input is replaced by its
    symmetric decreasing rearrangement, and (for densities normalized to
    unit mass and sup at most one) drops further to the unit-volume-ball
    value.  case "cone" spans the simplex by q draws and the origin; case
    "simplex" uses the drawn points alone.
    """
    if case not in ("cone", "simplex"):
        raise ValueError(f"case must be 'cone' or 'simplex', got {case!r}")
    if p < 1.0:
        raise ValueError("need p >= 1")
    origin = case == "cone"
    n = f_list[0].n
    q = len(f_list)
    if origin and q > n:
        raise ValueError("cone case needs at most n densities")
    if not origin and q > n + 1:
        raise ValueError("simplex case needs at most n+1 densities")
    normalized = all(abs(f.mass - 1.0) <= 1e-9 and f.sup <= 1.0 + 1e-9
                     for f in f_list)
    streams = rng.spawn(3)
    value_f = _simplex_functional(f_list, p, origin, n_samples, streams[0],
                                  substreams)
    stars = [rearrangement(f, levels) for f in f_list]
    value_star = _simplex_functional(stars, p, origin, n_samples, streams[1],
                                     substreams)
    first = value_f.value >= value_star.value \
        - 3.0 * math.hypot(value_f.stderr, value_star.stderr)
    diagnostics = {"value": value_f.value, "value_rearranged": value_star.value,
                   "normalized_inputs": normalized,
                   "stderr": [value_f.stderr, value_star.stderr]}
    verdict = PASS if first else FAIL
    rhs = value_star
    if normalized:
        ball = EllipsoidIndicator.ball(n, radius=unit_volume_radius(n))
        value_ball = _simplex_functional([ball] * q, p, origin, n_samples,
                                         streams[2], substreams)
        second = value_star.value >= value_ball.value \
            - 3.0 * math.hypot(value_star.stderr, value_ball.stderr)
        diagnostics["value_ball"] = value_ball.value
        diagnostics["stderr"].append(value_ball.stderr)
        verdict = PASS if (first and second) else FAIL
        rhs = value_ball
    else:
        diagnostics["second_step_skipped"] = \
            "inputs not normalized to mass 1 and sup <= 1"
    return CheckReport(
        name="rearrangement_chain",
        parameters={"n": n, "q": q, "p": p, "case": case,
                    "n_samples": n_samples, "levels": levels},
        lhs=value_f, rhs=rhs,
        ratio=value_f.value / rhs.value if rhs.value else math.inf,
        verdict=verdict, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# The two functional section inequalities.
# ---------------------------------------------------------------------------

def check_grinberg_functional(f_list, k: int, p: float, n_subspaces: int,
                              rng: np.random.Generator, method="exact",
                              expect_equality: bool = False,
                              substreams: int = 1) -> CheckReport:
    """Subspace average of L1-over-sup section-norm ratios against its
    closed-form bound.

    The average of prod_i ||f_i|_E||_1^(1+p/k) / ||f_i|_E||_inf^(p/k) over
    k-dimensional sections is bounded by explicit ball-volume constants
    times the product of the global norms.  Equality mode tightens the
    verdict to the two-sided band (indicator-of-ball and common-ellipsoid
    tuples).
    """
    n = f_list[0].n
    q = len(f_list)
    if not 1 <= q <= k <= n - 1:
        raise ValueError(f"need 1 <= q <= k <= n-1, got q={q} k={k} n={n}")
    if not 0 <= p <= n - k:
        raise ValueError(f"need 0 <= p <= n-k, got p={p}")
    doubled = [f for f in f_list for _ in range(2)]
    spec = ExponentSpec((1.0, math.inf) * q,
                        (1.0 + p / k, -p / k) * q)
    lhs = grassmann_average_I(doubled, spec, k, n_subspaces, rng, method,
                              substreams)
    log_rhs = q * (k + p) / k * math.log(unit_ball_volume(k)) \
        - q * (k + p) / n * math.log(unit_ball_volume(n))
    for f in f_list:
        log_rhs += (k + p) / n * math.log(f.mass) \
            + (n - k - p) / n * math.log(f.sup)
    rhs = Estimate.exact(math.exp(log_rhs))
    if expect_equality:
        verdict, band = _equality_verdict(lhs, rhs)
    else:
        verdict, band = _one_sided_verdict(lhs, rhs), None
    if verdict != FAIL and _heavy_tailed(lhs):
        verdict = INCONCLUSIVE
    return CheckReport(
        name="grinberg_functional",
        parameters={"n": n, "k": k, "q": q, "p": p,
                    "n_subspaces": n_subspaces},
        lhs=lhs, rhs=rhs,
        ratio=lhs.value / rhs.value if rhs.value else math.inf,
        verdict=verdict,
        diagnostics={"expect_equality": expect_equality,
                     "equality_band": band,
                     "tail_share": lhs.tail_share})


def check_schneider_functional(f: DensityModel, k: int, R: float,
                               n_flats: int, rng: np.random.Generator,
                               method="exact",
                               expect_equality: bool = False,
                               substreams: int = 1) -> CheckReport:
    """Flat average of section mass powers over section sups against its
    closed-form bound.

    Integrates (integral of f over F)^(n+1) / ||f|_F||_inf^(n-k) over the
    invariant flat measure and compares with the ball-volume constant times
    mass^(k+1).  Ball and shifted-ellipsoid indicators sit in the equality
    case.
    """
    n = f.n
    if not 1 <= k <= n - 1:
        raise ValueError(f"need 1 <= k <= n-1, got k={k} n={n}")
    spec = ExponentSpec((1.0, math.inf), (float(n + 1), -float(n - k)))
    window = max(R, f.support_radius)
    lhs = affine_average_I([f, f], spec, k, window, n_flats, rng, method,
                           substreams)
    log_c = (n + 1) * math.log(unit_ball_volume(k)) \
        + math.log(unit_ball_volume(n * (k + 1))) \
        - (k + 1) * math.log(unit_ball_volume(n)) \
        - math.log(unit_ball_volume(k * (n + 1)))
    rhs = Estimate.exact(math.exp(log_c) * f.mass ** (k + 1))
    if expect_equality:
        verdict, band = _equality_verdict(lhs, rhs)
    else:
        verdict, band = _one_sided_verdict(lhs, rhs), None
    if verdict != FAIL and _heavy_tailed(lhs):
        verdict = INCONCLUSIVE
    return CheckReport(
        name="schneider_functional",
        parameters={"n": n, "k": k, "R": window, "n_flats": n_flats},
        lhs=lhs, rhs=rhs,
        ratio=lhs.value / rhs.value if rhs.value else math.inf,
        verdict=verdict,
        diagnostics={"expect_equality": expect_equality,
                     "equality_band": band,
                     "tail_share": lhs.tail_share})


# ---------------------------------------------------------------------------
# Marginal bounds: Markov filtering, sharpness, perturbation.
# ---------------------------------------------------------------------------

def _fiber_statistics(f: DensityModel, E: Subspace, n_x: int,
                      rng: np.random.Generator):
    """Per-point fiber statistics for one subspace.

    Returns (T, L1, r) over n_x draws x ~ projected law: the Markov
    statistic T = (fiber mass)^n / (fiber sup)^k, the fiber masses
    themselves (the marginal density at x), and |x|.
    """
    n, k = E.n, E.k
    ys = f.sample(n_x, rng)
    feet = ys @ E.projector.T
    comp = E.complement
    bases = np.broadcast_to(comp.basis, (n_x, n, n - k))
    stats = f.slice_stats_batch(bases, feet)
    if stats is None:
        raise ValueError("marginal experiments need exact fiber stats")
    l1, sup = stats
    with np.errstate(divide="ignore", invalid="ignore"):
        t_vals = np.where(sup > 0, l1 ** n / np.maximum(sup, 1e-300) ** k, 0.0)
    return t_vals, l1, np.linalg.norm(feet, axis=1)


def _origin_statistic(f: DensityModel, E: Subspace) -> float:
    sl = f.slice(E.complement)
    if sl is None:
        raise ValueError("marginal experiments need exact fiber stats")
    return sl.mass ** E.n / sl.sup ** E.k if sl.sup > 0 else 0.0


def _fit_quantile_constant(values: np.ndarray, s: float, kn: int) -> float:
    """Smallest c with empirical frac(values > (c s)^kn) <= s^-kn."""
    level = min(1.0 - s ** (-kn), 1.0)
    q = float(np.quantile(values, level))
    return max(q, 0.0) ** (1.0 / kn) / s


def marginal_bound_experiment(f: DensityModel, k: int, s: float, t: float,
                              n_subspaces: int, n_x: int,
                              rng: np.random.Generator,
                              adversarial: Subspace | None = None
                              ) -> CheckReport:
    """Markov-set experiment for the marginal density bound.

    Samples subspaces and projected points, computes the fiber statistic
    (fiber mass)^n / (fiber sup)^k, and fits the smallest constants making
    the two Markov filters work: c2 thresholds the per-subspace averages
    and the origin statistic at (c2 s)^(kn) with exceptional fraction at
    most 2 s^(-kn); off the bad sets the pointwise constant c1 and the
    origin small-ball constant c3 are fitted.  Verdict: all fitted
    constants at most 10 and the exceptional fractions inside their
    envelopes; an adversarial subspace, when supplied, must land in the
    exceptional set.
    """
    n = f.n
    if not 1 <= k <= n - 1:
        raise ValueError(f"need 1 <= k <= n-1, got k={k} n={n}")
    if s <= 1.0 or t <= 1.0:
        raise ValueError("need s > 1 and t > 1")
    if abs(f.mass - 1.0) > 1e-9:
        raise ValueError("f must be a probability density (unit mass)")
    kn = k * n
    sup_root = f.sup ** (1.0 / n)
    streams = rng.spawn(n_subspaces + 1)
    averages = np.empty(n_subspaces)
    origin_stats = np.empty(n_subspaces)
    t_all = np.empty((n_subspaces, n_x))
    l1_all = np.empty((n_subspaces, n_x))
    r_all = np.empty((n_subspaces, n_x))
    for j in range(n_subspaces):
        E = Subspace(haar_bases(n, k, 1, streams[j])[0])
        t_vals, l1, radii = _fiber_statistics(f, E, n_x, streams[j])
        averages[j] = t_vals.mean()
        origin_stats[j] = _origin_statistic(f, E)
        t_all[j], l1_all[j], r_all[j] = t_vals, l1, radii

    c2 = max(_fit_quantile_constant(averages, s, kn),
             _fit_quantile_constant(origin_stats, s, kn))
    threshold = (c2 * s) ** kn
    bad = (averages > threshold) | (origin_stats > threshold)
    bad_frac = float(bad.mean())
    envelope = 2.0 * s ** (-kn)
    bad_slack = 3.0 * math.sqrt(envelope * (1 - envelope) / n_subspaces)

    # pointwise bound off the per-subspace Markov sets
    point_threshold = (c2 * s * t) ** kn
    good = ~bad
    c1 = 0.0
    worst_b_frac = 0.0
    for j in np.nonzero(good)[0]:
        off = t_all[j] < point_threshold
        worst_b_frac = max(worst_b_frac, float(1.0 - off.mean()))
        if np.any(off):
            c1 = max(c1, float(l1_all[j][off].max()) ** (1.0 / k)
                     / (s * t * sup_root))

    # stronger small-ball at the origin on the subspaces passing the
    # origin-statistic filter, fitted over a data-driven radius grid
    good2 = origin_stats <= threshold
    pooled = r_all[good2].ravel()
    c3 = 0.0
    eps_grid = []
    if pooled.size:
        qs = np.quantile(pooled[pooled > 0], [0.001, 0.01, 0.05, 0.2])
        eps_grid = sorted(set(float(v) / math.sqrt(k) for v in qs if v > 0))
        for j in np.nonzero(good2)[0]:
            for eps in eps_grid:
                frac = float((r_all[j] <= eps * math.sqrt(k)).mean())
                if frac > 0:
                    c3 = max(c3, frac ** (1.0 / k) / (eps * s * sup_root))

    diagnostics = {
        "c1": c1, "c2": c2, "c3": c3,
        "bad_fraction": bad_frac, "bad_envelope": envelope,
        "worst_point_bad_fraction": worst_b_frac,
        "point_envelope": t ** (-kn),
        "eps_grid": eps_grid,
        "mean_statistic": float(averages.mean()),
    }
    ok = (c2 <= CONSTANT_CEILING and c1 <= CONSTANT_CEILING
          and c3 <= CONSTANT_CEILING
          and bad_frac <= envelope + bad_slack
          and worst_b_frac <= t ** (-kn) + 1e-12)
    if adversarial is not None:
        t_vals, _, _ = _fiber_statistics(f, adversarial, n_x, streams[-1])
        adv_avg = float(t_vals.mean())
        detected = adv_avg > threshold or \
            _origin_statistic(f, adversarial) > threshold
        diagnostics["adversarial_average"] = adv_avg
        diagnostics["adversarial_threshold"] = threshold
        diagnostics["adversarial_detected"] = detected
        ok = ok and detected
    lhs = Estimate(float(averages.mean()),
                   float(averages.std(ddof=1) / math.sqrt(n_subspaces)),
                   n_subspaces)
    rhs = Estimate.exact(threshold)
    return CheckReport(
        name="marginal_bound",
        parameters={"n": n, "k": k, "s": s, "t": t,
                    "n_subspaces": n_subspaces, "n_x": n_x},
        lhs=lhs, rhs=rhs,
        ratio=lhs.value / rhs.value if rhs.value else math.inf,
        verdict=PASS if ok else FAIL,
        diagnostics=diagnostics)


def gaussian_sharpness_experiment(n: int, k: int, s: float, n_subspaces: int,
                                  rng: np.random.Generator,
                                  substreams: int = 1) -> CheckReport:
    """Measure of sections where the skewed Gaussian marginal sup is large.

    The law has k variances sigma^2 = (2pi)^(-n/k) and n-k unit variances,
    so the full density has sup exactly 1.  The event
    {||projected density sup||^(1/k) >= s} is evaluated in closed form per
    section from det of the projected covariance; the claimed lower bound
    is (2s)^(-k(n-k)).  The verdict states the claim as printed; the fitted
    scale factor that would make the bound tight is reported either way.
    """
    if not 1 <= k <= n - 1:
        raise ValueError(f"need 1 <= k <= n-1, got k={k} n={n}")
    sigma2 = (2 * math.pi) ** (-n / k)
    if not 1.0 <= s <= sigma2 ** -0.5:
        raise ValueError(f"need 1 <= s <= sigma^-1 = {sigma2 ** -0.5:.4g}")
    diag = np.concatenate([np.full(k, sigma2), np.ones(n - k)])
    # event: (2 pi)^(-1/2) det(B^T D B)^(-1/(2k)) >= s
    log_cut = -k * math.log(2 * math.pi) - 2 * k * math.log(s)

    def draw(stream, m):
        bases = haar_bases(n, k, m, stream)
        scaled = bases * diag[None, :, None]
        gram = np.einsum("sji,sjl->sil", bases, scaled)
        sign, logdet = np.linalg.slogdet(gram)
        return (logdet <= log_cut).astype(float)

    emp = mc_estimate(draw, n_subspaces, rng, substreams)
    bound = (2.0 * s) ** (-k * (n - k))
    passed = emp.value >= bound - 3.0 * emp.stderr
    fitted_factor = (emp.value ** (-1.0 / (k * (n - k))) / s
                     if emp.value > 0 else math.inf)
    return CheckReport(
        name="gaussian_sharpness",
        parameters={"n": n, "k": k, "s": s, "n_subspaces": n_subspaces},
        lhs=Estimate.exact(bound), rhs=emp,
        ratio=bound / emp.value if emp.value else math.inf,
        verdict=PASS if passed else FAIL,
        diagnostics={
            "empirical_measure": emp.value,
            "claimed_bound": bound,
            "binomial_stderr": emp.stderr,
            "sigma": math.sqrt(sigma2),
            # the factor a for which empirical = (a s)^(-k(n-k)); the
            # claim corresponds to a = 2
            "fitted_factor": fitted_factor,
        })


def perturbation_experiment(f: DensityModel, k: int, E: Subspace, eta: float,
                            eps_grid, n_samples: int,
                            rng: np.random.Generator,
                            n_candidates: int = 32) -> CheckReport:
    """Search for a nearby subspace with near-optimal small-ball behavior.

    Draws candidate subspaces within distance eta of E (E itself included)
    and fits, per candidate, the smallest c making the projected small-ball
    mass obey (c (eps/eta) sup^(1/n))^(kn/(n+1)) across the radius grid at
    the origin and at one sampled center.  Passes when the best candidate's
    fitted c is O(1), i.e. at most 10.
    """
    n = f.n
    eps_grid = [float(e) for e in eps_grid]
    if not eps_grid or any(e <= 0 for e in eps_grid):
        raise ValueError("eps_grid must be positive")
    if abs(f.mass - 1.0) > 1e-9:
        raise ValueError("f must be a probability density (unit mass)")
    draws = f.sample(n_samples, rng)
    exponent = (n + 1) / (k * n)
    sup_root = f.sup ** (1.0 / n)
    candidates = [E]
    for _ in range(n_candidates - 1):
        candidates.append(perturb_subspace(E, eta, rng))
    needed = np.empty(len(candidates))
    tables = []
    for idx, cand in enumerate(candidates):
        coords = draws @ cand.basis
        centers = [np.zeros(k), coords[0]]
        worst = 0.0
        table = []
        for eps in eps_grid:
            fracs = []
            for z in centers:
                frac = float((np.linalg.norm(coords - z, axis=1)
                              <= eps * math.sqrt(k)).mean())
                c_here = frac ** exponent * eta / (eps * sup_root)
                worst = max(worst, c_here)
                fracs.append(frac)
            table.append(max(fracs))
        needed[idx] = worst
        tables.append(table)
    best = int(np.argmin(needed))
    fitted = float(needed[best])
    dists = distances_to(E, np.stack([c.basis for c in candidates]))
    success = float((needed <= CONSTANT_CEILING).mean())
    return CheckReport(
        name="perturbation",
        parameters={"n": n, "k": k, "eta": eta, "eps_grid": eps_grid,
                    "n_samples": n_samples, "n_candidates": n_candidates},
        lhs=Estimate.exact(fitted),
        rhs=Estimate.exact(CONSTANT_CEILING),
        ratio=fitted / CONSTANT_CEILING,
        verdict=PASS if fitted <= CONSTANT_CEILING else FAIL,
        diagnostics={
            "fitted_constant": fitted,
            "best_candidate_distance": float(dists[best]),
            "success_fraction": success,
            "candidate_constants": needed.tolist(),
            "best_small_ball_fractions": tables[best],
        })
