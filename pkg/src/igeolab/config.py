"""Run configuration: flat INI-style files with JSON values.

A config file has one [run] section, any number of [density <name>]
sections (inline specs or pointers to density text files), and any number
of [check <label>] sections.  Every value is parsed as JSON, so strings
are quoted and vectors/matrices are plain JSON arrays.  Unknown check
names and parameter maps violating a check's preconditions are rejected
here, before any sampling happens.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import verify
from .densities import (DensityModel, EllipsoidIndicator, GaussianDensity,
                        Grid1D, ProductDensity, RadialGridDensity,
                        TruncatedGaussian, read_density_text)
from .functionals import ExponentSpec
from .grassmann import Subspace

__all__ = ["ConfigError", "CheckJob", "RunConfig", "load_config",
           "build_density", "CHECKS", "check_names", "describe_check"]


class ConfigError(ValueError):
    """Config problem, tagged with the section and field it came from."""

    def __init__(self, section: str, field_name: str, message: str):
        self.section = section
        self.field = field_name
        super().__init__(f"[{section}] {field_name}: {message}")


@dataclass(frozen=True)
class CheckJob:
    label: str
    name: str
    params: dict


@dataclass(frozen=True)
class RunConfig:
    seed: int
    substreams: int
    output_dir: str
    densities: dict[str, DensityModel]
    checks: list[CheckJob] = field(default_factory=list)

    def resolved_hash(self) -> str:
        """Hash of the effective configuration (seed overrides included)."""
        payload = {
            "seed": self.seed,
            "substreams": self.substreams,
            "densities": sorted(self.densities),
            "checks": [[j.label, j.name,
                        json.dumps(j.params, sort_keys=True, default=str)]
                       for j in self.checks],
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Density specs.
# ---------------------------------------------------------------------------

def _scaled(f: DensityModel, factor: float) -> DensityModel:
    if isinstance(f, EllipsoidIndicator):
        return EllipsoidIndicator(f.shape_matrix, f.center,
                                  f.amplitude * factor)
    if isinstance(f, GaussianDensity):
        return GaussianDensity(f.mean, f.cov, f.amplitude * factor)
    if isinstance(f, TruncatedGaussian):
        return TruncatedGaussian(f.center, f.tau, f.radius,
                                 f.amplitude * factor)
    if isinstance(f, ProductDensity):
        return ProductDensity(f.factors, f.amplitude * factor)
    if isinstance(f, RadialGridDensity):
        return RadialGridDensity(f.n, f.edges, f.heights * factor)
    raise ConfigError("density", "normalize",
                      f"cannot rescale {type(f).__name__}")


def build_density(spec: dict, base_dir: str = ".") -> DensityModel:
    """Build one density from a parsed spec map.

    kinds: file, gaussian, ellipsoid, truncated_gaussian, radial, product.
    normalize = true rescales to unit mass after construction.
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    normalize = bool(spec.pop("normalize", False))
    try:
        if kind == "file":
            path = spec.pop("path")
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            with open(path, encoding="utf-8") as fh:
                f = read_density_text(fh.read())
        elif kind == "gaussian":
            if "mean" in spec:
                mean = np.asarray(spec.pop("mean"), dtype=float)
            else:
                mean = np.zeros(int(spec.pop("n")))
            cov = spec.pop("cov", 1.0)
            if np.isscalar(cov):
                cov = float(cov) * np.eye(mean.size)
            f = GaussianDensity(mean, np.asarray(cov, dtype=float),
                                float(spec.pop("amplitude", 1.0)))
        elif kind == "ellipsoid":
            if "shape" in spec:
                shape = np.asarray(spec.pop("shape"), dtype=float)
                n = shape.shape[0]
            else:
                n = int(spec.pop("n"))
                shape = np.eye(n) / float(spec.pop("radius", 1.0)) ** 2
            center = spec.pop("center", None)
            if center is not None:
                center = np.asarray(center, dtype=float)
            f = EllipsoidIndicator(shape, center,
                                   float(spec.pop("amplitude", 1.0)))
        elif kind == "truncated_gaussian":
            if "center" in spec:
                center = np.asarray(spec.pop("center"), dtype=float)
            else:
                center = np.zeros(int(spec.pop("n")))
            f = TruncatedGaussian.normalized(center, float(spec.pop("tau")),
                                             float(spec.pop("radius")))
            if "amplitude" in spec:
                f = _scaled(f, float(spec.pop("amplitude")) / f.amplitude)
        elif kind == "radial":
            n = int(spec.pop("n"))
            heights = np.asarray(spec.pop("heights"), dtype=float)
            if "edges" in spec:
                f = RadialGridDensity(n, np.asarray(spec.pop("edges"),
                                                    dtype=float), heights)
            else:
                f = RadialGridDensity.uniform(n, float(spec.pop("radius")),
                                              heights)
        elif kind == "product":
            factors = []
            for fac in spec.pop("factors"):
                factors.append(Grid1D(float(fac.get("lo", -0.5)),
                                      float(fac.get("hi", 0.5)),
                                      np.asarray(fac["heights"],
                                                 dtype=float)))
            f = ProductDensity(factors, float(spec.pop("amplitude", 1.0)))
        else:
            raise KeyError(f"unknown density kind {kind!r}")
    except KeyError as exc:
        raise ConfigError("density", str(exc), "missing or unknown field") \
            from exc
    if spec:
        raise ConfigError("density", ", ".join(sorted(spec)),
                          f"unused fields for kind {kind!r}")
    if normalize:
        f = _scaled(f, 1.0 / f.mass)
    return f


# ---------------------------------------------------------------------------
# Check registry: schema, precondition validation, invocation.
# ---------------------------------------------------------------------------

def _dens(params, densities, key, section):
    name = params.get(key)
    if not isinstance(name, str) or name not in densities:
        raise ConfigError(section, key,
                          f"must name a configured density, got {name!r}")
    return densities[name]


def _dens_list(params, densities, section):
    names = params.get("densities")
    if not isinstance(names, list) or not names:
        raise ConfigError(section, "densities",
                          "must be a nonempty list of density names")
    out = []
    for name in names:
        if name not in densities:
            raise ConfigError(section, "densities",
                              f"unknown density {name!r}")
        out.append(densities[name])
    dims = {f.n for f in out}
    if len(dims) != 1:
        raise ConfigError(section, "densities",
                          f"mixed ambient dimensions {sorted(dims)}")
    return out


def _num(params, key, section, *, default=None, minimum=None,
         integer=False, maximum=None):
    if key not in params:
        if default is None:
            raise ConfigError(section, key, "required")
        return default
    v = params[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(section, key, f"must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(section, key, f"must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(section, key, f"must be >= {minimum}, got {v}")
    if maximum is not None and v > maximum:
        raise ConfigError(section, key, f"must be <= {maximum}, got {v}")
    return int(v) if integer else float(v)


def _exponent_spec(params, section):
    ps = params.get("spec_p")
    alphas = params.get("spec_alpha")
    if not isinstance(ps, list) or not isinstance(alphas, list) \
            or len(ps) != len(alphas) or not ps:
        raise ConfigError(section, "spec_p/spec_alpha",
                          "must be equal-length nonempty lists")
    ps = [math.inf if p == "inf" else float(p) for p in ps]
    try:
        return ExponentSpec(tuple(ps), tuple(float(a) for a in alphas))
    except ValueError as exc:
        raise ConfigError(section, "spec_p", str(exc)) from exc


def _map_spec(params, key, section, n, rng=None):
    """Volume-preserving map: explicit matrix, or 'shear' / 'rotation'
    drawn from the check's stream."""
    raw = params.get(key, "rotation")
    if isinstance(raw, str):
        if raw not in ("shear", "rotation"):
            raise ConfigError(section, key,
                              "must be 'shear', 'rotation', or a matrix")
        if rng is None:
            return None
        if raw == "rotation":
            q_mat, r_mat = np.linalg.qr(rng.normal(size=(n, n)))
            q_mat *= np.sign(np.diagonal(r_mat))
            if np.linalg.det(q_mat) < 0:
                q_mat[:, 0] = -q_mat[:, 0]
            return q_mat
        # entries bounded away from zero so non-invariance controls keep
        # their detection power
        mat = np.eye(n)
        iu = np.triu_indices(n, k=1)
        m = len(iu[0])
        mat[iu] = rng.uniform(0.5, 1.5, size=m) * rng.choice([-1.0, 1.0], m)
        return mat
    mat = np.asarray(raw, dtype=float)
    if mat.shape != (n, n):
        raise ConfigError(section, key, f"matrix must be {n}x{n}")
    if abs(abs(np.linalg.det(mat)) - 1.0) > 1e-9:
        raise ConfigError(section, key, "matrix must preserve volume")
    return mat


def _shift_spec(params, section, n, rng=None):
    raw = params.get("shift", "random")
    if isinstance(raw, str):
        if raw != "random":
            raise ConfigError(section, "shift",
                              "must be 'random' or a vector")
        return None if rng is None else 0.5 * rng.normal(size=n)
    vec = np.asarray(raw, dtype=float)
    if vec.shape != (n,):
        raise ConfigError(section, "shift", f"vector must have length {n}")
    return vec


def _subspace_spec(params, key, section, n, required=False):
    raw = params.get(key)
    if raw is None:
        if required:
            raise ConfigError(section, key, "required")
        return None
    arr = np.asarray(raw, dtype=float)
    if arr.ndim == 1:
        axes = arr.astype(int)
        if not np.all(arr == axes) or np.any(axes < 0) or np.any(axes >= n) \
                or len(set(axes.tolist())) != len(axes):
            raise ConfigError(section, key,
                              f"axis list must be distinct ints in [0,{n})")
        basis = np.zeros((n, len(axes)))
        basis[axes, np.arange(len(axes))] = 1.0
        return Subspace(basis)
    if arr.ndim == 2 and arr.shape[0] == n:
        try:
            return Subspace(arr)
        except ValueError as exc:
            raise ConfigError(section, key, str(exc)) from exc
    raise ConfigError(section, key, "must be an axis list or an n x k basis")


class _CheckSpec:
    def __init__(self, doc, validate, run):
        self.doc = doc
        self.validate = validate
        self.run = run


def _v_bp_subspace(params, densities, section):
    fl = _dens_list(params, densities, section)
    n = fl[0].n
    k = _num(params, "k", section, minimum=1, maximum=n, integer=True)
    if not 1 <= len(fl) <= k:
        raise ConfigError(section, "densities",
                          f"need 1 <= q <= k, got q={len(fl)} k={k}")
    _num(params, "p", section, default=0.0, minimum=0.0)
    _num(params, "n_direct", section, minimum=2, integer=True)
    _num(params, "n_subspaces", section, minimum=2, integer=True)
    _num(params, "inner", section, default=256, minimum=1, integer=True)


def _r_bp_subspace(params, densities, rng, substreams, section):
    fl = _dens_list(params, densities, section)
    return verify.check_bp_subspace(
        fl, k=int(params["k"]), p=float(params.get("p", 0.0)),
        n_direct=int(params["n_direct"]),
        n_subspaces=int(params["n_subspaces"]), rng=rng,
        inner=int(params.get("inner", 256)))


def _v_bp_flat(params, densities, section):
    f = _dens(params, densities, "density", section)
    n = f.n
    k = _num(params, "k", section, minimum=1, maximum=n, integer=True)
    p = _num(params, "p", section, default=0.0, minimum=0.0)
    if p != 0.0 and p < 1.0:
        raise ConfigError(section, "p", "offset exponent must be 0 or >= 1")
    if k == n and p != 0.0:
        raise ConfigError(section, "k", "offset exponents need k <= n-1")
    r_win = _num(params, "R", section, minimum=0.0)
    if f.support_radius > r_win + 1e-9:
        raise ConfigError(section, "R",
                          f"support radius {f.support_radius:.4g} exceeds "
                          f"window {r_win}")
    _num(params, "n_direct", section, default=0, minimum=0, integer=True)
    _num(params, "n_flats", section, minimum=2, integer=True)
    _num(params, "inner", section, default=256, minimum=1, integer=True)


def _r_bp_flat(params, densities, rng, substreams, section):
    f = _dens(params, densities, "density", section)
    return verify.check_bp_flat(
        f, k=int(params["k"]), n_direct=int(params.get("n_direct", 0)),
        n_flats=int(params["n_flats"]), R=float(params["R"]), rng=rng,
        p=float(params.get("p", 0.0)), inner=int(params.get("inner", 256)))


def _v_linear_invariance(params, densities, section):
    fl = _dens_list(params, densities, section)
    n = fl[0].n
    k = _num(params, "k", section, minimum=1, maximum=n - 1, integer=True)
    spec = _exponent_spec(params, section)
    if len(spec) != len(fl):
        raise ConfigError(section, "spec_p",
                          "one exponent slot per density required")
    _map_spec(params, "map", section, n)
    _num(params, "n_subspaces", section, minimum=2, integer=True)


def _r_linear_invariance(params, densities, rng, substreams, section):
    fl = _dens_list(params, densities, section)
    n = fl[0].n
    map_rng = rng.spawn(1)[0]
    g = _map_spec(params, "map", section, n, map_rng)
    return verify.check_linear_invariance(
        fl, _exponent_spec(params, section), k=int(params["k"]), g=g,
        n_subspaces=int(params["n_subspaces"]), rng=rng,
        method=_method(params), substreams=substreams)


def _v_affine_invariance(params, densities, section):
    fl = _dens_list(params, densities, section)
    n = fl[0].n
    k = _num(params, "k", section, minimum=1, maximum=n - 1, integer=True)
    spec = _exponent_spec(params, section)
    if len(spec) != len(fl):
        raise ConfigError(section, "spec_p",
                          "one exponent slot per density required")
    if any(not np.isfinite(f.support_radius) for f in fl):
        raise ConfigError(section, "densities",
                          "flat averages need bounded supports")
    _map_spec(params, "map", section, n)
    _shift_spec(params, section, n)
    _num(params, "R", section, minimum=0.0)
    _num(params, "n_flats", section, minimum=2, integer=True)


def _r_affine_invariance(params, densities, rng, substreams, section):
    fl = _dens_list(params, densities, section)
    n = fl[0].n
    map_rng = rng.spawn(1)[0]
    g = _map_spec(params, "map", section, n, map_rng)
    shift = _shift_spec(params, section, n, map_rng)
    return verify.check_affine_invariance(
        fl, _exponent_spec(params, section), k=int(params["k"]),
        g=(g, shift), R=float(params["R"]),
        n_flats=int(params["n_flats"]), rng=rng, method=_method(params),
        substreams=substreams)


def _v_rearrangement(params, densities, section):
    fl = _dens_list(params, densities, section)
    n = fl[0].n
    case = params.get("case", "cone")
    if case not in ("cone", "simplex"):
        raise ConfigError(section, "case", "must be 'cone' or 'simplex'")
    limit = n if case == "cone" else n + 1
    if len(fl) > limit:
        raise ConfigError(section, "densities",
                          f"at most {limit} densities for case {case!r}")
    _num(params, "p", section, minimum=1.0)
    _num(params, "n_samples", section, minimum=2, integer=True)
    _num(params, "levels", section, default=1000, minimum=2, integer=True)
    for f in fl:
        if f.superlevel_volume(f.sup / 2) is None:
            raise ConfigError(section, "densities",
                              "rearrangement needs exact level profiles")


def _r_rearrangement(params, densities, rng, substreams, section):
    fl = _dens_list(params, densities, section)
    return verify.check_rearrangement_monotonicity(
        fl, p=float(params["p"]), case=params.get("case", "cone"),
        n_samples=int(params["n_samples"]), rng=rng,
        levels=int(params.get("levels", 1000)), substreams=substreams)


def _v_grinberg(params, densities, section):
    fl = _dens_list(params, densities, section)
    n = fl[0].n
    q = len(fl)
    k = _num(params, "k", section, minimum=1, maximum=n - 1, integer=True)
    if not q <= k:
        raise ConfigError(section, "densities",
                          f"need q <= k, got q={q} k={k}")
    _num(params, "p", section, default=0.0, minimum=0.0, maximum=n - k)
    _num(params, "n_subspaces", section, minimum=2, integer=True)


def _r_grinberg(params, densities, rng, substreams, section):
    fl = _dens_list(params, densities, section)
    return verify.check_grinberg_functional(
        fl, k=int(params["k"]), p=float(params.get("p", 0.0)),
        n_subspaces=int(params["n_subspaces"]), rng=rng,
        method=_method(params),
        expect_equality=bool(params.get("expect_equality", False)),
        substreams=substreams)


def _v_schneider(params, densities, section):
    f = _dens(params, densities, "density", section)
    n = f.n
    _num(params, "k", section, minimum=1, maximum=n - 1, integer=True)
    if not np.isfinite(f.support_radius):
        raise ConfigError(section, "density",
                          "flat averages need bounded supports")
    _num(params, "R", section, default=f.support_radius, minimum=0.0)
    _num(params, "n_flats", section, minimum=2, integer=True)


def _r_schneider(params, densities, rng, substreams, section):
    f = _dens(params, densities, "density", section)
    return verify.check_schneider_functional(
        f, k=int(params["k"]), R=float(params.get("R", f.support_radius)),
        n_flats=int(params["n_flats"]), rng=rng, method=_method(params),
        expect_equality=bool(params.get("expect_equality", False)),
        substreams=substreams)


def _v_marginal_bound(params, densities, section):
    f = _dens(params, densities, "density", section)
    n = f.n
    k = _num(params, "k", section, minimum=1, maximum=n - 1, integer=True)
    if abs(f.mass - 1.0) > 1e-9:
        raise ConfigError(section, "density",
                          "must be a probability density (unit mass); "
                          "set normalize = true")
    _num(params, "s", section, minimum=1.0 + 1e-9)
    _num(params, "t", section, minimum=1.0 + 1e-9)
    _num(params, "n_subspaces", section, minimum=2, integer=True)
    _num(params, "n_x", section, minimum=2, integer=True)
    _subspace_spec(params, "adversarial", section, n)


def _r_marginal_bound(params, densities, rng, substreams, section):
    f = _dens(params, densities, "density", section)
    adv = _subspace_spec(params, "adversarial", section, f.n)
    return verify.marginal_bound_experiment(
        f, k=int(params["k"]), s=float(params["s"]), t=float(params["t"]),
        n_subspaces=int(params["n_subspaces"]), n_x=int(params["n_x"]),
        rng=rng, adversarial=adv)


def _v_gaussian_sharpness(params, densities, section):
    n = _num(params, "n", section, minimum=2, integer=True)
    k = _num(params, "k", section, minimum=1, maximum=n - 1, integer=True)
    sigma_inv = (2 * math.pi) ** (n / (2.0 * k))
    _num(params, "s", section, minimum=1.0, maximum=sigma_inv)
    _num(params, "n_subspaces", section, minimum=2, integer=True)


def _r_gaussian_sharpness(params, densities, rng, substreams, section):
    return verify.gaussian_sharpness_experiment(
        n=int(params["n"]), k=int(params["k"]), s=float(params["s"]),
        n_subspaces=int(params["n_subspaces"]), rng=rng,
        substreams=substreams)


def _v_perturbation(params, densities, section):
    f = _dens(params, densities, "density", section)
    n = f.n
    k = _num(params, "k", section, minimum=1, maximum=n - 1, integer=True)
    if abs(f.mass - 1.0) > 1e-9:
        raise ConfigError(section, "density",
                          "must be a probability density (unit mass)")
    sub = _subspace_spec(params, "subspace", section, n, required=True)
    if sub.k != k:
        raise ConfigError(section, "subspace",
                          f"dimension {sub.k} does not match k={k}")
    _num(params, "eta", section, minimum=1e-9)
    grid = params.get("eps_grid")
    if not isinstance(grid, list) or not grid \
            or any(not isinstance(e, (int, float)) or e <= 0 for e in grid):
        raise ConfigError(section, "eps_grid",
                          "must be a nonempty list of positive radii")
    _num(params, "n_samples", section, minimum=2, integer=True)
    _num(params, "n_candidates", section, default=32, minimum=1,
         integer=True)


def _r_perturbation(params, densities, rng, substreams, section):
    f = _dens(params, densities, "density", section)
    sub = _subspace_spec(params, "subspace", section, f.n, required=True)
    return verify.perturbation_experiment(
        f, k=int(params["k"]), E=sub, eta=float(params["eta"]),
        eps_grid=[float(e) for e in params["eps_grid"]],
        n_samples=int(params["n_samples"]), rng=rng,
        n_candidates=int(params.get("n_candidates", 32)))


def _method(params):
    m = params.get("method", "exact")
    if isinstance(m, list):
        return (m[0], int(m[1]))
    return m


CHECKS: dict[str, _CheckSpec] = {
    "bp_subspace": _CheckSpec(
        "simplex-moment decomposition over linear sections "
        "(densities, k, p, n_direct, n_subspaces)",
        _v_bp_subspace, _r_bp_subspace),
    "bp_flat": _CheckSpec(
        "simplex-moment decomposition over affine sections "
        "(density, k, R, n_flats [, p, n_direct])",
        _v_bp_flat, _r_bp_flat),
    "linear_invariance": _CheckSpec(
        "section-norm average under a volume-preserving linear map "
        "(densities, spec_p, spec_alpha, k, map, n_subspaces)",
        _v_linear_invariance, _r_linear_invariance),
    "affine_invariance": _CheckSpec(
        "section-norm flat average under a volume-preserving affine map "
        "(densities, spec_p, spec_alpha, k, map, shift, R, n_flats)",
        _v_affine_invariance, _r_affine_invariance),
    "rearrangement_chain": _CheckSpec(
        "simplex functional vs rearranged and ball inputs "
        "(densities, p, case, n_samples [, levels])",
        _v_rearrangement, _r_rearrangement),
    "grinberg_functional": _CheckSpec(
        "L1/sup section-norm average inequality "
        "(densities, k, p, n_subspaces [, expect_equality])",
        _v_grinberg, _r_grinberg),
    "schneider_functional": _CheckSpec(
        "flat-average mass/sup inequality "
        "(density, k, n_flats [, R, expect_equality])",
        _v_schneider, _r_schneider),
    "marginal_bound": _CheckSpec(
        "Markov-set marginal bound with fitted constants "
        "(density, k, s, t, n_subspaces, n_x [, adversarial])",
        _v_marginal_bound, _r_marginal_bound),
    "gaussian_sharpness": _CheckSpec(
        "skewed-Gaussian sharpness of the marginal sup bound "
        "(n, k, s, n_subspaces)",
        _v_gaussian_sharpness, _r_gaussian_sharpness),
    "perturbation": _CheckSpec(
        "nearby subspace with near-optimal small-ball mass "
        "(density, k, subspace, eta, eps_grid, n_samples)",
        _v_perturbation, _r_perturbation),
}


def check_names() -> list[str]:
    return sorted(CHECKS)


def describe_check(name: str) -> str:
    return CHECKS[name].doc


# ---------------------------------------------------------------------------
# File parsing.
# ---------------------------------------------------------------------------

def _json_value(section: str, key: str, raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(section, key,
                          f"not valid JSON ({exc.msg}): {raw!r}") from exc


def load_config(path: str, *, seed_override: int | None = None,
                output_override: str | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    read = parser.read(path)
    if not read:
        raise ConfigError("run", "path", f"cannot read config file {path!r}")
    base_dir = os.path.dirname(os.path.abspath(path))

    if not parser.has_section("run"):
        raise ConfigError("run", "section", "missing [run] section")
    run_raw = {k: _json_value("run", k, v) for k, v in parser.items("run")}
    seed = run_raw.pop("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) \
            or not 0 <= seed < 2 ** 64:
        raise ConfigError("run", "seed", "must be a 64-bit unsigned integer")
    substreams = run_raw.pop("substreams", 1)
    if not isinstance(substreams, int) or isinstance(substreams, bool) \
            or substreams < 1:
        raise ConfigError("run", "substreams", "must be a positive integer")
    output_dir = run_raw.pop("output_dir", "igeolab-out")
    if not isinstance(output_dir, str):
        raise ConfigError("run", "output_dir", "must be a string path")
    if run_raw:
        raise ConfigError("run", ", ".join(sorted(run_raw)),
                          "unknown fields")
    if seed_override is not None:
        seed = seed_override
    if output_override is not None:
        output_dir = output_override

    densities: dict[str, DensityModel] = {}
    checks: list[CheckJob] = []
    for section in parser.sections():
        if section == "run":
            continue
        parts = section.split(None, 1)
        items = {k: _json_value(section, k, v)
                 for k, v in parser.items(section)}
        if parts[0] == "density":
            if len(parts) != 2:
                raise ConfigError(section, "section",
                                  "density sections need a name")
            try:
                densities[parts[1]] = build_density(items, base_dir)
            except ConfigError as exc:
                raise ConfigError(section, exc.field, str(exc)) from exc
            except (ValueError, OSError) as exc:
                raise ConfigError(section, "spec", str(exc)) from exc
        elif parts[0] == "check":
            if len(parts) != 2:
                raise ConfigError(section, "section",
                                  "check sections need a label")
            name = items.pop("check", None)
            if name not in CHECKS:
                raise ConfigError(section, "check",
                                  f"unknown check {name!r}; known: "
                                  f"{', '.join(check_names())}")
            label = parts[1]
            if any(j.label == label for j in checks):
                raise ConfigError(section, "section",
                                  f"duplicate check label {label!r}")
            checks.append(CheckJob(label, name, items))
        else:
            raise ConfigError(section, "section",
                              "sections must be [run], [density <name>], "
                              "or [check <label>]")

    for job in checks:
        try:
            CHECKS[job.name].validate(job.params, densities,
                                      f"check {job.label}")
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"check {job.label}", "params", str(exc)) \
                from exc
    return RunConfig(seed=seed, substreams=substreams, output_dir=output_dir,
                     densities=densities, checks=checks)
