"""Config parsing: density builders, check validation, failure modes.

Everything here must fail at parse time, before any sampling starts; a
bad config that dies twenty minutes into a run is the bug these tests
pin down.
"""

import math
import textwrap

import numpy as np
import pytest

from igeolab.config import ConfigError, build_density, load_config
from igeolab.densities import (EllipsoidIndicator, GaussianDensity,
                               ProductDensity, RadialGridDensity,
                               TruncatedGaussian)


def write_config(tmp_path, body):
    path = tmp_path / "suite.ini"
    path.write_text(textwrap.dedent(body))
    return str(path)


MINIMAL = """
    [run]
    seed = 42
    output_dir = "out"

    [density ball]
    kind = "ellipsoid"
    n = 2
    radius = 1.0
"""


def test_minimal_roundtrip(tmp_path):
    cfg = load_config(write_config(tmp_path, MINIMAL))
    assert cfg.seed == 42
    assert cfg.substreams == 1
    assert isinstance(cfg.densities["ball"], EllipsoidIndicator)
    assert cfg.checks == []
    assert len(cfg.resolved_hash()) == 64


def test_seed_and_output_overrides(tmp_path):
    path = write_config(tmp_path, MINIMAL)
    cfg = load_config(path, seed_override=7, output_override="elsewhere")
    assert cfg.seed == 7
    assert cfg.output_dir == "elsewhere"
    # hash tracks the resolved configuration, so overrides change it
    assert cfg.resolved_hash() != load_config(path).resolved_hash()


def test_density_builders():
    gauss = build_density({"kind": "gaussian", "n": 3}, ".")
    assert isinstance(gauss, GaussianDensity) and gauss.n == 3
    skew = build_density({"kind": "gaussian", "mean": [0.0, 1.0],
                          "cov": [[2.0, 0.1], [0.1, 0.5]]}, ".")
    assert skew.cov[0][0] == 2.0
    ell = build_density({"kind": "ellipsoid", "shape": [[1.0, 0.0], [0.0, 4.0]],
                         "center": [0.5, 0.0]}, ".")
    assert isinstance(ell, EllipsoidIndicator)
    trunc = build_density({"kind": "truncated_gaussian", "n": 2, "tau": 0.5,
                           "radius": 1.0}, ".")
    assert isinstance(trunc, TruncatedGaussian)
    assert trunc.mass == pytest.approx(1.0)  # built normalized
    rad = build_density({"kind": "radial", "radius": 1.0,
                         "heights": [2.0, 1.0], "n": 2}, ".")
    assert isinstance(rad, RadialGridDensity)
    prod = build_density({"kind": "product",
                          "factors": [{"heights": [1.0, 2.0]},
                                      {"heights": [1.0], "lo": -1.0, "hi": 1.0}]}, ".")
    assert isinstance(prod, ProductDensity)
    assert prod.factors[1].hi == 1.0


def test_density_normalize_flag():
    f = build_density({"kind": "ellipsoid", "n": 2, "radius": 2.0,
                       "normalize": True}, ".")
    assert f.mass == pytest.approx(1.0)


def test_density_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        build_density({"kind": "gaussian", "n": 2, "wobble": 3}, ".")
    with pytest.raises(ConfigError):
        build_density({"kind": "mystery", "n": 2}, ".")


def test_density_file_kind(tmp_path):
    txt = tmp_path / "box.txt"
    txt.write_text("product n=2\n1.0 2.0\n1.0\n")
    f = build_density({"kind": "file", "path": "box.txt"}, str(tmp_path))
    assert isinstance(f, ProductDensity)
    assert f.n == 2


def test_unknown_check_rejected(tmp_path):
    path = write_config(tmp_path, MINIMAL + """
    [check mystery]
    check = "quantum_leap"
    """)
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert "quantum_leap" in str(err.value)
    assert "bp_subspace" in str(err.value)  # lists what it does know


def test_duplicate_labels_rejected(tmp_path):
    # distinct section headers that normalize to the same label
    body = MINIMAL + """
    [check twin]
    check = "schneider_functional"
    density = "ball"
    k = 1
    R = 1.5
    n_flats = 100

    [check  twin]
    check = "schneider_functional"
    density = "ball"
    k = 1
    R = 1.5
    n_flats = 100
    """
    with pytest.raises(ConfigError) as err:
        load_config(write_config(tmp_path, body))
    assert "twin" in str(err.value)


def test_precondition_violations_rejected_at_parse(tmp_path):
    # k out of range for the density dimension
    body = MINIMAL + """
    [check bad-k]
    check = "bp_subspace"
    densities = ["ball"]
    k = 5
    p = 1.0
    n_direct = 100
    n_subspaces = 10
    """
    with pytest.raises(ConfigError) as err:
        load_config(write_config(tmp_path, body))
    assert "bad-k" in str(err.value) or "k" in str(err.value)

    # missing required field (R falls back to the support radius,
    # but the flat budget has no default)
    body = MINIMAL + """
    [check no-budget]
    check = "schneider_functional"
    density = "ball"
    k = 1
    """
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, body))

    # equality case demands the sharp exponent pairing, and p > n - k
    # has no finite flat integral to check against
    body = MINIMAL + """
    [check p-too-big]
    check = "grinberg_functional"
    densities = ["ball"]
    k = 1
    p = 3.5
    n_subspaces = 100
    """
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, body))


def test_unknown_density_reference_rejected(tmp_path):
    body = MINIMAL + """
    [check ghosts]
    check = "schneider_functional"
    density = "phantom"
    k = 1
    R = 1.5
    n_flats = 100
    """
    with pytest.raises(ConfigError) as err:
        load_config(write_config(tmp_path, body))
    assert "phantom" in str(err.value)


def test_map_must_preserve_volume(tmp_path):
    body = MINIMAL + """
    [density g2]
    kind = "gaussian"
    n = 2

    [check stretchy]
    check = "linear_invariance"
    densities = ["g2"]
    spec_p = [1.0]
    spec_alpha = [2.0]
    k = 1
    map = [[2.0, 0.0], [0.0, 1.0]]
    n_subspaces = 100
    """
    with pytest.raises(ConfigError) as err:
        load_config(write_config(tmp_path, body))
    assert "volume" in str(err.value)


def test_bad_json_value_is_reported_with_location(tmp_path):
    body = """
    [run]
    seed = not-a-number
    output_dir = "out"
    """
    with pytest.raises(ConfigError) as err:
        load_config(write_config(tmp_path, body))
    msg = str(err.value)
    assert "[run]" in msg and "seed" in msg


def test_case_sensitive_keys(tmp_path):
    # R and other uppercase keys must survive the parser
    body = MINIMAL + """
    [check cased]
    check = "schneider_functional"
    density = "ball"
    k = 1
    R = 1.5
    n_flats = 128
    """
    cfg = load_config(write_config(tmp_path, body))
    assert cfg.checks[0].params["R"] == 1.5


def test_spec_p_accepts_inf_strings(tmp_path):
    body = MINIMAL + """
    [density g2]
    kind = "gaussian"
    n = 2

    [check supnorm]
    check = "linear_invariance"
    densities = ["g2", "g2"]
    spec_p = [1.0, "inf"]
    spec_alpha = [2.0, 5.0]
    k = 1
    map = "rotation"
    n_subspaces = 64
    """
    cfg = load_config(write_config(tmp_path, body))
    assert cfg.checks[0].params["spec_p"][1] == "inf"


def test_config_error_formatting():
    err = ConfigError("check foo", "R", "required")
    assert "[check foo]" in str(err)
    assert "R" in str(err)
