"""Ball volumes, normalizing constants, simplex volumes."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from igeolab.geometry import (Dimensions, bp_constant, simplex0_volume,
                              simplex_volume, unit_ball_volume,
                              unit_volume_radius)


def test_unit_ball_volumes():
    assert unit_ball_volume(0) == 1.0
    assert unit_ball_volume(1) == 2.0
    assert unit_ball_volume(2) == pytest.approx(math.pi, rel=1e-15)
    assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0, rel=1e-15)
    assert unit_ball_volume(4) == pytest.approx(math.pi ** 2 / 2.0, rel=1e-15)
    # recursion omega_n = omega_{n-2} * 2 pi / n holds along the whole table
    for n in range(2, 12):
        assert unit_ball_volume(n) == pytest.approx(
            unit_ball_volume(n - 2) * 2.0 * math.pi / n, rel=1e-13)


def test_unit_volume_radius():
    for n in range(1, 7):
        r = unit_volume_radius(n)
        assert unit_ball_volume(n) * r ** n == pytest.approx(1.0, rel=1e-13)
    # r_1 = 1/2, r_2 = 1/sqrt(pi); r_n crosses 1 where omega_n drops
    # below 1, which happens between n=12 and n=13
    assert unit_volume_radius(1) == pytest.approx(0.5)
    assert unit_volume_radius(2) == pytest.approx(1.0 / math.sqrt(math.pi))
    assert unit_volume_radius(5) < 1.0 < unit_volume_radius(13)


def test_bp_constant_small_cases():
    # closed forms worked out by hand from the factorial/volume ratio
    assert bp_constant(Dimensions(2, 1, 1)) == pytest.approx(math.pi / 2)
    assert bp_constant(Dimensions(3, 2, 1)) == pytest.approx(4.0 / 3.0)
    assert bp_constant(Dimensions(3, 1, 1)) == pytest.approx(2 * math.pi / 3)
    assert bp_constant(Dimensions(4, 2, 2)) == pytest.approx(4 * math.pi ** 2 / 3)
    # k = n collapses the ratio entirely
    for n in range(1, 5):
        for q in range(1, n + 1):
            assert bp_constant(Dimensions(n, n, q)) == pytest.approx(1.0)


def test_dimensions_validation():
    with pytest.raises(ValueError):
        Dimensions(2, 3, 1)
    with pytest.raises(ValueError):
        Dimensions(3, 2, 0)
    with pytest.raises(ValueError):
        Dimensions(3, 2, 3)  # q > k
    with pytest.raises(ValueError):
        Dimensions(0, 0, 0)


def test_simplex0_volume_right_simplices():
    # edges e1 and 2 e2: area = |det| / 2! = 1
    pts = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert simplex0_volume(pts) == pytest.approx(1.0)
    # single vector: length
    assert simplex0_volume(np.array([[3.0, 4.0]])) == pytest.approx(5.0)
    # full-dimensional: |det| / n!
    m = np.array([[2.0, 1.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 3.0]])
    assert simplex0_volume(m) == pytest.approx(abs(np.linalg.det(m)) / 6.0)


def test_simplex_volume_translation():
    rng = np.random.default_rng(7)
    pts = rng.standard_normal((4, 3))
    shift = rng.standard_normal(3)
    assert simplex_volume(pts + shift) == pytest.approx(
        simplex_volume(pts), rel=1e-10)
    assert simplex_volume(pts) == pytest.approx(
        simplex0_volume(pts[1:] - pts[0]), rel=1e-12)


def test_simplex0_volume_degenerate():
    pts = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]])  # collinear
    assert simplex0_volume(pts) == pytest.approx(0.0, abs=1e-12)
    assert simplex0_volume(np.zeros((2, 3))) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4),
       st.floats(0.1, 4.0), st.integers(0, 2 ** 31 - 1))
def test_simplex0_volume_scaling_and_rotation(q, n, c, seed):
    if q > n:
        q = n
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((q, n))
    vol = simplex0_volume(pts)
    # homogeneous of degree q
    assert simplex0_volume(c * pts) == pytest.approx(c ** q * vol, rel=1e-8)
    # invariant under a Haar-ish rotation
    rot, _ = np.linalg.qr(rng.standard_normal((n, n)))
    assert simplex0_volume(pts @ rot.T) == pytest.approx(vol, rel=1e-8, abs=1e-12)
