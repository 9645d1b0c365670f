from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interlacements.testfunctions import TestFunction, box_sites, discretize

kinds = st.sampled_from(["bump", "product-bump", "ball-indicator", "box-indicator"])


def _mc_integral(V, n=400_000, seed=0):
    rng = np.random.default_rng(seed)
    c, r = np.asarray(V.center), V.support_radius
    y = c + rng.uniform(-r, r, size=(n, V.dimension))
    vals = V(y) * (2 * r) ** V.dimension
    return vals.mean(), vals.std() / math.sqrt(n)


@pytest.mark.parametrize("kind", ["bump", "product-bump", "ball-indicator", "box-indicator"])
def test_integral_against_monte_carlo(kind):
    V = TestFunction(kind, (0.2, -0.1, 0.0), 0.7, 1.3)
    m, se = _mc_integral(V)
    assert abs(V.integral() - m) < 5 * se


def test_indicator_integrals_closed_form():
    assert TestFunction("ball-indicator", (0, 0, 0), 1.0, 1.0).integral() == pytest.approx(4 * math.pi / 3)
    assert TestFunction("box-indicator", (0, 0, 0), 0.5, 2.0).integral() == pytest.approx(2.0)


def test_integral_of_square_against_quadrature():
    V = TestFunction("bump", (0, 0, 0), 1.0, 0.1)
    s = np.linspace(0, 1, 200_001)[:-1]
    prof = np.exp(2 * (1 - 1 / (1 - s * s))) * s * s
    direct = 0.01 * 4 * math.pi * np.trapezoid(prof, s)
    assert V.integral_of_square() == pytest.approx(direct, rel=1e-6)


def test_peak_and_support():
    V = TestFunction("bump", (1.0, 0.0, 0.0), 0.5, 0.3)
    assert V(np.array([1.0, 0.0, 0.0])) == pytest.approx(0.3)
    assert V(np.array([1.5, 0.0, 0.0])) == 0.0
    assert V.is_radial and not TestFunction("box-indicator").is_radial
    with pytest.raises(ValueError):
        TestFunction("box-indicator").radial(0.1)


def test_invalid_specs():
    with pytest.raises(ValueError):
        TestFunction("gaussian")
    with pytest.raises(ValueError):
        TestFunction("bump", radius=0.0)
    with pytest.raises(ValueError):
        TestFunction.from_dict({"center": [0, 0]}, 3)


def test_discretize_bump_support():
    lf = discretize(TestFunction("bump", (0, 0, 0), 2.0, 0.1), 1)
    assert len(lf) == 27
    assert set(map(tuple, lf.sites.tolist())) == set(map(tuple, box_sites(-1, 1, 3).tolist()))


def test_box_sites_order():
    s = box_sites(0, 1, 2)
    assert s.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]


@settings(max_examples=40, deadline=None)
@given(kinds, st.floats(0.2, 2.0), st.floats(0.3, 3.0), st.floats(-2, 2))
def test_dilation_scales_integral(kind, r, lam, a):
    V = TestFunction(kind, (0.1, 0.0, -0.2), r, a)
    assert V.dilated(lam).integral() == pytest.approx(V.integral() / lam ** 3, rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(kinds, st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(0.1, 3), st.floats(-5, 5))
def test_dict_round_trip(kind, c, r, a):
    V = TestFunction(kind, tuple(c), r, a)
    assert TestFunction.from_dict(V.to_dict(), 3) == V


@settings(max_examples=40, deadline=None)
@given(kinds, st.integers(1, 6))
def test_discretize_matches_pointwise(kind, N):
    V = TestFunction(kind, (0.25, 0.0, 0.0), 0.6, 1.0)
    lf = discretize(V, N)
    assert np.allclose(lf.values, V(lf.sites / N))
    # no nonzero site is missed
    full = discretize(V, N, keep_zeros=True)
    assert np.count_nonzero(full.values) == len(lf)


@settings(max_examples=30, deadline=None)
@given(kinds, st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_translation_invariance(kind, shift):
    V = TestFunction(kind, (0.0, 0.0, 0.0), 0.8, 1.0)
    W = V.moved(shift)
    y = np.array([[0.1, 0.2, -0.3], [0.5, 0.0, 0.0]])
    assert np.allclose(W(y + np.array(shift)), V(y))
