from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interlacements._poisson import poisson_batch
from interlacements.rw_interlacements import (InterlacementSampler, ball_window, box_window,
                                              build_rescaled_measure, high_intensity_scale, lattice_weights,
                                              pair_measure, rescaled_masses, sample_occupation_field,
                                              support_window)
from interlacements.stats import cumulant_estimates, mean_estimate
from interlacements.testfunctions import TestFunction, discretize


@pytest.mark.parametrize("lam", [0.7, 5.0, 80.0])
def test_poisson_moments(lam):
    x = poisson_batch(np.random.default_rng(0), 200_000, lam).astype(float)
    m, v, _ = cumulant_estimates(x)
    assert abs(m.value - lam) < 4 * m.se
    assert abs(v.value - lam) < 4 * v.se


def test_windows():
    assert len(box_window(5)) == 125
    assert box_window(4)[0].tolist() == [-1, -1, -1]
    assert len(ball_window(1.5)) == 19


def test_mean_and_covariance_of_occupation_times(table3):
    # E L_x = u and Cov(L_x, L_y) = 2u g(x - y)
    K = np.array([[0, 0, 0], [1, 0, 0], [2, 1, 0]])
    s = InterlacementSampler(K, table3, escape_factor=2.0)
    u = 0.5
    f = s.fields(u, 40_000, 11, workers=2)
    for i in range(3):
        e = mean_estimate(f[:, i])
        assert abs(e.value - u) < 4 * e.se
    var = cumulant_estimates(f[:, 0])[1]
    assert abs(var.value - 2 * u * table3.g0) < 4 * var.se
    y = (f[:, 0] - f[:, 0].mean()) * (f[:, 2] - f[:, 2].mean())
    c = mean_estimate(y)
    assert abs(c.value - 2 * u * table3.value([2, 1, 0])) < 4 * c.se


def test_trajectory_count_is_poisson_with_capacity_rate(table3):
    s = InterlacementSampler(box_window(3), table3)
    _, counts = s.functionals([0.3, 1.0], None, 20_000, 5, workers=1)
    for j, u in enumerate([0.3, 1.0]):
        e = mean_estimate(counts[:, j].astype(float))
        assert abs(e.value - u * s.capacity) < 4 * e.se
    # levels are coupled: counts are monotone in u
    assert np.all(counts[:, 0] <= counts[:, 1])


def test_levels_monotone_fields(table3):
    s = InterlacementSampler(box_window(3), table3)
    _, _, f = s.run_block(np.random.default_rng(3), 200, [0.2, 0.5, 1.0], store_fields=True)
    assert np.all(np.diff(f, axis=1) >= 0)


def test_functionals_independent_of_workers(table3):
    s = InterlacementSampler(box_window(3), table3)
    w = np.ones((1, 27))
    a = s.functionals([0.5], w, 5000, 9, workers=1)
    b = s.functionals([0.5], w, 5000, 9, workers=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_truncated_mode_bias_bound(table3):
    K = box_window(3)
    exact = InterlacementSampler(K, table3)
    trunc = InterlacementSampler(K, table3, escape_radius=6.0, mode="truncated", eq=exact.eq)
    assert exact.truncation_bias_bound(1.0) == 0.0
    b = trunc.truncation_bias_bound(1.0)
    assert b > 0
    f = trunc.fields(1.0, 20_000, 2)
    e = mean_estimate(f.mean(axis=1))
    # truncated mean lies in [u - bound, u]
    assert 1.0 - b - 4 * e.se <= e.value <= 1.0 + 4 * e.se


def test_invalid_arguments(table3):
    with pytest.raises(ValueError):
        InterlacementSampler(box_window(3), table3, mode="fast")
    s = InterlacementSampler(box_window(3), table3)
    with pytest.raises(ValueError):
        s.run_block(0, 2, [1.0, 0.5])
    with pytest.raises(ValueError):
        s.run_block(0, 2, [1.0], weights=np.ones((1, 5)))
    with pytest.raises(ValueError):
        sample_occupation_field(box_window(3), -1.0, table3, 0)


def test_lattice_weights_support_check():
    V = TestFunction("bump", (0, 0, 0), 1.0, 0.1)
    with pytest.raises(ValueError):
        lattice_weights(V, box_window(3), 4)
    K = support_window(V, 4)
    assert np.allclose(lattice_weights(V, K, 4), V(K / 4))
    assert np.allclose(lattice_weights(discretize(V, 4), K, 4), V(K / 4))


def test_rescaled_measure(table3):
    V = TestFunction("bump", (0, 0, 0), 1.0, 0.1)
    K = support_window(V, 2)
    field = sample_occupation_field(K, 0.75, table3, 1)
    m = build_rescaled_measure(field, 2, "constant", 0.75)
    assert m.total_mass == pytest.approx(field.times.sum() / 12)
    assert pair_measure(m, V) == pytest.approx(field.times @ V(K / 2) / 12)
    h = build_rescaled_measure(field, 2, "high", 0.75)
    assert np.allclose(h.masses, high_intensity_scale(2, 3, 0.75) * (field.times - 0.75) / 12)
    with pytest.raises(ValueError):
        build_rescaled_measure(field, 2, "high", 1.0)
    with pytest.raises(ValueError):
        rescaled_masses(field.times, 2, 3, "medium", 0.75)
    assert set(field.as_dict()) <= {tuple(s) for s in K.tolist()}


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 64), st.floats(0.01, 100.0))
def test_high_intensity_scale_normalizes_gaussian_part(N, u):
    # a_N^2 = (2/d) N^{d-2} u_N is the inverse square of the scale
    c = high_intensity_scale(N, 3, u)
    assert c * c * (2 / 3) * N * u == pytest.approx(1.0)
