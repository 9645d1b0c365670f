from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interlacements.brownian_interlacements import (BrownianSampler, default_delta, sample_brownian_cloud,
                                                    sample_reentry_points, scaling_invariance_probe,
                                                    vacant_probe)
from interlacements.stats import mean_estimate
from interlacements.testfunctions import TestFunction

V0 = TestFunction("bump", (0.0, 0.0, 0.0), 1.0, 0.1)


def test_count_rate_is_alpha_capacity():
    s = BrownianSampler(1.0, [V0], delta=1e-3, escape_radius=1.5)
    _, counts = s.functionals([0.5], 4000, 1)
    e = mean_estimate(counts[:, 0].astype(float))
    assert s.capacity == pytest.approx(2 * math.pi)
    assert abs(e.value - 0.5 * 2 * math.pi) < 4 * e.se


def test_mean_occupation_is_alpha_integral():
    s = BrownianSampler(1.0, [V0], delta=1e-3, escape_radius=1.2)
    f, _ = s.functionals([0.5], 4000, 2)
    e = mean_estimate(f[:, 0, 0])
    # discretization bias at this step is far below the SE
    assert abs(e.value - 0.5 * V0.integral()) < 4 * e.se


def test_workers_do_not_change_results():
    s = BrownianSampler(1.0, [V0], delta=4e-3, escape_radius=1.2)
    a = s.functionals([0.5], 1200, 3, workers=1)
    b = s.functionals([0.5], 1200, 3, workers=3)
    assert np.array_equal(a[0], b[0])


def test_validation():
    with pytest.raises(ValueError):
        BrownianSampler(1.0, [TestFunction("bump", (0.5, 0, 0), 1.0, 0.1)])
    with pytest.raises(ValueError):
        BrownianSampler(1.0, [V0], escape_radius=0.5)
    with pytest.raises(ValueError):
        BrownianSampler(0.0, [V0])
    with pytest.raises(ValueError):
        vacant_probe(-1.0, 1.0, 10, 0)
    with pytest.raises(ValueError):
        sample_reentry_points([0.5, 0, 0], 1.0, 3, 0)
    assert default_delta(2.0) == pytest.approx(4e-4)


def test_vacant_probe_exact_value():
    p, se, exact = vacant_probe(0.5, 1.0, 200_000, 4)
    assert exact == pytest.approx(math.exp(-math.pi))
    assert abs(p - exact) < 4 * se


def test_reentry_points_on_sphere_facing_start():
    x = np.array([3.0, 0.0, 0.0])
    y = sample_reentry_points(x, 1.0, 20_000, 0)
    assert np.allclose(np.linalg.norm(y, axis=1), 1.0)
    # harmonic measure from x: E[y . x/|x|] = 1/|x| for the unit sphere in d = 3
    e = mean_estimate(y[:, 0])
    assert abs(e.value - 1 / 3) < 4 * e.se


def test_single_cloud():
    c = sample_brownian_cloud(0.5, 1.0, 7, [V0], delta=1e-3, cell_size=0.5, record_paths=2)
    assert c.trajectory_count >= 0 and c.functionals.shape == (1,)
    assert c.cells.shape == (64,)
    with pytest.raises(ValueError):
        sample_brownian_cloud(-0.5, 1.0, 7)


def test_scaling_probe_shapes_and_means():
    p = scaling_invariance_probe(0.5, 2.0, V0, 4e-3, 2000, 1, rho=1.0, escape_factor=1.2)
    assert p.side_a.shape == p.side_b.shape == (2000,)
    assert "lam^2" in p.convention
    for side in (p.side_a, p.side_b):
        e = mean_estimate(side)
        assert abs(e.value - 0.5 * V0.integral()) < 4 * e.se
    with pytest.raises(ValueError):
        scaling_invariance_probe(0.5, -1.0, V0, 4e-3, 10, 1)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.2, 4.0))
def test_vacancy_oracle_formula(alpha, r):
    _, _, exact = vacant_probe(alpha, r, 4, 0)
    assert exact == pytest.approx(math.exp(-alpha * 2 * math.pi * r))
