from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interlacements import stats as S

samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=5, max_size=60)


def test_verdict_logic():
    v = S.check("e", "x", 1.0, 0.0, 0.2, 3.0, 0.5)
    assert v.tolerance == pytest.approx(1.1) and v.passed
    assert not S.check("e", "x", 1.2, 0.0, 0.2, 3.0, 0.5).passed
    d = v.to_dict()
    assert d["pass"] is True and d["deviation"] == 1.0


def test_bonferroni():
    assert S.bonferroni_multiplier(1) == pytest.approx(3.0)
    assert S.bonferroni_multiplier(250) > S.bonferroni_multiplier(10) > 3.0
    with pytest.raises(ValueError):
        S.bonferroni_multiplier(0)


def test_mean_se_is_classical():
    x = np.arange(10.0)
    e = S.mean_estimate(x)
    assert e.value == 4.5
    assert e.se == pytest.approx(np.std(x, ddof=1) / math.sqrt(10))
    with pytest.raises(ValueError):
        S.mean_estimate([1.0])


def test_k_statistics_unbiased_on_exponential():
    # Exp(1): variance 1, third cumulant 2
    rng = np.random.default_rng(0)
    x = rng.exponential(size=400_000)
    m, v, k3 = S.cumulant_estimates(x)
    assert abs(v.value - 1) < 4 * v.se
    assert abs(k3.value - 2) < 4 * k3.se


def test_jackknife_close_to_bootstrap():
    rng = np.random.default_rng(1)
    x = rng.gamma(2.0, size=3000)
    _, v, k3 = S.cumulant_estimates(x)
    b = S.bootstrap_se(x, lambda y: S.cumulant_estimates(y)[1].value, 200, rng)
    assert v.se == pytest.approx(b, rel=0.25)


def test_leave_one_out_arrays_match_direct_recomputation():
    rng = np.random.default_rng(2)
    x = rng.normal(size=12)
    m, k2, k3 = S.cumulant_loo(x)
    for i in (0, 5, 11):
        y = np.delete(x, i)
        assert m[i] == pytest.approx(y.mean())
        assert k2[i] == pytest.approx(y.var(ddof=1))
        n = len(y)
        c3 = np.mean((y - y.mean()) ** 3)
        assert k3[i] == pytest.approx(c3 * n * n / ((n - 1) * (n - 2)))


def test_empirical_mgf_domain_and_zero():
    x = np.linspace(-1, 1, 101)
    r = S.empirical_mgf(x, [0.0, 1.0])
    assert r.mgf_grid[0] == (0.0, 1.0, 0.0)
    with pytest.raises(S.MGFDomainError):
        S.empirical_mgf(x, [2.0], admissible=(-1.0, 1.0))
    with pytest.raises(S.MGFDomainError):
        S.empirical_mgf(x * 1e3, [1.0])


def test_two_sample_identity_detects_shift():
    rng = np.random.default_rng(3)
    a = rng.normal(size=20_000)
    same = S.two_sample_identity_test(a, rng.normal(size=20_000), [-0.5, 0.5])
    assert all(v.passed for v in same)
    assert "Bonferroni" in same[0].note
    diff = S.two_sample_identity_test(a, rng.normal(0.2, 1, size=20_000), [-0.5, 0.5])
    assert not all(v.passed for v in diff)
    with pytest.raises(ValueError):
        S.two_sample_identity_test(a, a, [0.1], moments_upto=4)


def test_gaussian_limit_test_mgf_nongating_by_default():
    rng = np.random.default_rng(4)
    out = S.gaussian_limit_test(rng.normal(0, 2, 50_000), 4.0, [0.3])
    assert all(v.passed for v in out)
    assert [v.gating for v in out] == [True, True, True, False]
    assert S.ks_normal_pvalue(rng.normal(0, 2, 5000), 4.0) > 1e-3


def test_refinement_allowance():
    assert S.refinement_allowance(1.3, 1.0) == pytest.approx(0.1)


@settings(max_examples=50, deadline=None)
@given(samples, st.randoms(use_true_random=False))
def test_estimates_invariant_under_permutation(x, rnd):
    y = list(x)
    rnd.shuffle(y)
    a, b = S.cumulant_estimates(x), S.cumulant_estimates(y)
    for ea, eb in zip(a, b):
        assert ea.value == eb.value and ea.se == eb.se


@settings(max_examples=50, deadline=None)
@given(samples, st.floats(-50, 50))
def test_shift_equivariance(x, c):
    m, v, _ = S.cumulant_estimates(x)
    m2, v2, _ = S.cumulant_estimates(np.asarray(x) + c)
    assert m2.value == pytest.approx(m.value + c, abs=1e-9 * (1 + abs(c) + np.max(np.abs(x))))
    assert v2.value == pytest.approx(v.value, rel=1e-6, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 5), st.floats(0, 5))
def test_verdict_monotone_in_tolerance(stat, se, k, allow):
    v = S.check("e", "x", stat, 0.0, se, k, allow)
    w = S.check("e", "x", stat, 0.0, se, k + 1, allow)
    assert (not v.passed) or w.passed
