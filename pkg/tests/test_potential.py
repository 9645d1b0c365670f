from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interlacements.potential import (DomainError, build_green_table, capacity_ball_continuum,
                                      continuum_constant, equilibrium_measure_lattice, green_continuum,
                                      green_lattice, green_lattice_fourier, green_operator_norm,
                                      green_rescaled, harmonicity_residual, hitting_kernel,
                                      solve_resolvent_lattice)
from interlacements.testfunctions import LatticeFunction, TestFunction, discretize

# closed form of the simple-random-walk Green function at the origin in d = 3
WATSON = (math.sqrt(6) / (32 * math.pi ** 3) * math.gamma(1 / 24) * math.gamma(5 / 24)
          * math.gamma(7 / 24) * math.gamma(11 / 24))


def test_g0_matches_closed_form(table3):
    assert abs(table3.g0 - WATSON) < 1e-9


def test_g0_fourier_oracle_independent_of_quadrature():
    assert abs(green_lattice_fourier(np.zeros(3, dtype=int), 3, order=64) - WATSON) < 1e-7


@pytest.mark.parametrize("x", [(1, 0, 0), (1, 1, 0), (2, 1, 1), (3, 0, 2)])
def test_table_matches_fourier_oracle(table3, x):
    assert abs(table3.value(x) - green_lattice_fourier(np.array(x), 3, order=64)) < 1e-7


def test_harmonicity(table3):
    assert harmonicity_residual(table3, 8) < 1e-8


def test_far_field_asymptotics(table3_wide):
    x = np.array([50, 0, 0])
    assert table3_wide.value(x) / (3 * green_continuum(x.astype(float))) == pytest.approx(1.0, abs=2e-3)


def test_tail_lookup_outside_range_uses_asymptotics(table3):
    x = np.array([40, 0, 0])
    assert table3.value(x) == pytest.approx(3 * green_continuum(x.astype(float)))


def test_continuum_constants():
    assert continuum_constant(3) == pytest.approx(1 / (2 * math.pi))
    assert capacity_ball_continuum(1.0, 3) == pytest.approx(2 * math.pi)
    assert capacity_ball_continuum(2.0, 5) == pytest.approx(8 / continuum_constant(5))
    with pytest.raises(ValueError):
        continuum_constant(2)


def test_recurrent_dimension_rejected():
    with pytest.raises(ValueError):
        build_green_table(2, 4)


def test_noninteger_offsets_rejected(table3):
    with pytest.raises(ValueError):
        table3(np.array([0.5, 0.0, 0.0]))


def test_singleton_capacity(table3):
    eq = equilibrium_measure_lattice(np.zeros((1, 3), dtype=int), table3)
    assert eq.capacity == pytest.approx(1 / WATSON, rel=1e-12)
    assert eq.capacity == pytest.approx(0.659463, abs=1e-6)


def test_equilibrium_measure_of_box(table3):
    K = np.array([[a, b, c] for a in range(3) for b in range(3) for c in range(3)])
    eq = equilibrium_measure_lattice(K, table3)
    # potential of e_K equals 1 on K and the interior carries no mass
    assert np.allclose(table3.matrix(K) @ eq.weights, 1.0, atol=1e-9)
    centre = np.all(K == 1, axis=1)
    assert eq.weights[centre][0] == pytest.approx(0.0, abs=1e-9)
    # monotone in K
    assert eq.capacity > 1 / WATSON


def test_repeated_sites_rejected(table3):
    with pytest.raises(ValueError):
        equilibrium_measure_lattice(np.zeros((2, 3), dtype=int), table3)


def test_hitting_kernel_singleton(table3):
    eq = equilibrium_measure_lattice(np.zeros((1, 3), dtype=int), table3)
    x = np.array([2, 1, 0])
    h = hitting_kernel(x, eq, table3)
    assert h[0] == pytest.approx(table3.value(x) / table3.g0)


def test_hitting_kernel_is_subprobability(table3):
    K = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    eq = equilibrium_measure_lattice(K, table3)
    h = hitting_kernel([4, -3, 2], eq, table3)
    assert np.all(h >= 0) and h.sum() < 1


def test_rescaled_green(table3):
    assert green_rescaled([0.25, 0, 0], [0, 0, 0], 4, table3) == pytest.approx(4 * table3.value([1, 0, 0]) / 3)
    with pytest.raises(ValueError):
        green_rescaled([0.1, 0, 0], [0, 0, 0], 4, table3)


def test_resolvent_domain_error(table3):
    V = discretize(TestFunction("bump", (0.0, 0.0, 0.0), 1.0, 50.0), 2)
    assert green_operator_norm(V, table3) > 1
    with pytest.raises(DomainError):
        solve_resolvent_lattice(V, table3)


def test_resolvent_equals_neumann_series(table3):
    V = discretize(TestFunction("bump", (0.0, 0.0, 0.0), 1.0, 0.1), 2)
    sol = solve_resolvent_lattice(V, table3)
    M = table3.matrix(V.sites) * V.values[None, :] / (3 * 4)
    h, term = np.ones(len(V)), np.ones(len(V))
    for _ in range(60):
        term = M @ term
        h = h + term
    assert np.allclose(sol.values, h, atol=1e-12)
    # the extension agrees with the solution on the support
    assert np.allclose(sol.extend(V.sites), sol.values, atol=1e-12)


def test_empty_potential(table3):
    V = LatticeFunction(np.zeros((0, 3), dtype=np.int64), np.zeros(0), 1)
    assert green_operator_norm(V, table3) == 0.0


offsets = st.lists(st.integers(-20, 20), min_size=3, max_size=3)


@settings(max_examples=60, deadline=None)
@given(offsets, st.permutations([0, 1, 2]), st.lists(st.sampled_from([-1, 1]), min_size=3, max_size=3))
def test_symmetry_under_hyperoctahedral_group(table3, x, perm, signs):
    x = np.array(x)
    y = np.array(signs) * x[list(perm)]
    assert table3.value(x) == table3.value(y)


@settings(max_examples=60, deadline=None)
@given(offsets)
def test_positive_and_maximal_at_origin(table3, x):
    g = table3.value(np.array(x))
    assert 0 < g <= table3.g0


@settings(max_examples=10, deadline=None)
@given(offsets)
def test_table_matches_direct_quadrature(table3, x):
    assert table3.value(np.array(x)) == pytest.approx(green_lattice(np.array(x), 3), abs=1e-9)
