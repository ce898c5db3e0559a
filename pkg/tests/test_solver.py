from __future__ import annotations

import math

import numpy as np
import pytest

from fokker.action import action_gradient
from fokker.minkowski import SingularCrossingError, SystemParams, random_poincare
from fokker.solver import (
    BoundaryConditions,
    coulomb_energy,
    coulomb_limit_oracle,
    compare_with_coulomb,
    euler_lagrange_residual,
    extremize_action,
    integrate_coulomb,
)


def test_free_extremal_is_straight():
    bc = BoundaryConditions([0.0, 0.0], [4.0, 1.0], [0.0, 3.0], [4.0, 2.0], 3.0, 5.0, 12, 9)
    p = SystemParams(1.0, 2.0, 0.0, 0.0)
    rep = extremize_action(bc, p)
    straight = bc.straight_lines()
    for a, b in zip(rep.lines, straight):
        assert np.allclose(a.vertices, b.vertices, atol=1e-12)
    # -(mc/2)(tau^2/S + S) per particle
    assert rep.action.free_1 == pytest.approx(-0.5 * (15.0 / 3.0 + 3.0))
    assert rep.action.free_2 == pytest.approx(-1.0 * (15.0 / 5.0 + 5.0))


def test_interacting_extremal_has_small_residual():
    bc = BoundaryConditions([0.0, 0.0], [5.0, 0.1], [0.0, 1.0], [5.0, 0.9], 5.0, 5.0, 60, 60)
    p = SystemParams(1.0, 1.0, 0.1, 0.1, eta=0.1)
    rep = extremize_action(bc, p, tol=1e-11)
    assert rep.converged
    assert euler_lagrange_residual(*rep.lines, p) <= 1e-11
    # endpoints untouched
    assert np.array_equal(rep.lines[0].vertices[0], bc.start1)
    assert np.array_equal(rep.lines[1].vertices[-1], bc.end2)


def test_extremal_is_poincare_covariant(rng):
    bc = BoundaryConditions([0.0, 0.0], [5.0, 0.1], [0.0, 1.0], [5.0, 0.9], 5.0, 5.0, 40, 40)
    p = SystemParams(1.0, 1.0, 0.1, 0.1, eta=0.1)
    rep = extremize_action(bc, p, tol=1e-12)
    L, shift = random_poincare(rng, 2, max_speed=0.5, max_shift=3.0)
    rep_t = extremize_action(bc.transformed(L, shift), p, tol=1e-12)
    for a, b in zip(rep.lines, rep_t.lines):
        assert np.allclose(a.transformed(L, shift).vertices, b.vertices, atol=1e-9)
    assert rep_t.action.total == pytest.approx(rep.action.total, abs=1e-10)


def test_gradient_vanishes_at_extremum_in_both_lines():
    bc = BoundaryConditions([0.0, 0.0], [4.0, 0.0], [0.0, 1.5], [4.0, 1.5], 4.0, 4.0, 30, 20)
    p = SystemParams(1.0, 3.0, 0.2, 0.2, eta=0.2)
    rep = extremize_action(bc, p)
    g1, g2 = action_gradient(*rep.lines, p)
    assert max(np.abs(g1).max(), np.abs(g2).max()) <= 1e-10


def test_rk4_circular_orbit():
    # oracle: circular relative orbit with omega^2 = k / (mu r^3), centre of mass at rest
    k, m1, m2, r = 0.5, 1.0, 2.0, 1.0
    mu = m1 * m2 / (m1 + m2)
    w = math.sqrt(k / (mu * r**3))
    r1, r2 = r * m2 / (m1 + m2), r * m1 / (m1 + m2)
    y0 = np.array([r1, 0.0, -r2, 0.0, 0.0, w * r1, 0.0, -w * r2])
    T = 2 * math.pi / w
    y = integrate_coulomb(y0, T, 4000, m1, m2, k)
    assert np.allclose(y, y0, atol=1e-9)
    assert coulomb_energy(y, m1, m2, k) == pytest.approx(coulomb_energy(y0, m1, m2, k), rel=1e-12)


def test_coulomb_shooting_recovers_circular_velocity():
    k, r = 0.02, 1.0
    w = math.sqrt(2.0 * k / r**3)  # equal unit masses, mu = 1/2
    T = 1.0
    a1, a2 = np.array([0.5, 0.0]), np.array([-0.5, 0.0])
    b1 = 0.5 * np.array([math.cos(w * T), math.sin(w * T)])
    bc = BoundaryConditions(np.r_[0.0, a1], np.r_[T, b1], np.r_[0.0, a2], np.r_[T, -b1], 1.0, 1.0, 4, 4)
    p = SystemParams(1.0, 1.0, math.sqrt(k), math.sqrt(k))
    o = coulomb_limit_oracle(bc, p)
    assert np.allclose(o.v1[0], [0.0, 0.5 * w], atol=1e-9)
    assert np.allclose(o.positions_at(0.5, 1)[0], 0.5 * np.array([math.cos(w / 2), math.sin(w / 2)]),
                       atol=1e-9)


def test_classical_limit_matches_coulomb():
    bc = BoundaryConditions([0.0, 0.0], [20.0, 0.1], [0.0, 1.0], [20.0, 0.9], 20.0, 20.0, 800, 800)
    p = SystemParams(1.0, 1.0, 0.02, 0.02, eta=0.05)
    rep = extremize_action(bc, p)
    oracle = coulomb_limit_oracle(bc, p)
    assert compare_with_coulomb(rep, oracle, 1.0) <= 1e-3


def test_near_collision_raises():
    bc = BoundaryConditions([0.0, 0.0], [2.0, 0.0], [0.0, 0.0], [2.0, 0.0], 2.0, 2.0, 4, 4)
    with pytest.raises(SingularCrossingError):
        extremize_action(bc, SystemParams(1.0, 1.0, 0.1, 0.1, r_min=1e-3))


def test_boundary_validation():
    with pytest.raises(ValueError):
        BoundaryConditions([0.0, 0.0], [1.0, 2.0], [0.0, 1.0], [2.0, 1.0], 1.0, 1.0, 2, 2)
    with pytest.raises(ValueError):
        BoundaryConditions([0.0, 0.0], [2.0, 0.0], [0.0, 1.0], [2.0, 1.0], 1.0, 1.0, 0, 2)
