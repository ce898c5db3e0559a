from __future__ import annotations

import math

import numpy as np
import pytest

from fokker.minkowski import boost_matrix
from fokker.propagator import (
    CostGuardError,
    QuadratureSpec,
    constants,
    free_log_kernel,
    free_propagator_analytic,
    measure_factor,
    propagator_monte_carlo,
    propagator_quadrature,
    richardson,
    rotated_sampler,
    _particles,
)
from fokker.solver import BoundaryConditions

# Single-particle free kernels for m = c = 1, hbar = 0.025, S = 2, computed with
# mpmath by composing slice kernels along rotated contours (30 digits, N = 1, 2, 3
# agree to all printed digits).
K_PARTICLE1 = complex(-0.665455679819648441885, 3.11276197330113030951)  # dx = (2, 0.1)
K_PARTICLE2 = complex(-0.430346619396233256866, 3.15387383251264677130)  # dx = (2, 0.05)


def bc_n(n):
    return BoundaryConditions([0.0, 0.0], [2.0, 0.1], [0.0, 1.0], [2.0, 1.05], 2.0, 2.0, n, n)


def test_analytic_kernel_matches_contour_oracle():
    assert free_propagator_analytic([2.0, 0.1], 2.0, 1.0, 1.0, 0.025) == pytest.approx(K_PARTICLE1, rel=1e-13)
    assert free_propagator_analytic([2.0, 0.05], 2.0, 1.0, 1.0, 0.025) == pytest.approx(K_PARTICLE2, rel=1e-13)


def test_log_kernel_consistent():
    lk = free_log_kernel([2.0, 0.1], 2.0, 1.0, 1.0, 0.025)
    assert np.exp(lk) == pytest.approx(K_PARTICLE1, rel=1e-12)


def test_kernel_is_lorentz_invariant():
    dx = np.array([2.0, 0.1])
    L = boost_matrix([0.6])
    assert free_propagator_analytic(L @ dx, 2.0, 1.0, 1.0, 0.1) == pytest.approx(
        free_propagator_analytic(dx, 2.0, 1.0, 1.0, 0.1), rel=1e-12)


def test_measure_factor_modes(free_params):
    assert measure_factor(3, 2, constants(free_params, "uniform")) == 1.0
    # mixed: (hbar/hbar_tilde)^{d(N-1)} with hbar/hbar_tilde = 1/sigma = 2
    assert measure_factor(3, 2, constants(free_params, "mixed")) == pytest.approx(2.0**4)
    with pytest.raises(ValueError):
        constants(free_params, "bogus")


def test_richardson_removes_quadratic_bias():
    f = lambda k: 3.0 + 0.5 * k - 2.0 * k * k
    assert richardson([f(0.1), f(0.15), f(0.225)], 1.5) == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_free_quadrature_matches_oracle(free_params, n):
    r = propagator_quadrature(bc_n(n), free_params)
    assert abs(r.value / (K_PARTICLE1 * K_PARTICLE2) - 1.0) <= 1e-6
    assert r.ladder_monotone


def test_free_monte_carlo_within_three_stderr(free_params):
    for n in (2, 3):
        r = propagator_monte_carlo(bc_n(n), free_params, 16384, seed=11, order="free")
        assert abs(r.value - K_PARTICLE1 * K_PARTICLE2) <= 3.0 * r.stderr


def _rms_stderr(bc, params, samples, order="free"):
    return math.sqrt(np.mean([propagator_monte_carlo(bc, params, samples, s, order=order).stderr ** 2
                              for s in range(8)]))


def test_monte_carlo_stderr_scales_as_inverse_root(free_params):
    e = [_rms_stderr(bc_n(3), free_params, 8192 * k) for k in (1, 2, 4)]
    assert e[1] / e[0] == pytest.approx(1 / math.sqrt(2), rel=0.2)
    assert e[2] / e[0] == pytest.approx(0.5, rel=0.2)


def test_monte_carlo_deterministic(charged_params, small_bc):
    a = propagator_monte_carlo(small_bc, charged_params, 4096, seed=5)
    b = propagator_monte_carlo(small_bc, charged_params, 4096, seed=5)
    c = propagator_monte_carlo(small_bc, charged_params, 4096, seed=6)
    assert a.value == b.value and a.stderr == b.stderr
    assert a.value != c.value


@pytest.mark.parametrize("mode", ["uniform", "mixed"])
def test_first_order_quadrature_agrees_with_monte_carlo(charged_params, small_bc, mode):
    q = propagator_quadrature(small_bc, charged_params, order="first", mode=mode)
    m = propagator_monte_carlo(small_bc, charged_params, 65536, seed=3, order="first", mode=mode)
    assert abs(q.value - m.value) <= 3.0 * m.stderr


def test_spatial_translation_invariance(charged_params, small_bc):
    shifted = small_bc.transformed(np.eye(2), [0.7, -1.3])
    a = propagator_quadrature(small_bc, charged_params, order="first")
    b = propagator_quadrature(shifted, charged_params, order="first")
    assert b.value == pytest.approx(a.value, rel=1e-9)


def test_particle_exchange_symmetry(charged_params, small_bc):
    swapped = BoundaryConditions(small_bc.start2, small_bc.end2, small_bc.start1, small_bc.end1,
                                 2.0, 2.0, 2, 2)
    a = propagator_quadrature(small_bc, charged_params, order="first")
    b = propagator_quadrature(swapped, charged_params, order="first")
    assert b.value == pytest.approx(a.value, rel=1e-9)


def test_zero_coupling_first_order_equals_free(free_params, small_bc):
    a = propagator_quadrature(small_bc, free_params, order="first")
    b = propagator_quadrature(small_bc, free_params, order="free")
    assert a.value == b.value


def test_cost_guards(charged_params):
    with pytest.raises(CostGuardError):
        propagator_quadrature(bc_n(4), charged_params)
    with pytest.raises(CostGuardError):
        propagator_monte_carlo(bc_n(9), charged_params, 1024, seed=0)


def test_rotation_angle_bounds(small_bc, free_params):
    part = _particles(small_bc, free_params)[0]
    with pytest.raises(ValueError):
        rotated_sampler(part, 20.0, math.pi / 4)
    with pytest.raises(ValueError):
        QuadratureSpec(damping=0.0)
