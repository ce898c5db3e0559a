from __future__ import annotations

import math

import numpy as np
import pytest

from fokker.minkowski import SystemParams, metric
from fokker.propagator import constants, free_log_kernel, propagator_monte_carlo
from fokker.qpla import (
    DiscreteWaveFunctional,
    LatticeAxis,
    LatticeSpec,
    NodeCrossingError,
    accumulate_eigenvalue,
    apply_action_operator,
    apply_momentum_operator,
    default_interleaving,
    eigenvalue_increment,
    equivalence_check,
    first_order_interaction_mean,
    matched_deviation,
    nonlocality_scaling_check,
    partial_kernel_log,
    plane_wave_eigenvalue,
    plane_wave_functional,
)
from fokker.solver import BoundaryConditions

# <I_int> for the small_bc fixture (e1 = e2 = 0.0316, hbar = 0.05, D = 0.5), from
# an independent tensor Gauss-Hermite rule on the contour rotated by pi/10 with
# the residual Fresnel phase kept in the integrand. Values are (mean, relative
# accuracy of the oracle): at eta = 0.25 only the 30-node rule stays finite.
GH_ORACLE = {
    (0.5, "uniform"): (complex(0.0018281451587838914, 1.9013169208924994e-05), 1e-9),
    (0.5, "mixed"): (complex(0.0018245089407390959, 3.671284819732519e-05), 1e-9),
    (0.25, "uniform"): (complex(0.0029778254866901447, -6.6833653654564405e-06), 1e-6),
}

P1 = np.array([1.3, 0.2])
P2 = np.array([0.9, -0.1])


def interior(a):
    return a[(slice(1, -1),) * a.ndim]


@pytest.mark.parametrize("key", sorted(GH_ORACLE))
def test_closed_form_mean_matches_gauss_hermite_oracle(charged_params, small_bc, key):
    eta, mode = key
    p = charged_params.replace(eta=eta)
    mean = first_order_interaction_mean(small_bc, p, constants(p, mode))
    ref, tol = GH_ORACLE[key]
    assert abs(mean - ref) <= tol * abs(ref)


def test_closed_form_mean_matches_monte_carlo(charged_params, small_bc):
    consts = constants(charged_params)
    mean = first_order_interaction_mean(small_bc, charged_params, consts)
    first = propagator_monte_carlo(small_bc, charged_params, 65536, seed=9, order="first")
    free = propagator_monte_carlo(small_bc, charged_params, 65536, seed=9, order="free")
    # same draws: the ratio isolates <1 + iI/hbar>
    ratio = first.value / free.value
    assert abs(ratio - (1 + 1j * mean / consts.phase)) <= 3 * first.stderr / abs(free.value)


def test_mean_without_interior_vertices_is_plain_sum(charged_params):
    bc = BoundaryConditions([0.0, 0.0], [2.0, 0.1], [0.0, 1.0], [2.0, 1.05], 2.0, 2.0, 1, 1)
    s2 = (1.0 - 1.0) ** 2 - (0.05 - 1.025) ** 2
    expect = charged_params.coupling * math.exp(-0.5 * (s2 / 0.25) ** 2) / (0.25 * math.sqrt(2 * math.pi)) * (
        2.0 * 2.0 - 0.1 * 0.05)
    assert first_order_interaction_mean(bc, charged_params, constants(charged_params)) == pytest.approx(expect)


def plane_wave(bc, params, frac, mode="uniform"):
    axes = LatticeSpec(step_fraction=frac).axes(bc, params, mode)
    return plane_wave_functional(P1, P2, bc, params, axes, mode)


def test_momentum_operator_on_plane_wave(free_params, small_bc):
    g = metric(2)
    psi = plane_wave(small_bc, free_params, 1e-4)
    for particle, p_bar in ((1, P1), (2, P2)):
        for vertex in (1, 2):
            for mu in range(2):
                out = apply_momentum_operator(psi, particle, vertex, mu, free_params)
                ratio = interior(out.values) / interior(psi.values)
                assert np.max(np.abs(ratio - g[mu] * p_bar[mu])) <= 1e-6


def test_momentum_operator_second_order(free_params, small_bc):
    errs = []
    for frac in (0.02, 0.01):
        psi = plane_wave(small_bc, free_params, frac)
        out = apply_momentum_operator(psi, 1, 1, 0, free_params)
        errs.append(np.max(np.abs(interior(out.values) / interior(psi.values) - P1[0])))
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)


def test_momentum_of_constant_vanishes(free_params, small_bc):
    axes = LatticeSpec().axes(small_bc, free_params)
    psi = DiscreteWaveFunctional.from_function(lambda X1, X2: np.ones(X1.shape[0]), axes, small_bc)
    out = apply_momentum_operator(psi, 2, 1, 1, free_params, "mixed")
    assert np.all(out.values == 0)


def test_momentum_operators_commute(free_params, small_bc, rng):
    axes = LatticeSpec().axes(small_bc, free_params)
    shape = tuple(a.count for a in axes)
    psi = DiscreteWaveFunctional(axes, rng.normal(size=shape) + 1j * rng.normal(size=shape),
                                 {"start1": small_bc.start1, "end1": small_bc.end1,
                                  "start2": small_bc.start2, "end2": small_bc.end2},
                                 (small_bc.eps1, small_bc.eps2), (2, 2))
    ab = apply_momentum_operator(apply_momentum_operator(psi, 1, 1, 0, free_params), 2, 2, 1, free_params)
    ba = apply_momentum_operator(apply_momentum_operator(psi, 2, 2, 1, free_params), 1, 1, 0, free_params)
    assert np.allclose(ab.values, ba.values, rtol=1e-12, atol=1e-12 * np.max(np.abs(ab.values)))


def test_momentum_requires_lattice_axis(free_params, small_bc):
    axes = LatticeSpec(endpoint_axes=False).axes(small_bc, free_params)
    psi = DiscreteWaveFunctional.from_function(lambda X1, X2: np.ones(X1.shape[0]), axes, small_bc)
    with pytest.raises(ValueError):
        apply_momentum_operator(psi, 1, 2, 0, free_params)
    with pytest.raises(ValueError):
        LatticeAxis(1, 1, 0, 0.0, 0.1, 2)


@pytest.mark.parametrize("mode", ["uniform", "mixed"])
def test_plane_wave_is_free_eigenfunctional(free_params, small_bc, mode):
    psi = plane_wave(small_bc, free_params, 1e-4, mode)
    ratio = interior(apply_action_operator(psi, small_bc, free_params, mode) / psi.values)
    # the eigenvalue depends on the final vertices, so compare node by node
    inner = (slice(1, -1),) * psi.values.ndim
    end1 = psi.vertex_arrays(1)[..., -1, :][inner]
    end2 = psi.vertex_arrays(2)[..., -1, :][inner]
    expect = np.empty(ratio.shape)
    for idx in np.ndindex(ratio.shape):
        expect[idx] = (plane_wave_eigenvalue(P1, small_bc.start1, end1[idx], 2.0, 1.0, 1.0)
                       + plane_wave_eigenvalue(P2, small_bc.start2, end2[idx], 2.0, 1.0, 1.0))
    assert np.max(np.abs(ratio - expect)) <= 1e-6 * np.max(np.abs(expect))


def test_single_slab_kernel_identity(free_params):
    # I K / K = -(mc/2)(dx^2/S + S) - (hbar/i) d/2 for one segment per particle
    bc = BoundaryConditions([0.0, 0.0], [2.0, 0.1], [0.0, 1.0], [2.0, 1.05], 2.0, 2.0, 1, 1)
    hb = free_params.hbar_tilde
    axes = LatticeSpec(endpoint_nodes=5, step_fraction=1e-5).axes(bc, free_params)

    def kernel(X1, X2):
        out = np.ones(X1.shape[0], dtype=complex)
        for X, x0 in ((X1, bc.start1), (X2, bc.start2)):
            out *= np.exp([free_log_kernel(x - x0, 2.0, 1.0, 1.0, hb) for x in X[:, -1, :]])
        return out

    psi = DiscreteWaveFunctional.from_function(kernel, axes, bc)
    ratio = interior(apply_action_operator(psi, bc, free_params) / psi.values)
    expect = 0.0
    for dx in (bc.end1 - bc.start1, bc.end2 - bc.start2):
        expect += -0.5 * ((dx[0] ** 2 - dx[1] ** 2) / 2.0 + 2.0) - hb / 1j
    centre = ratio[(1,) * ratio.ndim]
    assert centre == pytest.approx(expect, rel=1e-6)


def test_eigenvalue_increment_examples():
    hb = 0.1
    inc, br = eigenvalue_increment(np.exp(3j), 1.0, hb)
    assert inc == pytest.approx(3 * hb) and br == 0
    inc, br = eigenvalue_increment(np.exp(-3j), np.exp(3j), hb)
    assert inc == pytest.approx((2 * math.pi - 6) * hb) and br == -1
    inc, _ = eigenvalue_increment(2.0, 1.0, hb)
    assert inc == pytest.approx(-1j * hb * math.log(2.0))
    with pytest.raises(NodeCrossingError):
        eigenvalue_increment(0.0, 1.0, hb)


def test_default_interleaving():
    assert default_interleaving(2, 2) == [1, 2, 1, 2]
    assert default_interleaving(3, 1) == [1, 2, 1, 1]


@pytest.mark.parametrize("mode", ["uniform", "mixed"])
def test_slab_reordering_invariance(charged_params, mode):
    bc = BoundaryConditions([0.0, 0.0], [2.0, 0.1], [0.0, 1.0], [2.0, 1.05], 2.0, 2.0, 3, 2)
    hb = constants(charged_params, mode).log
    vals = []
    for order in ([1, 2, 1, 2, 1], [1, 1, 1, 2, 2], [2, 2, 1, 1, 1], [2, 1, 1, 2, 1]):
        eig = accumulate_eigenvalue(bc, charged_params, mode, interleaving=order)
        assert eig.check_ledger()
        vals.append(eig.value + 2 * math.pi * hb * eig.branch_offset)
    assert max(abs(v - vals[0]) for v in vals) <= 1e-8 * abs(vals[0])


def test_continued_eigenvalue_equals_final_log(charged_params, small_bc):
    for mode in ("uniform", "mixed"):
        hb = constants(charged_params, mode).log
        eig = accumulate_eigenvalue(small_bc, charged_params, mode)
        final = hb / 1j * partial_kernel_log(small_bc, charged_params, 2, 2, mode)
        assert eig.value + 2 * math.pi * hb * eig.branch_offset == pytest.approx(final, rel=1e-12)
        assert len(eig.slabs) == 4


def test_single_segment_lattice(free_params):
    bc = BoundaryConditions([0.0, 0.0], [2.0, 0.1], [0.0, 1.0], [2.0, 1.05], 2.0, 2.0, 1, 1)
    hb = free_params.hbar_tilde
    eig = accumulate_eigenvalue(bc, free_params, order="free")
    logk = free_log_kernel(bc.end1 - bc.start1, 2.0, 1.0, 1.0, hb) + free_log_kernel(
        bc.end2 - bc.start2, 2.0, 1.0, 1.0, hb)
    assert matched_deviation(eig.value, hb / 1j * logk, hb) <= 1e-12


def test_matched_deviation_removes_whole_turns():
    assert matched_deviation(1.0 + 2 * math.pi * 0.3 * 4, 1.0, 0.3) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("mode", ["uniform", "mixed"])
def test_free_equivalence(free_params, small_bc, mode):
    rep = equivalence_check(small_bc, free_params, order="free", mode=mode)
    assert rep.deviation <= 1e-6


def test_sigma_scaling_slope():
    rep = nonlocality_scaling_check(SystemParams(1.0, 1.0, 0.0, 0.0), np.logspace(-2, -0.5, 7))
    assert rep.ok
    assert rep.slope == pytest.approx(-1.0, abs=0.05)


def test_sigma_scaling_degenerate_input():
    flat = lambda t, x1, x2: np.exp(0.2j * x1) * (1.0 + 0 * t)
    rep = nonlocality_scaling_check(SystemParams(1.0, 1.0, 0.0, 0.0), np.logspace(-2, 0, 5),
                                    psi=lambda t, x1, x2: 1.0 + 0 * x1)
    assert not rep.ok and "degenerate" in rep.message
    assert nonlocality_scaling_check(SystemParams(1.0, 1.0, 0.0, 0.0), np.logspace(-2, 0, 5), psi=flat).ok
    with pytest.raises(ValueError):
        nonlocality_scaling_check(SystemParams(1.0, 1.0, 0.0, 0.0), [0.1, 0.5])
