from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fokker.minkowski import (
    NonTimelikeSegmentError,
    SingularCrossingError,
    SystemParams,
    WorldLine,
    boost_matrix,
    interval_squared,
    lightcone_crossings,
    lower,
    metric,
    minkowski_dot,
    proper_length,
    random_poincare,
    rotation_matrix,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_metric_signature():
    assert metric(4).tolist() == [1.0, -1.0, -1.0, -1.0]
    assert minkowski_dot([2.0, 1.0], [3.0, 4.0]) == pytest.approx(2.0)


def test_lower_is_involution():
    v = np.array([[1.0, 2.0, -3.0, 0.5]])
    assert np.array_equal(lower(lower(v)), v)
    assert minkowski_dot(v, v) == pytest.approx(float(v[0] @ lower(v)[0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=2, max_size=2), st.lists(finite, min_size=2, max_size=2),
       st.floats(-0.95, 0.95))
def test_interval_invariant_under_boosts(x, y, v):
    L = boost_matrix([v])
    s2 = interval_squared(x, y)
    s2b = interval_squared(L @ np.asarray(x), L @ np.asarray(y))
    assert s2b == pytest.approx(s2, abs=1e-9 * (1 + abs(s2)) / (1 - v * v))


def test_collinear_boosts_add_rapidities():
    # oracle: rapidities add, so v = tanh(atanh 0.5 + atanh 0.6)
    L = boost_matrix([0.5]) @ boost_matrix([0.6])
    assert np.allclose(L, boost_matrix([math.tanh(math.atanh(0.5) + math.atanh(0.6))]), atol=1e-14)


def test_boost_rejects_superluminal():
    with pytest.raises(ValueError):
        boost_matrix([1.0])


def test_random_poincare_preserves_metric(rng):
    for d in (2, 4):
        g = np.diag(metric(d))
        for _ in range(20):
            L, shift = random_poincare(rng, d)
            assert np.allclose(L.T @ g @ L, g, atol=1e-12)
            assert L[0, 0] >= 1.0


def test_rotation_matrix_embeds_spatial_block():
    R = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    L = rotation_matrix(R)
    assert L[0, 0] == 1.0 and np.array_equal(L[1:, 1:], R)


def test_system_params_derived_constants():
    p = SystemParams(1.0, 2.0, 0.1, -0.2, c=2.0, hbar=0.3, D=0.5)
    assert p.sigma == pytest.approx(0.25)
    assert p.hbar_tilde == pytest.approx(0.075)
    assert p.coupling == pytest.approx(-0.02)
    assert p.replace(D=1.0).sigma == pytest.approx(0.5)


@pytest.mark.parametrize("kwargs", [{"m1": 0.0}, {"c": -1.0}, {"eta": float("nan")}, {"dimension": 3}])
def test_system_params_validation(kwargs):
    base = dict(m1=1.0, m2=1.0, e1=0.0, e2=0.0)
    base.update(kwargs)
    with pytest.raises(ValueError):
        SystemParams(**base)


def test_inconsistent_sigma_rejected():
    with pytest.raises(ValueError):
        SystemParams(1.0, 1.0, 0.0, 0.0, D=1.0, c=1.0, sigma=2.0)


def test_straight_line_and_proper_length():
    line = WorldLine.straight([0.0, 0.0], [5.0, 3.0], 10)
    assert line.n_segments == 10
    assert proper_length(line) == pytest.approx(4.0)
    assert line.total_parameter == pytest.approx(4.0)


def test_non_timelike_segment_rejected():
    with pytest.raises(NonTimelikeSegmentError):
        WorldLine.straight([0.0, 0.0], [1.0, 2.0], 4)


def test_lightcone_crossings_static_partner():
    # partner at rest at distance r: crossings at t = t_P - r and t_P + r
    line = WorldLine.straight([-5.0, 2.0], [5.0, 2.0], 7)
    cr = lightcone_crossings([0.3, 0.5], line)
    times = sorted(c.point[0] for c in cr)
    assert times == pytest.approx([0.3 - 1.5, 0.3 + 1.5], abs=1e-12)
    assert all(c.r == pytest.approx(1.5) for c in cr)


def test_lightcone_crossing_inside_cutoff_raises():
    line = WorldLine.straight([-5.0, 0.0], [5.0, 0.0], 5)
    with pytest.raises(SingularCrossingError):
        lightcone_crossings([0.0, 1e-9], line, r_min=1e-6)
