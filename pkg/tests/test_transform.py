import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ppconsensus.errors import FunnelViolation
from ppconsensus.performance import PerformanceFunction
from ppconsensus.transform import epsilon, epsilon_inv, jacobian, transform_edges

PY = PerformanceFunction(5.0, 0.1, 1.5)
inside = st.floats(-0.999999, 0.999999)


def test_epsilon_examples():
    assert epsilon(0.0) == 0.0
    assert epsilon(0.5) == pytest.approx(1.0986123, abs=1e-7)
    assert epsilon(0.5) == pytest.approx(math.log(3), rel=1e-15)
    assert epsilon(-0.5) == -epsilon(0.5)


def test_epsilon_matches_log_form_mpmath():
    mpmath.mp.dps = 50
    for s in np.linspace(-0.99, 0.99, 199):
        m = mpmath.mpf(float(s))
        expected = float(mpmath.log((1 + m) / (1 - m)))
        assert epsilon(float(s)) == pytest.approx(expected, rel=1e-14, abs=1e-16)


@pytest.mark.parametrize("s", [1.0, -1.0, 1.2, math.nan])
def test_epsilon_outside_raises(s):
    with pytest.raises(FunnelViolation) as info:
        epsilon(s)
    if not math.isnan(s):
        assert info.value.magnitude == abs(s)


def test_epsilon_inv_examples():
    assert epsilon_inv(0.0) == 0.0
    assert epsilon_inv(math.log(3)) == pytest.approx(0.5, abs=1e-15)
    assert epsilon_inv(-math.log(3)) == pytest.approx(-0.5, abs=1e-15)


def test_epsilon_inv_no_overflow():
    assert epsilon_inv(1e4) == 1.0
    assert epsilon_inv(-1e4) == -1.0


def test_jacobian_examples():
    assert jacobian(0.0) == 2.0
    assert jacobian(0.5) == pytest.approx(2.6666667, abs=1e-7)
    with pytest.raises(FunnelViolation):
        jacobian(1.0)


def test_jacobian_finite_difference():
    h = 1e-5
    for s in np.round(np.arange(-0.9, 0.9001, 0.01), 10):
        fd = (epsilon(s + h) - epsilon(s - h)) / (2 * h)
        assert abs(jacobian(s) - fd) <= 1e-6


@given(inside, inside)
def test_monotone(a, b):
    if a < b:
        assert epsilon(a) < epsilon(b)


@given(st.floats(-(1 - 1e-6), 1 - 1e-6))
def test_round_trip(s):
    assert abs(epsilon_inv(epsilon(s)) - s) <= 1e-12


@given(st.floats(-10, 10))
def test_inverse_round_trip(e):
    assert abs(epsilon(epsilon_inv(e)) - e) <= 1e-12


@given(st.floats(-30, 30))
def test_inverse_round_trip_within_conditioning(e):
    # one ulp of s_hat near +-1 moves epsilon by about ulp * J(s_hat)
    s = epsilon_inv(e)
    bound = 1e-12 + 2 * np.spacing(abs(s)) * jacobian(s)
    assert abs(epsilon(s) - e) <= bound


def test_sector_property_grid():
    for t in (0.0, 0.7, 3.0):
        r = PY.rho0 if t == 0 else (PY.rho0 - PY.rho_inf) * math.exp(-PY.decay * t) + PY.rho_inf
        for s_hat in np.linspace(-0.99, 0.99, 1001):
            s = s_hat * r
            prod = s * jacobian(s_hat) * epsilon(s_hat)
            if s_hat == 0:
                assert prod == 0
            else:
                assert prod > 0
            assert s_hat * epsilon(s_hat) >= s_hat * s_hat
            assert abs(epsilon(s_hat)) >= 2 * abs(s_hat)


def test_transform_edges_zero():
    b = transform_edges(np.zeros(3), [PY] * 3, 0.5)
    np.testing.assert_array_equal(b.eps, 0)
    np.testing.assert_array_equal(b.jac, 2)


def test_transform_edges_single():
    b = transform_edges(np.array([2.5]), [PY], 0.0)
    assert b.s_hat[0] == 0.5
    assert b.eps[0] == pytest.approx(math.log(3), rel=1e-15)
    assert b.jac[0] == pytest.approx(8 / 3, rel=1e-15)


def test_transform_edges_empty():
    b = transform_edges(np.zeros(0), [], 1.0)
    assert len(b) == 0 and len(b.eps) == 0 and len(b.jac) == 0


def test_transform_edges_violation_names_edge():
    with pytest.raises(FunnelViolation) as info:
        transform_edges(np.array([0.0, 5.5]), [PY, PY], 0.0, pairs=[(1, 2), (2, 3)], channel="position")
    exc = info.value
    assert exc.index == 1
    assert exc.pair == (2, 3)
    assert exc.channel == "position"
    assert "2-3" in str(exc)


def test_transform_edges_guard_clamps():
    b = transform_edges(np.array([5.0, -6.0, 1.0]), [PY] * 3, 0.0, guard=1e-9)
    assert b.clamped == (0, 1)
    assert b.s_hat[0] == 1 - 1e-9 and b.s_hat[1] == -(1 - 1e-9)
    assert np.all(np.isfinite(b.eps))
