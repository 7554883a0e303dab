import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ecpsim.errors import ConfigurationError
from ecpsim.friction import (
    FrictionParams,
    dissipation,
    ellipsoid_slack,
    friction_equalities,
    slip_velocities,
)
from ecpsim.math_core import frame_from_normal, wrench_basis

FP = FrictionParams(0.22, 1.0, 1.0, 0.1)
GROUND = frame_from_normal([0, 0, 1.0])


def basis(a1=(0.0, 0.0, 0.0), q=(0.0, 0.0, 0.1)):
    return wrench_basis(GROUND, np.array(a1), np.array(q))


def max_dissipation_impulse(p_n, slip, fp):
    """Closed-form maximizer of dissipated power on the friction ellipsoid."""
    # Lagrange conditions give sigma = |e o slip| and p = -mu p_n e^2 slip / sigma
    e2 = fp.e2
    sigma = np.sqrt(np.sum(e2 * slip * slip))
    return -fp.mu * p_n * e2 * slip / sigma, sigma


def test_defaults():
    fp = FrictionParams()
    assert (fp.mu, fp.e_t, fp.e_o, fp.e_r) == (0.22, 1.0, 1.0, 0.1)


def test_validation():
    with pytest.raises(ConfigurationError):
        FrictionParams(mu=-0.1)
    with pytest.raises(ConfigurationError):
        FrictionParams(e_r=0.0)


def test_sticking_residual_vanishes():
    res = friction_equalities((1.0, 0.05, -0.02, 0.001), 0.0, np.zeros(6), basis(), FP)
    np.testing.assert_array_equal(res, 0)


def test_sliding_impulse_opposes_slip():
    p_n, s, sigma = 0.5, 0.3, 2.0
    nu = np.array([s, 0, 0, 0, 0, 0])
    p_t = -FP.e_t**2 * FP.mu * p_n * s / sigma
    res = friction_equalities((p_n, p_t, 0.0, 0.0), sigma, nu, basis(), FP)
    np.testing.assert_allclose(res, 0, atol=1e-15)
    assert p_t < 0


def test_planar_slide_on_friction_circle():
    # oracle: 1-D Coulomb slide rotated into the plane; impulse anti-parallel
    # to the slip with magnitude mu p_n
    p_n = 0.098
    nu = np.array([0.3, -0.4, 0, 0, 0, 0])
    W = basis()
    slip = slip_velocities(W, nu)
    p, sigma = max_dissipation_impulse(p_n, slip, FP)
    res = friction_equalities((p_n, *p), sigma, nu, W, FP)
    np.testing.assert_allclose(res, 0, atol=1e-15)
    np.testing.assert_allclose(p[:2] / np.linalg.norm(p[:2]), -np.array([0.6, -0.8]), atol=1e-15)
    assert ellipsoid_slack((p_n, *p), FP) == pytest.approx(0, abs=1e-15)
    assert dissipation((p_n, *p), W, nu) < 0


def test_slack_values():
    assert ellipsoid_slack((2.0, 0, 0, 0), FP) == pytest.approx((0.22 * 2.0) ** 2)
    assert ellipsoid_slack((1.0, 0.1, 0.2, 0.01), FP) == pytest.approx(
        0.22**2 - 0.01 - 0.04 - 0.01
    )


@given(arrays(float, 3, elements=st.floats(-1, 1)), st.floats(0, 10))
def test_frictionless_slack_is_minus_scaled_norm(p, p_n):
    fp = FrictionParams(0.0)
    z = ellipsoid_slack((p_n, *p), fp)
    assert z <= 0
    assert z == pytest.approx(-np.sum((p / [fp.e_t, fp.e_o, fp.e_r]) ** 2))


@given(
    arrays(float, 6, elements=st.floats(-5, 5)),
    arrays(float, 3, elements=st.floats(-0.2, 0.2)),
    st.floats(0.01, 2.0),
)
def test_max_dissipation_never_adds_energy(nu, a1, p_n):
    W = basis(a1)
    slip = slip_velocities(W, nu)
    if np.abs(slip).max() < 1e-9:
        return
    p, sigma = max_dissipation_impulse(p_n, slip, FP)
    assert sigma > 0
    assert dissipation((p_n, *p), W, nu) <= 1e-10
    assert ellipsoid_slack((p_n, *p), FP) >= -1e-9 * p_n**2
    np.testing.assert_allclose(friction_equalities((p_n, *p), sigma, nu, W, FP), 0, atol=1e-9)


def test_drilling_slip_uses_spin_about_normal():
    W = basis()
    s = slip_velocities(W, np.array([0, 0, 0, 0.3, -0.1, 2.0]))
    assert s[2] == 2.0
