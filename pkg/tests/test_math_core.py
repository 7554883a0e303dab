import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ecpsim.errors import ConfigurationError, PreconditionError
from ecpsim.math_core import (
    RigidState,
    coriolis_wrench,
    frame_from_normal,
    integrate_pose,
    quat_from_axis_angle,
    quat_kinematic_map,
    quat_multiply,
    quat_to_rotation,
    rotation_increment,
    world_inertia,
    wrench_basis,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = arrays(float, 3, elements=finite)
vec6 = arrays(float, 6, elements=finite)


@st.composite
def unit_quats(draw):
    q = draw(arrays(float, 4, elements=st.floats(-1, 1)))
    n = np.linalg.norm(q)
    if n < 1e-3:
        q, n = np.array([1.0, 0, 0, 0]), 1.0
    return q / n


# -- kinematic map --------------------------------------------------------------


def test_kinematic_map_pure_translation():
    qdot = quat_kinematic_map([1.0, 0, 0, 0]) @ np.array([1.0, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(qdot, [1, 0, 0, 0, 0, 0, 0])


def test_kinematic_map_spin_about_z():
    w = 0.8
    qdot = quat_kinematic_map([1.0, 0, 0, 0]) @ np.array([0, 0, 0, 0, 0, w])
    np.testing.assert_allclose(qdot[3:], [0, 0, 0, w / 2], atol=0)


def test_kinematic_map_shape_and_blocks():
    q = quat_from_axis_angle([1, 2, 3], 0.7)
    G = quat_kinematic_map(q)
    assert G.shape == (7, 6)
    np.testing.assert_array_equal(G[:3, :3], np.eye(3))
    np.testing.assert_array_equal(G[:3, 3:], 0)
    np.testing.assert_array_equal(G[3:, :3], 0)


def test_kinematic_map_matches_half_omega_product():
    # independent oracle: 0.5 * [0, w] (x) q via the Hamilton product
    q = quat_from_axis_angle([0.3, -1, 0.2], 1.1)
    w = np.array([0.4, -0.7, 1.3])
    expected = 0.5 * quat_multiply(np.concatenate([[0.0], w]), q)
    got = quat_kinematic_map(q) @ np.concatenate([np.zeros(3), w])
    np.testing.assert_allclose(got[3:], expected, atol=1e-15)


def test_kinematic_map_rejects_non_unit():
    with pytest.raises(PreconditionError):
        quat_kinematic_map([1.0, 0.1, 0, 0])


@given(unit_quats(), vec6)
def test_quaternion_rate_orthogonal_to_quaternion(q, nu):
    qdot = quat_kinematic_map(q) @ nu
    assert abs(q @ qdot[3:]) <= 1e-12 * max(1.0, np.abs(nu).max())


def test_spatial_angular_velocity_convention():
    # a spatial omega rotates world-frame vectors: dR/dt = [w]x R
    q = quat_from_axis_angle([1, 1, 0], 0.5)
    w = np.array([0.0, 0.0, 1.0])
    eps = 1e-7
    qdot = quat_kinematic_map(q) @ np.concatenate([np.zeros(3), w])
    dq = eps * qdot[3:]
    dR = (quat_to_rotation(q + dq) - quat_to_rotation(q - dq)) / (2 * eps)
    np.testing.assert_allclose(dR, np.cross(w, quat_to_rotation(q).T).T, atol=1e-7)


def test_integrate_pose_renormalizes_and_reports_drift():
    q = quat_from_axis_angle([0, 0, 1], 0.2)
    nu = np.array([1.0, 0, 0, 0, 0, 3.0])
    pos, quat, drift = integrate_pose(np.zeros(3), q, nu, 0.01)
    np.testing.assert_allclose(pos, [0.01, 0, 0])
    assert abs(np.linalg.norm(quat) - 1) <= 1e-15
    assert drift == pytest.approx(np.sqrt(1 + (0.015) ** 2) - 1, rel=1e-9)


def test_rotation_increment_matches_normalized_euler_step():
    q = quat_from_axis_angle([1, -2, 0.5], 0.9)
    w = np.array([2.0, -1.0, 4.0])
    _, q1, _ = integrate_pose(np.zeros(3), q, np.concatenate([np.zeros(3), w]), 0.05)
    np.testing.assert_allclose(
        quat_to_rotation(q1), rotation_increment(w, 0.05) @ quat_to_rotation(q), atol=1e-14
    )


# -- inertia ----------------------------------------------------------------------


def test_world_inertia_identity_orientation():
    M = world_inertia([1.0, 0, 0, 0], 2.0, np.diag([1.0, 2.0, 3.0]))
    expected = np.zeros((6, 6))
    expected[:3, :3] = 2 * np.eye(3)
    expected[3:, 3:] = np.diag([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(M, expected)


def test_world_inertia_quarter_turn_swaps_axes():
    M = world_inertia(quat_from_axis_angle([0, 0, 1], np.pi / 2), 1.0, np.diag([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(M[3:, 3:], np.diag([2.0, 1.0, 3.0]), atol=1e-15)


def test_world_inertia_rejects_bad_inputs():
    with pytest.raises(ConfigurationError):
        world_inertia([1.0, 0, 0, 0], 1.0, np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ConfigurationError):
        world_inertia([1.0, 0, 0, 0], 0.0, np.eye(3))
    with pytest.raises(ConfigurationError):
        world_inertia([1.0, 0, 0, 0], 1.0, [[1, 0.5, 0], [0, 1, 0], [0, 0, 1]])


def test_world_inertia_spd_with_invariant_spectrum(rng):
    I_body = np.array([[0.3, 0.01, 0.0], [0.01, 0.2, 0.02], [0.0, 0.02, 0.5]])
    ref = np.linalg.eigvalsh(I_body)
    for _ in range(100):
        q = rng.normal(size=4)
        M = world_inertia(q / np.linalg.norm(q), 3.0, I_body)
        np.testing.assert_array_equal(M, M.T)
        assert np.linalg.eigvalsh(M)[0] > 0
        np.testing.assert_allclose(np.linalg.eigvalsh(M[3:, 3:]), ref, atol=1e-10)


# -- coriolis -----------------------------------------------------------------------


def test_coriolis_zero_without_rotation():
    M = world_inertia([1.0, 0, 0, 0], 1.0, np.diag([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(coriolis_wrench(M, [1.0, 2.0, 3.0, 0, 0, 0]), 0)


@given(vec3)
def test_coriolis_zero_for_isotropic_inertia(w):
    M = world_inertia([1.0, 0, 0, 0], 1.0, 2.5 * np.eye(3))
    np.testing.assert_allclose(coriolis_wrench(M, np.concatenate([np.zeros(3), w])), 0, atol=1e-12)


def test_coriolis_hand_cross_product():
    M = world_inertia([1.0, 0, 0, 0], 1.0, np.diag([1.0, 2.0, 3.0]))
    # -(1,1,1) x (1,2,3) = -(1,-2,1)
    np.testing.assert_allclose(coriolis_wrench(M, [0, 0, 0, 1, 1, 1]), [0, 0, 0, -1, 2, -1])


# -- frames and wrench bases --------------------------------------------------------


@given(vec3)
def test_frame_orthonormal(n):
    if np.linalg.norm(n) < 1e-3:
        n = np.array([0.0, 0, 1])
    f = frame_from_normal(n)
    Q = f.matrix()
    np.testing.assert_allclose(Q.T @ Q, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(f.o, np.cross(f.n, f.t), atol=1e-12)


def test_frame_for_ground_plane():
    f = frame_from_normal([0, 0, 1.0])
    np.testing.assert_array_equal(f.t, [1, 0, 0])
    np.testing.assert_array_equal(f.o, [0, 1, 0])


def test_wrench_basis_at_center_of_mass():
    W = wrench_basis(frame_from_normal([0, 0, 1.0]), np.zeros(3), np.zeros(3))
    np.testing.assert_array_equal(W.W_n, [0, 0, 1, 0, 0, 0])


def test_wrench_basis_lever_arm():
    W = wrench_basis(frame_from_normal([0, 0, 1.0]), [1.0, 0, 0], np.zeros(3))
    np.testing.assert_array_equal(W.W_n[3:], [0, -1, 0])
    np.testing.assert_array_equal(W.W_r, [0, 0, 0, 0, 0, 1])


@given(vec3, vec3, vec3, vec6)
def test_wrench_basis_gives_contact_point_velocity(n, a1, q, nu):
    if np.linalg.norm(n) < 1e-3:
        n = np.array([0.0, 0, 1])
    f = frame_from_normal(n)
    W = wrench_basis(f, a1, q)
    r = a1 - q
    vp = nu[:3] + np.cross(nu[3:], r)
    scale = 1 + np.abs(nu).max() * (1 + np.abs(r).max())
    assert abs(W.W_t @ nu - f.t @ vp) <= 1e-12 * scale
    assert abs(W.W_o @ nu - f.o @ vp) <= 1e-12 * scale
    assert abs(W.W_n @ nu - f.n @ vp) <= 1e-12 * scale
    # W_r carries no force: blind to pure translation
    assert W.W_r @ np.concatenate([nu[:3], np.zeros(3)]) == 0


# -- state ----------------------------------------------------------------------------


def test_rigid_state_normalizes_and_validates():
    s = RigidState([0, 0, 1], [1.0 + 1e-8, 0, 0, 0], [0, 0, 0], [0, 0, 0])
    assert abs(np.linalg.norm(s.orientation) - 1) <= 1e-12
    with pytest.raises(PreconditionError):
        RigidState([0, 0, np.nan], [1.0, 0, 0, 0], [0, 0, 0], [0, 0, 0])
    with pytest.raises(PreconditionError):
        RigidState([0, 0, 0], [2.0, 0, 0, 0], [0, 0, 0], [0, 0, 0])


@settings(max_examples=50)
@given(unit_quats())
def test_rotation_is_orthogonal(q):
    R = quat_to_rotation(q)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
