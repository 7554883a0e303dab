import numpy as np
import pytest
from scipy.optimize import nnls

from ecpsim.contact import (
    ContactUnknowns,
    check_hull_phantom,
    contact_complementarity_pairs,
    contact_equality_residuals,
    contact_frame_at,
    grad_cone_direction,
    select_active_index,
)
from ecpsim.errors import IntegrityError
from ecpsim.geometry import (
    BodyGeometry,
    HalfSpace,
    Pose,
    builtin_box,
    builtin_sphere,
    halfspace_support,
)
from ecpsim.math_core import quat_from_axis_angle

IDENTITY = Pose(np.zeros(3), np.array([1.0, 0, 0, 0]))


def at(body, position, q=(1.0, 0, 0, 0)):
    return body.at(Pose(np.asarray(position, float), np.asarray(q, float)))


# -- cone direction -------------------------------------------------------------------


def test_single_halfspace_cone_is_face_normal():
    F = BodyGeometry((HalfSpace((0, 1, 1), 0.2),))
    g = grad_cone_direction(F, IDENTITY, np.array([0.3, 0.1, 0.2]), np.array([7.0]), 0)
    np.testing.assert_allclose(g, np.array([0, 1, 1]) / np.sqrt(2))


def test_box_edge_cone_sums_face_normals():
    box = builtin_box((0.5, 0.5, 0.5))
    edge = np.array([0.5, 0.0, -0.5])  # +x (0) and -z (5)
    l_F = np.zeros(6)
    l_F[5] = 1.0
    np.testing.assert_allclose(grad_cone_direction(box, IDENTITY, edge, l_F, 0), [1, 0, -1])


def test_cone_direction_in_normal_cone(rng):
    q = quat_from_axis_angle([1, 2, -1], 0.6)
    pose = Pose(np.array([0.2, 0.0, 0.4]), q)
    box = builtin_box((0.3, 0.2, 0.1)).at(pose)
    corner = pose.to_world(np.array([0.3, -0.2, 0.1]))
    active = [0, 3, 4]
    _, grads, _ = box.world_all(corner, hessians=False)
    for _ in range(20):
        l_F = np.zeros(6)
        l_F[active] = rng.uniform(0, 2, size=3)
        k = int(rng.choice(active))
        g = grad_cone_direction(box, pose, corner, l_F, k)
        # oracle: nonnegative least squares over the active gradients
        beta, res = nnls(grads[active].T, g)
        assert res <= 1e-12
        assert np.all(beta >= 0)


def test_cone_direction_rejects_bad_index():
    with pytest.raises(IndexError):
        grad_cone_direction(builtin_box((1, 1, 1)), IDENTITY, np.zeros(3), np.zeros(6), 6)


# -- equality residuals ----------------------------------------------------------------


def test_touching_box_on_plane_residual_vanishes():
    box = at(builtin_box((0.1, 0.1, 0.1)), [0, 0, 0.1])
    G = halfspace_support()
    a = np.array([0.03, -0.05, 0.0])
    l_F = np.zeros(6)
    # grad f_5 = (0,0,-1) is balanced by l_G grad g = l_G (0,0,1)
    u = ContactUnknowns(a, a.copy(), l_F, np.array([1.0]), active_k=5)
    assert np.abs(contact_equality_residuals(u, box, G)).max() <= 1e-12


def _sphere_plane_unknowns(center, a1, a2):
    # stationarity of the closest-pair problem: a1 - a2 = -l_k grad f(a1) and
    # grad f(a1) = -l_G grad g(a2); both fixed by the sphere geometry
    grad = 2 * (a1 - center)
    l_k = -(a1 - a2)[2] / grad[2]
    l_G = -grad[2]
    return ContactUnknowns(a1, a2, np.array([l_k]), np.array([l_G]), active_k=0)


def test_separated_sphere_residual_zero_at_analytic_pair():
    center = np.array([0.4, -0.2, 3.0])
    F = at(builtin_sphere(1.0), center)
    G = halfspace_support()
    a1 = center - [0, 0, 1.0]
    a2 = np.array([center[0], center[1], 0.0])
    u = _sphere_plane_unknowns(center, a1, a2)
    np.testing.assert_allclose(contact_equality_residuals(u, F, G), 0, atol=1e-12)


def test_separated_sphere_residual_grows_with_tangential_offset():
    center = np.array([0.0, 0.0, 3.0])
    F = at(builtin_sphere(1.0), center)
    G = halfspace_support()
    a1 = center - [0, 0, 1.0]
    a2 = np.array([0.0, 0.0, 0.0])
    base = _sphere_plane_unknowns(center, a1, a2)
    norms = []
    for delta in (1e-2, 1e-3, 1e-4):
        u = ContactUnknowns(a1 + [delta, 0, 0], a2, base.l_F, base.l_G, 0)
        norms.append(np.linalg.norm(contact_equality_residuals(u, F, G)))
    for delta, n in zip((1e-2, 1e-3, 1e-4), norms):
        assert n >= 0.5 * delta


# -- complementarity pairs -------------------------------------------------------------------


def test_pairs_order_and_separated_gap():
    F = at(builtin_sphere(1.0), [0, 0, 3])
    G = halfspace_support()
    u = ContactUnknowns(np.array([0, 0, 2.0]), np.zeros(3), np.array([0.5]), np.array([2.0]), 0)
    pairs = contact_complementarity_pairs(u, 0.0, F, G)
    assert len(pairs) == 3
    assert pairs[0] == (0.5, pytest.approx(0.0))
    assert pairs[1] == (2.0, 0.0)
    p_n, gap_value = pairs[2]
    # a2 on the ground lies outside the sphere, so p_n must vanish
    assert gap_value == pytest.approx(8.0) and p_n == 0.0


def test_pairs_resting_contact_gap_is_zero():
    box = at(builtin_box((0.1, 0.1, 0.1)), [0, 0, 0.1])
    a = np.array([0.0, 0.05, 0.0])
    u = ContactUnknowns(a, a, np.zeros(6), np.array([1.0]), 5)
    pairs = contact_complementarity_pairs(u, 0.098, box, halfspace_support())
    assert pairs[-1] == (0.098, pytest.approx(0.0, abs=1e-15))
    assert all(v * w == pytest.approx(0, abs=1e-15) for v, w in pairs)


# -- frame and active index --------------------------------------------------------------------


def test_ground_frame():
    f = contact_frame_at(halfspace_support(), None, np.zeros(3))
    np.testing.assert_array_equal(f.n, [0, 0, 1])
    np.testing.assert_array_equal(f.t, [1, 0, 0])
    np.testing.assert_array_equal(f.o, [0, 1, 0])


def test_tilted_support_frame(rng):
    for _ in range(20):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        G = halfspace_support(n, 0.3)
        f = contact_frame_at(G, None, 0.3 * n)
        np.testing.assert_allclose(f.n, n, atol=1e-15)
        np.testing.assert_allclose(f.matrix().T @ f.matrix(), np.eye(3), atol=1e-12)


def test_active_index_face_and_edge():
    box = builtin_box((0.1, 0.1, 0.1))
    assert select_active_index(box, IDENTITY, np.array([0.02, 0.01, -0.1])) == 5
    # edge on +x (0) and -z (5): lowest index without a normal
    assert select_active_index(box, IDENTITY, np.array([0.1, 0.0, -0.1])) == 0


def test_active_index_prefers_face_toward_support():
    box = builtin_box((0.1, 0.1, 0.1))
    edge = np.array([0.1, 0.0, -0.1])
    assert select_active_index(box, IDENTITY, edge, normal=np.array([0, 0, -1.0])) == 5


def test_phantom_check():
    inner = lambda x: np.array([x[2] - 0.5])  # noqa: E731
    check_hull_phantom(inner, np.array([0, 0, 1.0]), 1.0, support_is_plane=True)
    check_hull_phantom(None, np.array([0, 0, 1.0]), 1.0, support_is_plane=False)
    check_hull_phantom(inner, np.array([0, 0, 0.0]), 1.0, support_is_plane=False)
    with pytest.raises(IntegrityError):
        check_hull_phantom(inner, np.array([0, 0, 1.0]), 1.0, support_is_plane=False)
