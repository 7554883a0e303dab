"""Rotation algebra, generalized inertia and contact wrench bases.

Conventions
-----------
Quaternions are scalar-first ``(w, x, y, z)`` Hamilton quaternions mapping
body coordinates to world coordinates, ``x_world = R(q) x_body``.  Angular
velocities are spatial (expressed in the world frame), so the quaternion rate
is ``q_dot = 0.5 * [0, omega] (x) q``.  A generalized velocity ``nu`` is the
6-vector ``[v; omega]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, PreconditionError

UNIT_TOL = 1e-9


def skew(v):
    """Return the 3x3 matrix ``[v]x`` with ``[v]x @ u == cross(v, u)``."""
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def quat_multiply(p, q):
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ]
    )


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise PreconditionError("cannot normalize a zero or non-finite quaternion")
    return q / n


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2.0)], np.sin(angle / 2.0) * axis])


def quat_to_rotation(q):
    """Rotation matrix of a unit quaternion."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _check_unit(q, tol=UNIT_TOL):
    q = np.asarray(q, dtype=float)
    if q.shape != (4,) or not np.all(np.isfinite(q)):
        raise PreconditionError("orientation must be a finite 4-vector")
    if abs(np.linalg.norm(q) - 1.0) > tol:
        raise PreconditionError(
            f"orientation is not a unit quaternion (norm={np.linalg.norm(q)!r})"
        )
    return q


@dataclass(frozen=True, eq=False)
class RigidState:
    """Pose and generalized velocity of the manipulated body.

    The orientation is renormalized on construction so that every exposed
    state carries a unit quaternion to machine precision.
    """

    position: np.ndarray
    orientation: np.ndarray
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray

    def __post_init__(self):
        for name in ("position", "linear_velocity", "angular_velocity"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (3,) or not np.all(np.isfinite(arr)):
                raise PreconditionError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, arr)
        q = _check_unit(self.orientation, tol=1e-6)
        object.__setattr__(self, "orientation", q / np.linalg.norm(q))

    @property
    def nu(self):
        return np.concatenate([self.linear_velocity, self.angular_velocity])

    @property
    def rotation(self):
        return quat_to_rotation(self.orientation)

    def with_velocity(self, nu):
        return RigidState(self.position, self.orientation, nu[:3], nu[3:])

    def __eq__(self, other):
        if not isinstance(other, RigidState):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("position", "orientation", "linear_velocity", "angular_velocity")
        )

    def __repr__(self):
        return (
            f"RigidState(position={self.position.tolist()}, "
            f"orientation={self.orientation.tolist()}, "
            f"linear_velocity={self.linear_velocity.tolist()}, "
            f"angular_velocity={self.angular_velocity.tolist()})"
        )


def quat_kinematic_map(orientation):
    """7x6 matrix ``G`` with ``[pos_dot; quat_dot] = G @ nu``."""
    w, x, y, z = _check_unit(orientation)
    G = np.zeros((7, 6))
    G[:3, :3] = np.eye(3)
    # 0.5 * [0, omega] (x) q written as a linear map of omega
    G[3, 3:] = [-0.5 * x, -0.5 * y, -0.5 * z]
    G[4:, 3:] = 0.5 * (w * np.eye(3) - skew((x, y, z)))
    return G


def integrate_pose(position, orientation, nu, h):
    """Euler-integrate the pose over one step and renormalize the quaternion.

    Returns ``(position, orientation, drift)`` where ``drift`` is the
    deviation of the unnormalized quaternion norm from one.
    """
    position = np.asarray(position, dtype=float)
    orientation = np.asarray(orientation, dtype=float)
    qdot = quat_kinematic_map(orientation) @ nu
    new_pos = position + h * qdot[:3]
    raw = orientation + h * qdot[3:]
    n = np.linalg.norm(raw)
    return new_pos, raw / n, n - 1.0


def rotation_increment(omega, h):
    """Rotation applied by one renormalized Euler quaternion step.

    ``normalize(q + h/2 [0, w] (x) q) == normalize([1, h w / 2]) (x) q``, so
    the increment is the Cayley rotation of ``c = h w / 2``.
    """
    c = 0.5 * h * np.asarray(omega, dtype=float)
    cc = c @ c
    return ((1.0 - cc) * np.eye(3) + 2.0 * np.outer(c, c) + 2.0 * skew(c)) / (1.0 + cc)


def rotation_increment_jacobian(omega, h):
    """Derivative of the spatial rotation-vector perturbation wrt ``omega``."""
    c = 0.5 * h * np.asarray(omega, dtype=float)
    return h / (1.0 + c @ c) * (np.eye(3) + skew(c))


def world_inertia(orientation, mass, body_inertia):
    """Generalized 6x6 inertia ``blockdiag(m I, R I_body R^T)``."""
    if not mass > 0:
        raise ConfigurationError(f"mass must be positive, got {mass!r}")
    I_body = np.asarray(body_inertia, dtype=float)
    if I_body.shape != (3, 3) or not np.allclose(I_body, I_body.T, rtol=0, atol=1e-12):
        raise ConfigurationError("body inertia must be a symmetric 3x3 matrix")
    if np.linalg.eigvalsh(I_body)[0] <= 0:
        raise ConfigurationError("body inertia must be positive definite")
    R = quat_to_rotation(_check_unit(orientation))
    M = np.zeros((6, 6))
    M[:3, :3] = mass * np.eye(3)
    Iw = R @ I_body @ R.T
    M[3:, 3:] = 0.5 * (Iw + Iw.T)
    return M


def coriolis_wrench(M, nu):
    """Gyroscopic wrench ``[0; -omega x (I_world omega)]``."""
    omega = np.asarray(nu, dtype=float)[3:]
    out = np.zeros(6)
    out[3:] = -np.cross(omega, M[3:, 3:] @ omega)
    return out


@dataclass(frozen=True, eq=False)
class ContactFrame:
    """Orthonormal contact frame; ``n`` points from the support to the body."""

    n: np.ndarray
    t: np.ndarray
    o: np.ndarray

    def matrix(self):
        return np.column_stack([self.n, self.t, self.o])


def frame_from_normal(n):
    """Deterministic frame: ``t`` is world x projected off ``n`` (else world y)."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    for axis in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
        t = axis - (axis @ n) * n
        tn = np.linalg.norm(t)
        if tn > 1e-6:
            # second pass removes the cancellation error of a near-parallel axis
            t = t / tn
            t = t - (t @ n) * n
            t = t / np.linalg.norm(t)
            break
    o = np.cross(n, t)
    return ContactFrame(n, t, o)


@dataclass(frozen=True, eq=False)
class WrenchBasis:
    W_n: np.ndarray
    W_t: np.ndarray
    W_o: np.ndarray
    W_r: np.ndarray

    def matrix(self):
        """6x4 matrix with columns ``[W_n, W_t, W_o, W_r]``."""
        return np.column_stack([self.W_n, self.W_t, self.W_o, self.W_r])


def wrench_basis(frame, a1, q_pos):
    r = np.asarray(a1, dtype=float) - np.asarray(q_pos, dtype=float)
    n, t, o = frame.n, frame.t, frame.o
    return WrenchBasis(
        np.concatenate([n, np.cross(r, n)]),
        np.concatenate([t, np.cross(r, t)]),
        np.concatenate([o, np.cross(r, o)]),
        np.concatenate([np.zeros(3), n]),
    )
