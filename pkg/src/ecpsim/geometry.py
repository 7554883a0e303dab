"""Convex inequality descriptions of bodies and supporting geometric queries.

Every constraint is a convex function ``f(x) <= 0`` written in the owning
body's frame.  Curved constraints use squared forms (``|x - c|^2 - r^2``) so
their gradients stay smooth away from the center/axis.
"""
from __future__ import annotations

import itertools
from functools import lru_cache
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError, GeometryError
from .math_core import quat_to_rotation

AXIS_TOL = 1e-14


def _vec(v, name="vector"):
    arr = np.array(v, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be a finite 3-vector")
    return arr


@dataclass(frozen=True)
class HalfSpace:
    """``normal . x - offset <= 0`` with a unit ``normal``."""

    normal: tuple
    offset: float
    kind = "halfspace"

    def __post_init__(self):
        n = _vec(self.normal, "halfspace normal")
        nn = np.linalg.norm(n)
        if nn == 0:
            raise ConfigurationError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", tuple((n / nn).tolist()))
        object.__setattr__(self, "offset", float(self.offset))

    def local(self, y, strict=True):
        n = np.array(self.normal)
        return n @ y - self.offset, n, np.zeros((3, 3))

    def project(self, y):
        n = np.array(self.normal)
        excess = n @ y - self.offset
        return y - excess * n if excess > 0 else y.copy()


@dataclass(frozen=True)
class Sphere:
    """``|x - center|^2 - radius^2 <= 0``."""

    center: tuple
    radius: float
    kind = "sphere"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(_vec(self.center, "sphere center").tolist()))
        if not self.radius > 0:
            raise ConfigurationError("sphere radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    def local(self, y, strict=True):
        d = y - np.array(self.center)
        return d @ d - self.radius**2, 2.0 * d, 2.0 * np.eye(3)

    def project(self, y):
        c = np.array(self.center)
        d = y - c
        nd = np.linalg.norm(d)
        if nd <= self.radius:
            return y.copy()
        return c + self.radius * d / nd


@dataclass(frozen=True)
class Cylinder:
    """Infinite cylinder ``|perp(x - p)|^2 - radius^2 <= 0`` about a unit axis."""

    axis_point: tuple
    axis_dir: tuple
    radius: float
    kind = "cylinder"

    def __post_init__(self):
        object.__setattr__(
            self, "axis_point", tuple(_vec(self.axis_point, "cylinder axis point").tolist())
        )
        d = _vec(self.axis_dir, "cylinder axis")
        dn = np.linalg.norm(d)
        if dn == 0:
            raise ConfigurationError("cylinder axis must be nonzero")
        object.__setattr__(self, "axis_dir", tuple((d / dn).tolist()))
        if not self.radius > 0:
            raise ConfigurationError("cylinder radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    def _perp(self, y):
        d = np.array(self.axis_dir)
        w = y - np.array(self.axis_point)
        return w - (w @ d) * d, d

    def local(self, y, strict=True):
        # the quadratic form has a zero gradient on the axis; batch evaluation
        # accepts it because the constraint is strictly inactive there
        perp, d = self._perp(y)
        if strict and perp @ perp <= AXIS_TOL**2:
            raise GeometryError("cylinder gradient is undefined on its axis")
        P = np.eye(3) - np.outer(d, d)
        return perp @ perp - self.radius**2, 2.0 * perp, 2.0 * P

    def project(self, y):
        perp, _ = self._perp(y)
        r = np.linalg.norm(perp)
        if r <= self.radius:
            return y.copy()
        return y - perp + self.radius * perp / r


ConvexConstraint = (HalfSpace, Sphere, Cylinder)


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position, "pose position"))
        q = np.array(self.orientation, dtype=float)
        if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ConfigurationError("pose orientation must be a unit quaternion")
        object.__setattr__(self, "orientation", q)
        object.__setattr__(self, "_R", quat_to_rotation(q))

    @property
    def rotation(self):
        return self._R

    def to_body(self, x):
        return self._R.T @ (np.asarray(x, dtype=float) - self.position)

    def to_world(self, y):
        return self._R @ y + self.position

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.position, other.position) and np.array_equal(
            self.orientation, other.orientation
        )

    def __repr__(self):
        return f"Pose({self.position.tolist()}, {self.orientation.tolist()})"


IDENTITY_POSE = Pose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))


@dataclass(frozen=True)
class BodyGeometry:
    """Ordered convex constraints plus a pose and a descriptor.

    ``dims`` carries the constructor parameters of built-in shapes so that a
    body can be rebuilt (and serialized) from its descriptor.
    """

    constraints: tuple
    pose: Pose = IDENTITY_POSE
    descriptor: str = "custom"
    dims: tuple = ()
    _hs_idx: np.ndarray = field(init=False, repr=False, compare=False)
    _hs_N: np.ndarray = field(init=False, repr=False, compare=False)
    _hs_b: np.ndarray = field(init=False, repr=False, compare=False)
    _curved: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cons = tuple(self.constraints)
        if not cons:
            raise ConfigurationError("a body needs at least one constraint")
        for c in cons:
            if not isinstance(c, ConvexConstraint):
                raise ConfigurationError(f"unsupported constraint {c!r}")
        object.__setattr__(self, "constraints", cons)
        object.__setattr__(self, "dims", tuple(self.dims))
        hs = [i for i, c in enumerate(cons) if isinstance(c, HalfSpace)]
        object.__setattr__(self, "_hs_idx", np.array(hs, dtype=int))
        object.__setattr__(
            self, "_hs_N", np.array([cons[i].normal for i in hs]).reshape(-1, 3)
        )
        object.__setattr__(self, "_hs_b", np.array([cons[i].offset for i in hs]))
        object.__setattr__(
            self, "_curved", tuple(i for i, c in enumerate(cons) if not isinstance(c, HalfSpace))
        )

    def __len__(self):
        return len(self.constraints)

    @property
    def is_polytope(self):
        return not self._curved

    def at(self, pose):
        return replace(self, pose=pose)

    def local_all(self, y, hessians=True):
        """Values, gradients and Hessians of all constraints at body point ``y``."""
        m = len(self.constraints)
        vals = np.empty(m)
        grads = np.empty((m, 3))
        hess = np.zeros((m, 3, 3)) if hessians else None
        if len(self._hs_idx):
            vals[self._hs_idx] = self._hs_N @ y - self._hs_b
            grads[self._hs_idx] = self._hs_N
        for i in self._curved:
            v, g, H = self.constraints[i].local(y, strict=False)
            vals[i] = v
            grads[i] = g
            if hessians:
                hess[i] = H
        return vals, grads, hess

    def local_values(self, y):
        m = len(self.constraints)
        vals = np.empty(m)
        if len(self._hs_idx):
            vals[self._hs_idx] = self._hs_N @ y - self._hs_b
        for i in self._curved:
            c = self.constraints[i]
            if isinstance(c, Sphere):
                d = y - np.array(c.center)
                vals[i] = d @ d - c.radius**2
            else:
                dvec = np.array(c.axis_dir)
                w = y - np.array(c.axis_point)
                perp = w - (w @ dvec) * dvec
                vals[i] = perp @ perp - c.radius**2
        return vals

    def values(self, x_world, pose=None):
        pose = self.pose if pose is None else pose
        return self.local_values(pose.to_body(x_world))

    def world_all(self, x_world, pose=None, hessians=True):
        """World-frame values, gradients and Hessians at ``x_world``."""
        pose = self.pose if pose is None else pose
        R = pose.rotation
        vals, g, H = self.local_all(pose.to_body(x_world), hessians)
        grads = g @ R.T
        if hessians:
            H = R @ H @ R.T
        return vals, grads, H


def evaluate_world(c, pose, x_world):
    """Value and world-frame gradient of one body-frame constraint."""
    R = pose.rotation
    v, g, _ = c.local(pose.to_body(x_world))
    return float(v), R @ g


def gap(body, x_world):
    """``(max_i f_i(x), lowest index attaining it)``."""
    vals = body.values(x_world)
    k = int(np.argmax(vals))
    return float(vals[k]), k


def active_set(body, x_world, tol=1e-9, pose=None):
    vals = body.values(x_world, pose)
    return [i for i, v in enumerate(vals) if v >= -tol]


# -- built-in hulls -----------------------------------------------------------


def builtin_box(half_extents, center=(0.0, 0.0, 0.0)):
    """Axis-aligned box; faces ordered +x, -x, +y, -y, +z, -z."""
    hx, hy, hz = (float(v) for v in half_extents)
    if min(hx, hy, hz) <= 0:
        raise ConfigurationError("box half extents must be positive")
    c = _vec(center, "box center")
    cons = []
    for axis, h in enumerate((hx, hy, hz)):
        for sign in (1.0, -1.0):
            n = np.zeros(3)
            n[axis] = sign
            cons.append(HalfSpace(tuple(n), h + sign * c[axis]))
    return BodyGeometry(
        tuple(cons), descriptor="box", dims=(("half_extents", (hx, hy, hz)), ("center", tuple(c.tolist())))
    )


def t_shape_polygon(bar_width, bar_depth, stem_width, stem_length):
    """Corners of the T outline (counter-clockwise), origin at the area centroid.

    The crossbar runs along x on the +y side; the stem extends towards -y.
    """
    W, d, w, L = bar_width, bar_depth, stem_width, stem_length
    pts = np.array(
        [
            (-W / 2, 0.0), (-W / 2, -d), (-w / 2, -d), (-w / 2, -d - L),
            (w / 2, -d - L), (w / 2, -d), (W / 2, -d), (W / 2, 0.0),
        ]
    )
    a_bar, a_stem = W * d, w * L
    cy = (a_bar * (-d / 2) + a_stem * (-d - L / 2)) / (a_bar + a_stem)
    pts[:, 1] -= cy
    return pts


def t_hull_polygon(bar_width, bar_depth, stem_width, stem_length):
    """Convex hull of the T outline, counter-clockwise (six corners)."""
    pts = t_shape_polygon(bar_width, bar_depth, stem_width, stem_length)
    # the two reentrant corners of the T are the only non-extreme ones
    return pts[[0, 1, 3, 4, 6, 7]]


def builtin_t_prism(dims):
    """Extruded convex hull of a T-shaped plate lying in the xy plane.

    ``dims = (bar_width, bar_depth, stem_width, stem_length, thickness)``.
    Lateral faces come first (counter-clockwise), then the top and bottom.
    """
    W, d, w, L, th = (float(v) for v in dims)
    if min(W, d, w, L, th) <= 0 or w >= W:
        raise ConfigurationError("T dimensions must be positive with stem narrower than bar")
    poly = t_hull_polygon(W, d, w, L)
    cons = []
    for p, q in zip(poly, np.roll(poly, -1, axis=0)):
        e = q - p
        n2 = np.array([e[1], -e[0]]) / np.hypot(*e)
        cons.append(HalfSpace((n2[0], n2[1], 0.0), float(n2 @ p)))
    cons.append(HalfSpace((0.0, 0.0, 1.0), th / 2))
    cons.append(HalfSpace((0.0, 0.0, -1.0), th / 2))
    return BodyGeometry(tuple(cons), descriptor="t_prism", dims=(("dims", (W, d, w, L, th)),))


def builtin_dumbbell_hull(L, R):
    """Finite cylinder of length ``L`` and radius ``R`` along the body x axis."""
    L, R = float(L), float(R)
    if L <= 0 or R <= 0:
        raise ConfigurationError("dumbbell length and radius must be positive")
    cons = (
        Cylinder((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), R),
        HalfSpace((1.0, 0.0, 0.0), L / 2),
        HalfSpace((-1.0, 0.0, 0.0), L / 2),
    )
    return BodyGeometry(cons, descriptor="dumbbell", dims=(("length", L), ("radius", R)))


def builtin_sphere(radius, center=(0.0, 0.0, 0.0)):
    return BodyGeometry(
        (Sphere(tuple(center), float(radius)),),
        descriptor="sphere",
        dims=(("radius", float(radius)), ("center", tuple(float(c) for c in center))),
    )


def halfspace_support(normal=(0.0, 0.0, 1.0), offset=0.0):
    """Fixed support occupying ``normal . x <= offset`` (the ground by default)."""
    return BodyGeometry(
        (HalfSpace(tuple(normal), float(offset)),),
        descriptor="halfspace",
        dims=(("normal", tuple(float(v) for v in normal)), ("offset", float(offset))),
    )


# -- extreme points -------------------------------------------------------------


def polytope_vertices(body, tol=1e-9):
    """Vertices of an all-halfspace body in its own frame, by plane triples."""
    if not body.is_polytope:
        raise GeometryError("vertex enumeration needs an all-halfspace body")
    N, b = body._hs_N, body._hs_b
    out = []
    for i, j, k in itertools.combinations(range(len(b)), 3):
        A = N[[i, j, k]]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        v = np.linalg.solve(A, b[[i, j, k]])
        if np.all(N @ v - b <= tol) and not any(np.allclose(v, u, atol=1e-9) for u in out):
            out.append(v)
    if not out:
        raise GeometryError("body has no vertices (unbounded or empty)")
    return np.array(out)


def _fibonacci_directions(n):
    k = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * k / n)
    th = np.pi * (1 + 5**0.5) * k
    return np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])


def _capped_cylinder(cons):
    """``(cylinder, caps)`` when the body is a cylinder cut by two axis-normal planes."""
    cyl = [c for c in cons if isinstance(c, Cylinder)]
    caps = [c for c in cons if isinstance(c, HalfSpace)]
    if len(cyl) != 1 or len(caps) != 2 or len(cons) != 3:
        return None
    d = np.array(cyl[0].axis_dir)
    if all(abs(abs(np.array(c.normal) @ d) - 1.0) <= 1e-12 for c in caps):
        return cyl[0], caps
    return None


@lru_cache(maxsize=64)
def _support_samples(constraints, n):
    # support points argmax d.y over the hull for a sphere of directions d
    body = BodyGeometry(constraints)
    start = project_onto(body, np.zeros(3))
    cons = {
        "type": "ineq",
        "fun": lambda y: -body.local_values(y),
        "jac": lambda y: -body.local_all(y, hessians=False)[1],
    }
    pts = []
    for d in _fibonacci_directions(n):
        res = minimize(lambda y: -d @ y, start, jac=lambda y: -d, constraints=cons,
                       method="SLSQP", options={"ftol": 1e-12, "maxiter": 200})
        pts.append(res.x)
    return np.array(pts)


def extreme_point_samples(body, n_rim=64):
    """Body-frame points on the hull boundary that bound it from below.

    Polytopes return their vertices; a capped cylinder returns samples of
    both cap rims; a sphere returns a Fibonacci sample of its surface.  Other
    curved bodies fall back to numerically computed support points over a
    sphere of directions, which can miss an extreme point lying between two
    sampled directions.
    """
    if body.is_polytope:
        return polytope_vertices(body)
    cons = body.constraints
    capped = _capped_cylinder(cons)
    if capped is not None:
        c, caps = capped
        d = np.array(c.axis_dir)
        p = np.array(c.axis_point)
        u = np.cross(d, [0.0, 0.0, 1.0] if abs(d[2]) < 0.9 else [1.0, 0.0, 0.0])
        u /= np.linalg.norm(u)
        w = np.cross(d, u)
        pts = []
        for cap in caps:
            n = np.array(cap.normal)
            s = (cap.offset - n @ p) / (n @ d)
            for th in np.linspace(0, 2 * np.pi, n_rim, endpoint=False):
                pts.append(p + s * d + c.radius * (np.cos(th) * u + np.sin(th) * w))
        return np.array(pts)
    if len(cons) == 1 and isinstance(cons[0], Sphere):
        s = cons[0]
        return np.array(s.center) + s.radius * _fibonacci_directions(n_rim * 4)
    return _support_samples(cons, n_rim * 4)


# -- closest points -------------------------------------------------------------


class ClosestPair(NamedTuple):
    a1: np.ndarray
    a2: np.ndarray
    approximate: bool
    iterations: int


def project_onto(body, x_world, max_iter=2000, tol=1e-13):
    """Euclidean projection onto a body's constraint intersection (Dykstra)."""
    pose = body.pose
    y = pose.to_body(x_world)
    cons = body.constraints
    if len(cons) == 1:
        return pose.to_world(cons[0].project(y))
    incr = np.zeros((len(cons), 3))
    for _ in range(max_iter):
        y_start = y.copy()
        for i, c in enumerate(cons):
            z = y + incr[i]
            y_new = c.project(z)
            incr[i] = z - y_new
            y = y_new
        if np.linalg.norm(y - y_start) <= tol:
            break
    return pose.to_world(y)


def seed_closest_points(F, G, max_iter=500, tol=1e-10):
    """Alternating-projection estimate of the closest pair between two bodies.

    Returns ``ClosestPair(a1, a2, approximate, iterations)`` with ``a1`` on
    ``F`` and ``a2`` on ``G``.  ``approximate`` is set when the iteration
    budget ran out before successive iterates moved less than ``tol``.
    """
    a1 = project_onto(F, F.pose.position)
    a2 = project_onto(G, a1)
    for it in range(1, max_iter + 1):
        a1_new = project_onto(F, a2)
        a2_new = project_onto(G, a1_new)
        moved = max(np.linalg.norm(a1_new - a1), np.linalg.norm(a2_new - a2))
        a1, a2 = a1_new, a2_new
        if moved <= tol:
            return ClosestPair(a1, a2, False, it)
    return ClosestPair(a1, a2, True, max_iter)
