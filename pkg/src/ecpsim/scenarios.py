"""Scenario definitions: the three manipulation examples plus analytic checks.

The desk parameters are the published ones.  The T-bar and dumbbell wrench
schedules are authored waveforms that reproduce the qualitative phases of the
published runs (their exact values exist only as plots), so trajectories from
them are regression baselines rather than ground truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .friction import FrictionParams
from .geometry import (
    Pose,
    builtin_box,
    builtin_dumbbell_hull,
    builtin_sphere,
    builtin_t_prism,
    extreme_point_samples,
    halfspace_support,
)
from .math_core import RigidState, quat_from_axis_angle
from .mncp import SolverParams
from .schedules import Constant, Piecewise, Sine, WrenchSchedule

G_ACC = 9.8
DESK_L = 0.5
DESK_H = 0.45
DESK_FOOT = 0.06
T_DIMS = (0.30, 0.06, 0.06, 0.24, 0.05)  # bar width, bar depth, stem width, stem length, thickness
DUMBBELL = dict(length=0.3, radius=0.1, bar_length=0.18, bar_radius=0.05)


@dataclass(eq=False)
class Scenario:
    name: str
    body: object
    mass: float
    inertia: tuple
    support: object
    friction: FrictionParams
    h: float
    duration: float
    initial: RigidState
    applied: WrenchSchedule = field(default_factory=WrenchSchedule)
    gravity: tuple = (0.0, 0.0, -G_ACC)
    solver: SolverParams = field(default_factory=SolverParams)
    metadata: tuple = ()

    def __post_init__(self):
        self.mass = float(self.mass)
        self.h = float(self.h)
        self.duration = float(self.duration)
        self.inertia = tuple(tuple(float(v) for v in row) for row in np.asarray(self.inertia))
        self.gravity = tuple(float(g) for g in self.gravity)
        self.metadata = tuple(self.metadata)
        if not self.h > 0:
            raise ConfigurationError("h must be positive")
        if not self.duration >= self.h:
            raise ConfigurationError("duration must be at least one step")
        if not self.mass > 0:
            raise ConfigurationError("mass must be positive")
        I = np.array(self.inertia)
        if I.shape != (3, 3) or not np.allclose(I, I.T, rtol=0, atol=1e-12):
            raise ConfigurationError("inertia must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(I)[0] <= 0:
            raise ConfigurationError("inertia must be positive definite")

    @property
    def n_steps(self):
        return int(round(self.duration / self.h))

    @property
    def inertia_matrix(self):
        return np.array(self.inertia)

    def gravity_wrench(self):
        return np.concatenate([self.mass * np.array(self.gravity), np.zeros(3)])

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        names = (
            "name", "body", "mass", "inertia", "support", "friction", "h", "duration",
            "initial", "applied", "gravity", "solver", "metadata",
        )
        return all(getattr(self, n) == getattr(other, n) for n in names)

    def validate(self):
        """Check the initial pose does not penetrate and schedules are finite."""
        pose = _pose(self.initial)
        world = extreme_point_samples(self.body) @ pose.rotation.T + pose.position
        # support constraints are all negative strictly inside the support
        depth = max(-float(np.max(self.support.values(p))) for p in world)
        if depth > 1e-9:
            raise ConfigurationError(f"initial pose penetrates the support by {depth:.3g} m")
        t = 0.0
        for _ in range(self.n_steps):
            self.applied(t)
            t += self.h
        return True


def _pose(state):
    return Pose(state.position, state.orientation)


# -- inertia helpers ------------------------------------------------------------------


def box_inertia(mass, size):
    a, b, c = size
    return np.diag([b * b + c * c, a * a + c * c, a * a + b * b]) * mass / 12.0


def t_plate_inertia(mass, dims):
    """Uniform T plate (crossbar + stem) about its centroid."""
    W, d, w, L, th = dims
    a_bar, a_stem = W * d, w * L
    m_bar = mass * a_bar / (a_bar + a_stem)
    m_stem = mass - m_bar
    y_bar, y_stem = -d / 2, -d - L / 2
    cy = (m_bar * y_bar + m_stem * y_stem) / mass
    I = np.zeros((3, 3))
    for m, size, y in ((m_bar, (W, d, th), y_bar), (m_stem, (w, L, th), y_stem)):
        off = np.array([0.0, y - cy, 0.0])
        I += box_inertia(m, size) + m * (off @ off * np.eye(3) - np.outer(off, off))
    return I


def dumbbell_inertia(mass, length, radius, bar_length, bar_radius):
    """Two end cylinders and a connecting bar along x, uniform density."""
    end_len = (length - bar_length) / 2
    parts = [
        (radius, end_len, bar_length / 2 + end_len / 2),
        (radius, end_len, -(bar_length / 2 + end_len / 2)),
        (bar_radius, bar_length, 0.0),
    ]
    vols = [math.pi * r * r * l for r, l, _ in parts]
    rho = mass / sum(vols)
    I = np.zeros((3, 3))
    for (r, l, x), v in zip(parts, vols):
        m = rho * v
        I[0, 0] += 0.5 * m * r * r
        trans = m * (3 * r * r + l * l) / 12 + m * x * x
        I[1, 1] += trans
        I[2, 2] += trans
    return I


# -- catalog -------------------------------------------------------------------------


def desk_push():
    half = (DESK_L / 2, DESK_L / 2, DESK_H / 2)
    # CM sits DESK_H above the feet; the hull hangs below it
    body = builtin_box(half, center=(0.0, 0.0, -DESK_H / 2))
    m = 15.0
    return Scenario(
        name="desk_push",
        body=body,
        mass=m,
        inertia=box_inertia(m, (DESK_L, DESK_L, DESK_H)),
        support=halfspace_support(),
        friction=FrictionParams(0.22, 1.0, 1.0, 0.1),
        h=0.01,
        duration=4.0,
        initial=RigidState([0.0, 0.0, DESK_H], [1.0, 0.0, 0.0, 0.0], [0.3, 0.2, 0.0], [0.0, 0.0, 0.5]),
        applied=WrenchSchedule(
            fx=Sine(22.5, 1.0, 0.0, 22.5),
            fy=Sine(22.5, 1.0, math.pi / 2, 22.5),
            tz=Sine(2.1, 1.0, math.pi / 2, 0.0),
        ),
        metadata=(("foot_size", DESK_FOOT), ("feet", "four square feet at the hull corners")),
    )


def _pulse(t0, t1, amplitude):
    """Half-sine bump of the given peak on ``(t0, t1]``."""
    return Sine(amplitude, 0.5 / (t1 - t0), -math.pi * t0 / (t1 - t0), 0.0)


def _phases(bounds, pieces):
    return Piecewise(tuple(bounds), tuple(pieces))


def t_bar():
    m = 2.0
    body = builtin_t_prism(T_DIMS)
    th = T_DIMS[4]
    z = Constant(0.0)
    # T1: a torque pulse tips the plate onto a hull vertex, after which it
    # rocks down through slanted-edge two-point contact; T2 repeats the pulse
    # with tau_x reversed; T3 slides and spins it flat
    tilt, direction, width = 4.25, 1.75, 0.25
    tx, ty = tilt * math.cos(direction), tilt * math.sin(direction)
    b = (0.0, width, 1.5, 1.5 + width, 3.0, 5.0)
    applied = WrenchSchedule(
        fx=_phases(b, (z, z, z, z, Sine(6.0, 0.5, 0.0, 0.0))),
        fy=_phases(b, (z, z, z, z, Sine(6.0, 0.5, math.pi / 2, 0.0))),
        fz=_phases(b, (z, z, z, z, z)),
        tx=_phases(b, (_pulse(0.0, width, tx), z, _pulse(1.5, 1.5 + width, -tx), z, z)),
        ty=_phases(b, (_pulse(0.0, width, ty), z, _pulse(1.5, 1.5 + width, ty), z, z)),
        tz=_phases(b, (z, z, z, z, Sine(0.4, 0.5, 0.0, 0.0))),
    )
    return Scenario(
        name="t_bar",
        body=body,
        mass=m,
        inertia=t_plate_inertia(m, T_DIMS),
        support=halfspace_support(),
        friction=FrictionParams(0.22, 1.0, 1.0, 0.1),
        h=0.01,
        duration=5.0,
        initial=RigidState([0.0, 0.0, th / 2], [1.0, 0.0, 0.0, 0.0], [0.0] * 3, [0.0] * 3),
        applied=applied,
        metadata=(("phases", (0.0, 1.5, 3.0, 5.0)),),
    )


def dumbbell():
    m = 3.0
    L, R = DUMBBELL["length"], DUMBBELL["radius"]
    body = builtin_dumbbell_hull(L, R)
    # standing on one end cap: body x axis points up
    q0 = quat_from_axis_angle([0.0, 1.0, 0.0], -math.pi / 2)
    z = Constant(0.0)
    # a short tipping pulse, a pause while it falls over, then a slow roll drive
    b = (0.0, 0.25, 0.6, 2.5)
    applied = WrenchSchedule(
        fx=_phases(b, (z, z, Sine(2.0, 0.4, 0.0, 0.0))),
        fy=_phases(b, (_pulse(0.0, 0.25, 2.0), z, z)),
        fz=z,
        tx=_phases(b, (_pulse(0.0, 0.25, 7.0), z, z)),
        ty=z,
        tz=_phases(b, (z, z, Sine(0.15, 0.4, 0.0, 0.0))),
    )
    return Scenario(
        name="dumbbell",
        body=body,
        mass=m,
        inertia=dumbbell_inertia(m, **DUMBBELL),
        support=halfspace_support(),
        friction=FrictionParams(0.22, 1.0, 1.0, 0.1),
        h=0.01,
        duration=2.5,
        initial=RigidState([0.0, 0.0, L / 2], q0, [0.0] * 3, [0.0] * 3),
        applied=applied,
        metadata=tuple(DUMBBELL.items()),
    )


CUBE_HALF = 0.1


def _cube(name, mu, v0, z0=CUBE_HALF, duration=2.0, mass=1.0):
    return Scenario(
        name=name,
        body=builtin_box((CUBE_HALF,) * 3),
        mass=mass,
        inertia=box_inertia(mass, (2 * CUBE_HALF,) * 3),
        support=halfspace_support(),
        friction=FrictionParams(mu, 1.0, 1.0, 0.1),
        h=0.01,
        duration=duration,
        initial=RigidState([0.0, 0.0, z0], [1.0, 0.0, 0.0, 0.0], v0, [0.0] * 3),
    )


def resting_cube():
    return _cube("resting_cube", 0.22, [0.0, 0.0, 0.0])


def frictionless_slide():
    return _cube("frictionless_slide", 0.0, [1.0, 0.0, 0.0], duration=1.0)


def coulomb_slide():
    return _cube("coulomb_slide", 0.22, [0.3, 0.0, 0.0], duration=0.5)


def free_fall():
    return _cube("free_fall", 0.22, [0.0, 0.0, 0.0], z0=1.0, duration=0.3)


def toppling_rod():
    m = 1.0
    half = (0.02, 0.02, 0.15)
    tilt = quat_from_axis_angle([0.0, 1.0, 0.0], 0.15)
    # lowest corner of the tilted rod touches the ground
    R = RigidState([0, 0, 0], tilt, [0] * 3, [0] * 3).rotation
    corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]) * half
    z0 = -float(np.min(corners @ R.T, axis=0)[2])
    return Scenario(
        name="toppling_rod",
        body=builtin_box(half),
        mass=m,
        inertia=box_inertia(m, [2 * v for v in half]),
        support=halfspace_support(),
        friction=FrictionParams(0.5, 1.0, 1.0, 0.1),
        h=0.01,
        duration=1.5,
        initial=RigidState([0.0, 0.0, z0], tilt, [0.0] * 3, [0.0] * 3),
    )


def floating_sphere(height=3.0, radius=1.0):
    """Sphere held at rest above the ground (no gravity): separated contact."""
    return Scenario(
        name="floating_sphere",
        body=builtin_sphere(radius),
        mass=1.0,
        inertia=np.eye(3) * 0.4 * radius**2,
        support=halfspace_support(),
        friction=FrictionParams(0.22, 1.0, 1.0, 0.1),
        h=0.01,
        duration=0.01,
        initial=RigidState([0.0, 0.0, height], [1.0, 0.0, 0.0, 0.0], [0.0] * 3, [0.0] * 3),
        gravity=(0.0, 0.0, 0.0),
    )


def unit_scenarios():
    return [resting_cube(), frictionless_slide(), coulomb_slide(), free_fall(), toppling_rod()]


SHOWCASE_SCENARIOS = {"desk_push": desk_push, "t_bar": t_bar, "dumbbell": dumbbell}
CATALOG = {
    **SHOWCASE_SCENARIOS,
    "resting_cube": resting_cube,
    "frictionless_slide": frictionless_slide,
    "coulomb_slide": coulomb_slide,
    "free_fall": free_fall,
    "toppling_rod": toppling_rod,
    "floating_sphere": floating_sphere,
}


def get_scenario(name):
    try:
        return CATALOG[name]()
    except KeyError:
        raise KeyError(
            f"unknown scenario {name!r}; available: {', '.join(sorted(CATALOG))}"
        ) from None
