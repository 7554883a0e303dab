"""Scenario configuration files, trajectory CSV, SVG plots and the command line.

Configuration documents are YAML.  Every error found while reading one names
the offending field and its line and column.  See ``docs/config.md`` for the
schema.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml
from matplotlib.figure import Figure
from scipy.spatial import ConvexHull

from . import scenarios as sc
from . import simulator
from .errors import ConfigurationError, IntegrityError, PreconditionError, StepError
from .friction import FrictionParams
from .geometry import (
    BodyGeometry,
    Cylinder,
    HalfSpace,
    Sphere,
    builtin_box,
    builtin_dumbbell_hull,
    builtin_sphere,
    builtin_t_prism,
    extreme_point_samples,
    halfspace_support,
)
from .math_core import RigidState
from .mncp import SolverParams
from .schedules import COMPONENTS, Constant, Piecewise, Sine, WrenchSchedule

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_INTEGRITY = 0, 1, 2, 3

CSV_COLUMNS = (
    "t", "qx", "qy", "qz", "quat_w", "quat_x", "quat_y", "quat_z",
    "vx", "vy", "vz", "wx", "wy", "wz", "a1x", "a1y", "a1z", "a2x", "a2y", "a2z",
    "pn", "pt", "po", "pr", "sigma", "gap", "newton_iters", "converged",
)
INT_COLUMNS = ("newton_iters", "converged")

PLOT_NAMES = ("vx", "wz", "qz", "ecp", "topview")


class ConfigError(ConfigurationError):
    """Configuration problem located at ``line``/``column`` (1-based)."""

    def __init__(self, message, field=None, line=None, column=None):
        where = f"line {line}, column {column}: " if line is not None else ""
        name = f"{field}: " if field else ""
        super().__init__(f"{where}{name}{message}")
        self.field = field
        self.line = line
        self.column = column


# -- reading documents ---------------------------------------------------------


class _Reader:
    """Walks the YAML node tree so every value keeps its source position."""

    def __init__(self, loader):
        self.loader = loader

    def fail(self, node, path, message):
        mark = node.start_mark
        raise ConfigError(message, path, mark.line + 1, mark.column + 1)

    def mapping(self, node, path, allowed, required=()):
        if not isinstance(node, yaml.MappingNode):
            self.fail(node, path, "expected a mapping")
        out = {}
        for knode, vnode in node.value:
            if not isinstance(knode, yaml.ScalarNode):
                self.fail(knode, path, "keys must be plain strings")
            key = self.loader.construct_object(knode)
            sub = f"{path}.{key}" if path else str(key)
            if key not in allowed:
                self.fail(knode, sub, f"unknown key (allowed: {', '.join(allowed)})")
            if key in out:
                self.fail(knode, sub, "duplicate key")
            out[key] = vnode
        self.require(node, out, path, required)
        return out

    def require(self, node, fields, path, keys):
        for key in keys:
            if key not in fields:
                self.fail(node, f"{path}.{key}" if path else key, "missing required field")

    def value(self, node):
        return self.loader.construct_object(node, deep=True)

    def number(self, node, path, positive=False, nonneg=False):
        v = self.value(node) if isinstance(node, yaml.ScalarNode) else None
        if isinstance(v, str):
            # plain YAML needs a dot in exponent notation; accept "1e-10" too
            try:
                v = float(v)
            except ValueError:
                v = None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(node, path, "expected a number")
        v = float(v)
        if not math.isfinite(v):
            self.fail(node, path, "must be finite")
        if positive and not v > 0:
            self.fail(node, path, "must be positive")
        if nonneg and v < 0:
            self.fail(node, path, "must be non-negative")
        return v

    def integer(self, node, path):
        v = self.value(node) if isinstance(node, yaml.ScalarNode) else None
        if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
            self.fail(node, path, "expected a positive integer")
        return v

    def string(self, node, path, choices=None):
        v = self.value(node) if isinstance(node, yaml.ScalarNode) else None
        if not isinstance(v, str):
            self.fail(node, path, "expected a string")
        if choices is not None and v not in choices:
            self.fail(node, path, f"must be one of {', '.join(choices)}")
        return v

    def sequence(self, node, path, length=None):
        if not isinstance(node, yaml.SequenceNode):
            self.fail(node, path, "expected a list")
        if length is not None and len(node.value) != length:
            self.fail(node, path, f"expected {length} entries, got {len(node.value)}")
        return node.value

    def vector(self, node, path, length=3):
        items = self.sequence(node, path, length)
        return tuple(self.number(n, f"{path}[{i}]") for i, n in enumerate(items))


def _plain(value):
    """YAML lists back to the tuples scenario metadata is built from."""
    if isinstance(value, list):
        return tuple(_plain(v) for v in value)
    if isinstance(value, dict):
        return tuple((k, _plain(v)) for k, v in value.items())
    return value


_SHAPE_FIELDS = {
    "box": ("half_extents", "center"),
    "t_prism": ("bar_width", "bar_depth", "stem_width", "stem_length", "thickness"),
    "dumbbell": ("length", "radius"),
    "sphere": ("radius", "center"),
    "halfspace": ("normal", "offset"),
    "convex": ("constraints",),
}
_CONSTRAINT_FIELDS = {
    "halfspace": ("normal", "offset"),
    "sphere": ("center", "radius"),
    "cylinder": ("axis_point", "axis_dir", "radius"),
}


def _read_constraint(r, node, path):
    m = r.mapping(node, path, tuple(_CONSTRAINT_FIELDS))
    if len(m) != 1:
        r.fail(node, path, "expected exactly one of halfspace, sphere, cylinder")
    (kind, sub), = m.items()
    path = f"{path}.{kind}"
    f = r.mapping(sub, path, _CONSTRAINT_FIELDS[kind], required=_CONSTRAINT_FIELDS[kind])
    if kind == "halfspace":
        return HalfSpace(r.vector(f["normal"], path + ".normal"), r.number(f["offset"], path + ".offset"))
    if kind == "sphere":
        return Sphere(
            r.vector(f["center"], path + ".center"),
            r.number(f["radius"], path + ".radius", positive=True),
        )
    return Cylinder(
        r.vector(f["axis_point"], path + ".axis_point"),
        r.vector(f["axis_dir"], path + ".axis_dir"),
        r.number(f["radius"], path + ".radius", positive=True),
    )


def _read_geometry(r, node, path, fields, extra=()):
    """Geometry from an already-read block mapping ``fields``."""
    kind = r.string(fields["kind"], path + ".kind", tuple(_SHAPE_FIELDS))
    allowed = ("kind",) + _SHAPE_FIELDS[kind] + tuple(extra)
    r.mapping(node, path, allowed)
    num = lambda key, **kw: r.number(need(key), f"{path}.{key}", **kw)  # noqa: E731
    vec = lambda key, default: (  # noqa: E731
        r.vector(fields[key], f"{path}.{key}") if key in fields else default
    )

    def need(key):
        if key not in fields:
            r.fail(node, f"{path}.{key}", "missing required field")
        return fields[key]

    try:
        if kind == "box":
            half = r.vector(need("half_extents"), path + ".half_extents")
            return builtin_box(half, vec("center", (0.0, 0.0, 0.0)))
        if kind == "t_prism":
            dims = tuple(num(k, positive=True) for k in _SHAPE_FIELDS["t_prism"])
            return builtin_t_prism(dims)
        if kind == "dumbbell":
            return builtin_dumbbell_hull(num("length", positive=True), num("radius", positive=True))
        if kind == "sphere":
            return builtin_sphere(num("radius", positive=True), vec("center", (0.0, 0.0, 0.0)))
        if kind == "halfspace":
            offset = r.number(fields["offset"], path + ".offset") if "offset" in fields else 0.0
            return halfspace_support(vec("normal", (0.0, 0.0, 1.0)), offset)
        items = r.sequence(need("constraints"), path + ".constraints")
        if not items:
            r.fail(fields["constraints"], path + ".constraints", "needs at least one constraint")
        return BodyGeometry(
            tuple(_read_constraint(r, n, f"{path}.constraints[{i}]") for i, n in enumerate(items))
        )
    except ConfigError:
        raise
    except ConfigurationError as exc:
        r.fail(node, path, str(exc))


def auto_inertia(body, mass):
    """Uniform solid inertia about the body origin for built-in shapes.

    The dumbbell kind describes only its hull, so "auto" treats it as a solid
    cylinder; give the matrix explicitly for anything else.
    """
    dims = dict(body.dims)
    if body.descriptor == "box":
        return sc.box_inertia(mass, [2 * v for v in dims["half_extents"]])
    if body.descriptor == "t_prism":
        return sc.t_plate_inertia(mass, dims["dims"])
    if body.descriptor == "sphere":
        return np.eye(3) * 0.4 * mass * dims["radius"] ** 2
    if body.descriptor == "dumbbell":
        L, R = dims["length"], dims["radius"]
        t = mass * (3 * R * R + L * L) / 12
        return np.diag([0.5 * mass * R * R, t, t])
    raise ConfigurationError(f"inertia 'auto' is not available for a {body.descriptor} body")


def _read_waveform(r, node, path):
    kinds = ("constant", "sine", "piecewise")
    m = r.mapping(node, path, kinds)
    if len(m) != 1:
        r.fail(node, path, "expected exactly one of constant, sine, piecewise")
    (kind, sub), = m.items()
    path = f"{path}.{kind}"
    if kind == "constant":
        return Constant(r.number(sub, path))
    if kind == "sine":
        f = r.mapping(sub, path, ("amplitude", "frequency", "phase", "offset"),
                      required=("amplitude", "frequency"))
        opt = lambda k: r.number(f[k], f"{path}.{k}") if k in f else 0.0  # noqa: E731
        return Sine(
            r.number(f["amplitude"], path + ".amplitude"),
            r.number(f["frequency"], path + ".frequency"),
            opt("phase"),
            opt("offset"),
        )
    f = r.mapping(sub, path, ("breakpoints", "pieces"), required=("breakpoints", "pieces"))
    bps = tuple(
        r.number(n, f"{path}.breakpoints[{i}]")
        for i, n in enumerate(r.sequence(f["breakpoints"], path + ".breakpoints"))
    )
    pieces = tuple(
        _read_waveform(r, n, f"{path}.pieces[{i}]")
        for i, n in enumerate(r.sequence(f["pieces"], path + ".pieces"))
    )
    try:
        return Piecewise(bps, pieces)
    except ConfigurationError as exc:
        r.fail(sub, path, str(exc))


_TOP = ("schema_version", "name", "body", "support", "friction", "integration",
        "initial", "applied", "metadata")
_SOLVER_FIELDS = ("tol_residual", "max_newton_iters", "smoothing_schedule", "armijo_c",
                  "armijo_shrink", "min_step", "jacobian_mode", "fd_step")


def _read_solver(r, node, path):
    f = r.mapping(node, path, _SOLVER_FIELDS)
    kw = {}
    for key, sub in f.items():
        p = f"{path}.{key}"
        if key == "max_newton_iters":
            kw[key] = r.integer(sub, p)
        elif key == "jacobian_mode":
            kw[key] = r.string(sub, p, ("analytic", "fd", "hybrid"))
        elif key == "smoothing_schedule":
            items = r.sequence(sub, p)
            kw[key] = tuple(r.number(n, f"{p}[{i}]", positive=True) for i, n in enumerate(items))
        else:
            kw[key] = r.number(sub, p, positive=True)
    try:
        return SolverParams(**kw)
    except PreconditionError as exc:
        r.fail(node, path, str(exc))


def _build(r, root):
    top = r.mapping(root, "", _TOP, required=("schema_version",))
    version = r.value(top["schema_version"])
    if version != SCHEMA_VERSION:
        r.fail(top["schema_version"], "schema_version",
               f"unsupported version {version!r} (this reader understands {SCHEMA_VERSION})")
    r.require(root, top, "", ("body", "integration", "initial"))
    name = r.string(top["name"], "name") if "name" in top else "custom"

    bnode = top["body"]
    # keys are checked against the declared kind in _read_geometry
    bf = r.mapping(bnode, "body", _AnyKey(), required=("kind",))
    body = _read_geometry(r, bnode, "body", bf, extra=("mass", "inertia"))
    r.require(bnode, bf, "body", ("mass",))
    mass = r.number(bf["mass"], "body.mass", positive=True)
    jnode = bf.get("inertia")
    if jnode is None or (isinstance(jnode, yaml.ScalarNode) and r.value(jnode) == "auto"):
        try:
            inertia = auto_inertia(body, mass)
        except ConfigurationError as exc:
            r.fail(jnode or bnode, "body.inertia", str(exc))
    else:
        rows = r.sequence(jnode, "body.inertia", 3)
        inertia = tuple(r.vector(row, f"body.inertia[{i}]") for i, row in enumerate(rows))

    if "support" in top:
        snode = top["support"]
        sf = r.mapping(snode, "support", _AnyKey(), required=("kind",))
        support = _read_geometry(r, snode, "support", sf)
    else:
        support = halfspace_support()

    friction = FrictionParams()
    if "friction" in top:
        names = ("mu", "e_t", "e_o", "e_r")
        ff = r.mapping(top["friction"], "friction", names)
        kw = {k: r.number(v, f"friction.{k}", nonneg=(k == "mu"), positive=(k != "mu"))
              for k, v in ff.items()}
        friction = FrictionParams(**kw)

    inode = top["integration"]
    itg = r.mapping(inode, "integration", ("h", "duration", "gravity", "solver"),
                    required=("h", "duration"))
    h = r.number(itg["h"], "integration.h", positive=True)
    duration = r.number(itg["duration"], "integration.duration", positive=True)
    gravity = r.vector(itg["gravity"], "integration.gravity") if "gravity" in itg else (0.0, 0.0, -sc.G_ACC)
    solver = _read_solver(r, itg["solver"], "integration.solver") if "solver" in itg else SolverParams()

    st = r.mapping(top["initial"], "initial",
                   ("position", "orientation", "linear_velocity", "angular_velocity"),
                   required=("position",))
    vec = lambda k, d, n=3: r.vector(st[k], f"initial.{k}", n) if k in st else d  # noqa: E731
    try:
        initial = RigidState(
            vec("position", None), vec("orientation", (1.0, 0.0, 0.0, 0.0), 4),
            vec("linear_velocity", (0.0, 0.0, 0.0)), vec("angular_velocity", (0.0, 0.0, 0.0)),
        )
    except PreconditionError as exc:
        r.fail(top["initial"], "initial", str(exc))

    applied = WrenchSchedule()
    if "applied" in top:
        af = r.mapping(top["applied"], "applied", COMPONENTS)
        applied = WrenchSchedule(**{c: _read_waveform(r, n, f"applied.{c}") for c, n in af.items()})

    metadata = ()
    if "metadata" in top:
        r.mapping(top["metadata"], "metadata", allowed=_AnyKey())
        metadata = _plain(r.value(top["metadata"]))

    try:
        scenario = sc.Scenario(
            name=name, body=body, mass=mass, inertia=inertia, support=support,
            friction=friction, h=h, duration=duration, initial=initial, applied=applied,
            gravity=gravity, solver=solver, metadata=metadata,
        )
    except ConfigurationError as exc:
        field = "body.inertia" if "inertia" in str(exc) else "integration"
        node = bf.get("inertia", bnode) if field == "body.inertia" else inode
        r.fail(node, field, str(exc))
    return scenario


class _AnyKey:
    def __contains__(self, key):
        return isinstance(key, str)

    def __iter__(self):
        return iter(("<any string>",))


def parse_config(text):
    """Validated :class:`Scenario` from a YAML document.

    Raises :class:`ConfigError` (a :class:`ConfigurationError`) whose message
    starts with the line and column of the offending node.
    """
    loader = yaml.SafeLoader(text)
    try:
        try:
            root = loader.get_single_node()
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            raise ConfigError(exc.problem or str(exc), None,
                              mark.line + 1 if mark else None,
                              mark.column + 1 if mark else None) from None
        if root is None:
            raise ConfigError("empty document", None, 1, 1)
        return _build(_Reader(loader), root)
    finally:
        loader.dispose()


def load_config(path):
    return parse_config(Path(path).read_text())


# -- writing documents ---------------------------------------------------------


def _list(v):
    return [_list(x) for x in v] if isinstance(v, (tuple, list, np.ndarray)) else float(v)


def _geometry_doc(body):
    if body.pose != BodyGeometry(body.constraints).pose:
        raise ConfigurationError("only bodies in their reference pose can be serialized")
    dims = dict(body.dims)
    kind = body.descriptor
    if kind == "box":
        return {"kind": "box", "half_extents": _list(dims["half_extents"]), "center": _list(dims["center"])}
    if kind == "t_prism":
        return {"kind": "t_prism", **dict(zip(_SHAPE_FIELDS["t_prism"], _list(dims["dims"])))}
    if kind == "dumbbell":
        return {"kind": "dumbbell", "length": float(dims["length"]), "radius": float(dims["radius"])}
    if kind == "sphere":
        return {"kind": "sphere", "radius": float(dims["radius"]), "center": _list(dims["center"])}
    if kind == "halfspace":
        return {"kind": "halfspace", "normal": _list(dims["normal"]), "offset": float(dims["offset"])}
    cons = []
    for c in body.constraints:
        if isinstance(c, HalfSpace):
            cons.append({"halfspace": {"normal": _list(c.normal), "offset": c.offset}})
        elif isinstance(c, Sphere):
            cons.append({"sphere": {"center": _list(c.center), "radius": c.radius}})
        else:
            cons.append({"cylinder": {"axis_point": _list(c.axis_point),
                                      "axis_dir": _list(c.axis_dir), "radius": c.radius}})
    return {"kind": "convex", "constraints": cons}


def _waveform_doc(w):
    if isinstance(w, Constant):
        return {"constant": float(w.value)}
    if isinstance(w, Sine):
        return {"sine": {"amplitude": w.amplitude, "frequency": w.frequency,
                         "phase": w.phase, "offset": w.offset}}
    if isinstance(w, Piecewise):
        return {"piecewise": {"breakpoints": list(w.breakpoints),
                              "pieces": [_waveform_doc(p) for p in w.pieces]}}
    raise ConfigurationError(f"waveform {w!r} has no configuration form")


def _meta_value(v):
    return [_meta_value(x) for x in v] if isinstance(v, tuple) else v


def config_document(scenario):
    """Plain-data document with every default written out."""
    s = scenario.solver
    body = _geometry_doc(scenario.body)
    body.update(mass=scenario.mass, inertia=_list(scenario.inertia))
    st = scenario.initial
    return {
        "schema_version": SCHEMA_VERSION,
        "name": scenario.name,
        "body": body,
        "support": _geometry_doc(scenario.support),
        "friction": {k: getattr(scenario.friction, k) for k in ("mu", "e_t", "e_o", "e_r")},
        "integration": {
            "h": scenario.h,
            "duration": scenario.duration,
            "gravity": _list(scenario.gravity),
            "solver": {
                "tol_residual": s.tol_residual,
                "max_newton_iters": int(s.max_newton_iters),
                "smoothing_schedule": _list(s.smoothing_schedule),
                "armijo_c": s.armijo_c,
                "armijo_shrink": s.armijo_shrink,
                "min_step": s.min_step,
                "jacobian_mode": s.jacobian_mode,
                "fd_step": s.fd_step,
            },
        },
        "initial": {
            "position": _list(st.position),
            "orientation": _list(st.orientation),
            "linear_velocity": _list(st.linear_velocity),
            "angular_velocity": _list(st.angular_velocity),
        },
        "applied": {c: _waveform_doc(getattr(scenario.applied, c)) for c in COMPONENTS},
        "metadata": {k: _meta_value(v) for k, v in scenario.metadata},
    }


def serialize_config(scenario):
    return yaml.safe_dump(config_document(scenario), sort_keys=False, default_flow_style=None)


# -- trajectories ----------------------------------------------------------------


def trajectory_row(rec):
    s, c = rec.state, rec.contact
    u = c.unknowns
    floats = [rec.time, *s.position, *s.orientation, *s.linear_velocity, *s.angular_velocity,
              *u.a1, *u.a2, c.p_n, c.p_t, c.p_o, c.p_r, c.sigma, rec.diagnostics["gap_a2"]]
    return [format(float(v), ".17g") for v in floats] + [
        str(int(rec.solver["iterations"])), str(int(bool(rec.solver["converged"])))
    ]


def write_trajectory(records, path):
    """One CSV row per step, floats at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow(trajectory_row(rec))


def read_trajectory(path):
    """Columns of a trajectory CSV as arrays keyed by header name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ConfigurationError(f"{path}: not a trajectory file (unexpected header)")
    cols = list(zip(*rows[1:])) if len(rows) > 1 else [()] * len(CSV_COLUMNS)
    out = {}
    for name, col in zip(CSV_COLUMNS, cols):
        dtype = int if name in INT_COLUMNS else float
        out[name] = np.array([dtype(v) for v in col], dtype=dtype)
    return out


# -- plots -------------------------------------------------------------------------


def hull_footprint(body):
    """Body-frame outline of the hull projected onto its own xy plane."""
    pts = extreme_point_samples(body)[:, :2]
    hull = ConvexHull(pts)
    return pts[hull.vertices]


def ecp_body_xy(records):
    """Body-frame xy of the contact point on steps in contact."""
    out = []
    for rec in records:
        if rec.diagnostics["in_contact"]:
            s = rec.state
            out.append((rec.contact.unknowns.a1 - s.position) @ s.rotation)
    return np.array(out).reshape(-1, 3)[:, :2]


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def _line_plot(path, t, series, ylabel):
    fig = Figure(figsize=(6, 3.5))
    ax = fig.add_subplot()
    for label, y in series:
        ax.plot(t, y, lw=1.2, label=label)
    ax.set_xlabel("t [s]")
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    _save(fig, path)


def emit_plots(records, path_prefix, body=None):
    """Write five SVG figures named ``<prefix>_<name>.svg``; returns their paths.

    The top view shows the world CM track and contact points, and, when the
    ``body`` is given, the contact points in the body frame against the hull
    outline.
    """
    if not records:
        raise PreconditionError("cannot plot an empty trajectory")
    prefix = str(path_prefix)
    t = np.array([r.time for r in records])
    v = np.array([r.state.linear_velocity for r in records])
    w = np.array([r.state.angular_velocity for r in records])
    q = np.array([r.state.position for r in records])
    a = np.array([r.contact.unknowns.a1 for r in records])
    paths = [f"{prefix}_{n}.svg" for n in PLOT_NAMES]

    _line_plot(paths[0], t, [("v_x", v[:, 0])], "v_x [m/s]")
    _line_plot(paths[1], t, [("w_z", w[:, 2])], "w_z [rad/s]")
    _line_plot(paths[2], t, [("q_z", q[:, 2])], "q_z [m]")
    _line_plot(paths[3], t, [("a_x", a[:, 0]), ("a_y", a[:, 1]), ("a_z", a[:, 2])], "contact point [m]")

    touching = np.array([r.diagnostics["in_contact"] for r in records])
    fig = Figure(figsize=(10, 4.5) if body is not None else (5, 4.5))
    ax = fig.add_subplot(1, 2 if body is not None else 1, 1)
    ax.plot(q[:, 0], q[:, 1], color="0.4", lw=1, label="CM")
    ax.scatter(a[touching, 0], a[touching, 1], s=6, color="tab:red", label="contact point")
    ax.set_title("world")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()
    if body is not None:
        ax = fig.add_subplot(1, 2, 2)
        outline = hull_footprint(body)
        closed = np.vstack([outline, outline[:1]])
        ax.plot(closed[:, 0], closed[:, 1], color="k", lw=1, label="hull")
        xy = ecp_body_xy(records)
        ax.scatter(xy[:, 0], xy[:, 1], s=6, color="tab:red", label="contact point")
        ax.set_title("body frame")
        ax.set_aspect("equal", adjustable="datalim")
        ax.legend()
    for axis in fig.axes:
        axis.set_xlabel("x [m]")
        axis.set_ylabel("y [m]")
    fig.tight_layout()
    _save(fig, paths[4])
    return paths


# -- command line ------------------------------------------------------------------


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="ecpsim", description="Rigid-body contact simulation with equivalent contact points.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="simulate one scenario")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="PATH", help="YAML scenario configuration")
    src.add_argument("--scenario", metavar="NAME", help="built-in scenario name")
    r.add_argument("--out", metavar="PATH", help="trajectory CSV (default: <name>.csv)")
    r.add_argument("--plots", action="store_true", help="also write SVG plots next to the CSV")
    r.add_argument("--h", type=float, help="override the time step [s]")
    r.add_argument("--duration", type=float, help="override the duration [s]")
    r.add_argument("--tol", type=float, help="override the solver residual tolerance")
    r.add_argument("--max-iters", type=int, help="override the Newton iteration cap per step")
    r.add_argument("--seed-log", metavar="PATH", help="write per-step solver details as JSON lines")
    r.add_argument("--echo-config", metavar="PATH", help="write the fully resolved configuration")
    r.add_argument("--log-level", default="warn", choices=("error", "warn", "info", "debug"))
    return p


_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _resolve(args):
    if args.scenario is not None:
        try:
            scenario = sc.get_scenario(args.scenario)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    else:
        try:
            scenario = load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read {args.config}: {exc.strerror}") from None
    changes = {k: getattr(args, k) for k in ("h", "duration") if getattr(args, k) is not None}
    solver = {}
    if args.tol is not None:
        solver["tol_residual"] = args.tol
    if args.max_iters is not None:
        solver["max_newton_iters"] = args.max_iters
    if solver:
        changes["solver"] = replace(scenario.solver, **solver)
    return replace(scenario, **changes) if changes else scenario


def _seed_entry(rec):
    u = rec.contact.unknowns
    s = rec.solver
    return {
        "t": rec.time,
        "active_k": int(s["active_k"]),
        "retried": bool(s["retried"]),
        "iterations": int(s["iterations"]),
        "stage_iterations": [int(i) for i in s["stage_iterations"]],
        "skipped_stages": [float(e) for e in s["skipped_stages"]],
        "residual": float(s["residual"]),
        "a1": u.a1.tolist(),
        "a2": u.a2.tolist(),
        "p_n": rec.contact.p_n,
        "active_a1": list(rec.diagnostics["active_a1"]),
    }


def _run(args):
    scenario = _resolve(args)
    out = Path(args.out or f"{scenario.name}.csv")
    if args.echo_config:
        Path(args.echo_config).write_text(serialize_config(scenario))
    records = []
    seed_fh = open(args.seed_log, "w") if args.seed_log else None

    def keep(rec):
        records.append(rec)
        if seed_fh is not None:
            seed_fh.write(json.dumps(_seed_entry(rec)) + "\n")

    code = EXIT_OK
    try:
        simulator.run(scenario, on_record=keep)
    except StepError as exc:
        log.error("solver failure: %s", exc)
        code = EXIT_SOLVER
    except IntegrityError as exc:
        log.error("integrity violation: %s", exc)
        code = EXIT_INTEGRITY
    finally:
        if seed_fh is not None:
            seed_fh.close()
    # a partial trajectory is still written so failures can be inspected
    write_trajectory(records, out)
    log.info("wrote %d steps to %s", len(records), out)
    if args.plots and records:
        prefix = out.with_suffix("")
        for path in emit_plots(records, prefix, scenario.body):
            log.info("wrote %s", path)
    return code


def main(argv=None):
    """Command-line entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help
        return exc.code or EXIT_OK
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ecpsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=_LEVELS[args.log_level], format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (UsageError, ConfigurationError, PreconditionError) as exc:
        print(f"ecpsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main_exit():
    sys.exit(main())
